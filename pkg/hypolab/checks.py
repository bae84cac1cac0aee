"""
Closed-form feasibility checkers for the decay constant, evaluated from declared eigenvalue bounds instead of a grid.

Each checker returns a CheckResult; none of them raises on an infeasible verdict.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from hypolab.errors import SingularMetricError

GOLDEN_RATIO = (1 + math.sqrt(5)) / 2
REMARK_TOLERANCE = 1e-10


def _range(value, name):
    low, high = (float(v) for v in value)
    if low > high:
        raise ValueError(f'Invalid {name} {value}: low should not exceed high.')
    return low, high


class EigenBoundSpec:
    """
    Declared eigenvalue ranges of the model Hessians.

    Attributes:
        u_range (tuple of 2 floats): Range of the eigenvalues of the Hessian of U.
        wxx_range (tuple of 2 floats): Range of the eigenvalues of the xx-Hessian of W.
        wxy_range (tuple of 2 floats): Range of the eigenvalues of the xy-Hessian of W.
        vxx_range (tuple of 2 floats): Range of the eigenvalues of the xx-Hessian of V = U + W. When not given, it is bounded by the sum of 'u_range' and 'wxx_range'.
    """
    def __init__(self, u_range=None, wxx_range=None, wxy_range=None, vxx_range=None):
        self.u_range = _range(u_range, 'u_range') if u_range is not None else None
        self.wxx_range = _range(wxx_range, 'wxx_range') if wxx_range is not None else None
        self.wxy_range = _range(wxy_range, 'wxy_range') if wxy_range is not None else None
        if vxx_range is None and self.u_range is not None and self.wxx_range is not None:
            vxx_range = (self.u_range[0] + self.wxx_range[0], self.u_range[1] + self.wxx_range[1])
        self.vxx_range = _range(vxx_range, 'vxx_range') if vxx_range is not None else None

    def to_dict(self):
        return {'u_range': self.u_range, 'wxx_range': self.wxx_range,
                'wxy_range': self.wxy_range, 'vxx_range': self.vxx_range}


def bounds_from_models(kernel, potential):
    """
    Builds an EigenBoundSpec from the ranges declared by the models.
    """
    return EigenBoundSpec(u_range=potential.hess_range, wxx_range=kernel.hess_xx_range,
                          wxy_range=kernel.hess_xy_range)


@dataclass
class CheckResult:
    """
    Verdict of an analytic checker. 'feasible' is None when the checker was skipped.
    """
    name: str
    condition: str
    feasible: bool = None
    values: dict = field(default_factory=dict)
    note: str = ''

    @property
    def skipped(self):
        return self.feasible is None

    def to_dict(self):
        values = {key: (list(value) if isinstance(value, tuple) else value) for key, value in self.values.items()}
        return {'name': self.name, 'condition': self.condition, 'feasible': self.feasible,
                'values': values, 'note': self.note}


def skipped(name, condition, note='skipped: bounds not declared'):
    return CheckResult(name, condition, feasible=None, note=note)


def check_case1_gershgorin(direction, bounds):
    """
    Gershgorin test for the case where the xx-Hessian of V and the xy-Hessian of W are simultaneously diagonalizable.

    Feasible iff C1 < C2 and C2 > 0, where C1 scales with the largest |eigenvalue| of the xy-Hessian of W and C2 is the smallest diagonal margin over the endpoints of the xx-Hessian range of V. Any value in (C1, C2] is a witness.

    Args:
        direction (DirectionPair): Constants (z1, z2).
        bounds (EigenBoundSpec): The range of the xx-Hessian of V is 'vxx_range' when known. Otherwise 'wxx_range' is read as that range.
    """
    name = 'case1_gershgorin'
    condition = 'C1 < lambda_Wxx <= C2 (Gershgorin, simultaneous diagonalization)'
    v_range = bounds.vxx_range if bounds.vxx_range is not None else bounds.wxx_range
    if v_range is None or bounds.wxy_range is None:
        return skipped(name, condition)

    z1, z2 = direction.z1, direction.z2
    max_wxy = max(abs(bounds.wxy_range[0]), abs(bounds.wxy_range[1]))
    c1 = math.sqrt((z1**2 * z2**2 + z1**4 / 2 + math.sqrt(z1**4 * z2**4 + z1**6 * z2**2)) / 2) * max_wxy

    c = 1 + z1 * z2 + z2**2
    margins = []
    for eig in v_range:
        off = abs(0.5 * (c - z1**2 * eig))
        margins.append(z1 * z2 - off)
        margins.append((1 + z2**2) - z1 * z2 * eig - off)
    c2 = min(margins)

    feasible = c1 < c2 and c2 > 0
    note = '' if z1 != 0 else 'metric singular for z1 = 0'
    return CheckResult(name, condition, feasible,
                       {'C1': c1, 'C2': c2, 'lambda_Wxx_interval': (c1, c2)}, note=note)


def check_case2_schur(z2, lambda_lo, lambda_hi, delta, z1=1.0, stated_threshold=None):
    """
    Schur-complement test for a vanishing xy-Hessian of W with Hessian of V in [lambda_lo, lambda_hi].

    The specialized verdict (z1 = 1) needs z2 in (0, (1 + sqrt 5) / 2), 2 lambda_lo - lambda_hi^2 > 1 - delta and 2 (z2 - z2^2) lambda_lo + 2 z2 + 2 z2^3 - z2^4 - 3 z2^2 > delta. The general verdict evaluates the same determinant condition for the given z1 without the delta split. When 'stated_threshold' is given, whether 2 lambda_lo - lambda_hi^2 exceeds it is reported but not used.
    """
    lambda_lo, lambda_hi = _range((lambda_lo, lambda_hi), 'eigenvalue range')
    spread = 2 * lambda_lo - lambda_hi**2
    mixed = 2 * (z2 - z2**2) * lambda_lo + 2 * z2 + 2 * z2**3 - z2**4 - 3 * z2**2
    z2_ok = 0 < z2 < GOLDEN_RATIO
    feasible = z2_ok and spread > 1 - delta and mixed > delta

    general = (-z1**4 * lambda_hi**2 + 2 * (1 + z1 * z2 - z2**2) * z1**2 * lambda_lo
               + 2 * z1 * z2 + 2 * z1 * z2**3 - 1 - (z1**2 + 2) * z2**2 - z2**4)
    general_feasible = z1 * z2 > 0 and 1 + z1 * z2 - z2**2 > 0 and general > 0

    values = {'z2_in_range': z2_ok,
              'spread': spread,
              'spread_threshold': 1 - delta,
              'mixed': mixed,
              'general': general,
              'general_feasible': general_feasible}
    if stated_threshold is not None:
        values['stated_threshold'] = stated_threshold
        values['exceeds_stated_threshold'] = spread > stated_threshold
    return CheckResult('case2_schur', '2 lambda_lo - lambda_hi^2 > 1 - delta and mixed condition > delta',
                       feasible, values)


def check_example2_interval(direction, lambda_U):
    """
    Returns the open interval of xx-Hessian eigenvalues of W for which the reformulated matrix stays positive when the xy-Hessian of W is negligible: (-2 lambda_U (z2 + r) / z1^3, 2 lambda_U (r - z2) / z1^3) with r = sqrt(z1^2 + z2^2).
    """
    z1, z2 = direction.z1, direction.z2
    if z1 == 0:
        raise SingularMetricError('The eigenvalue interval is undefined for z1 = 0.')
    if not lambda_U > 0:
        raise ValueError('lambda_U should be positive.')
    r = math.sqrt(z1**2 + z2**2)
    return (-2 * lambda_U * (z2 + r) / z1**3, 2 * lambda_U * (r - z2) / z1**3)


def compute_lambda_U(direction, lambda_lo, lambda_hi, samples=101):
    """
    Lower spectral bound of the U-part A2 of the reformulated matrix, as the minimum over t in [lambda_lo, lambda_hi] (sampled, endpoints included) of the smallest eigenvalue of [[z1 z2, (1 + z1 z2 + z2^2 - z1^2 t) / 2], [., 1 + z2^2 - z1 z2 t]].
    """
    z1, z2 = direction.z1, direction.z2
    if z1 == 0:
        raise SingularMetricError('lambda_U is undefined for z1 = 0.')
    lambda_lo, lambda_hi = _range((lambda_lo, lambda_hi), 'eigenvalue range')
    t = np.unique(np.concatenate([np.linspace(lambda_lo, lambda_hi, samples), [lambda_lo, lambda_hi]]))
    off = 0.5 * (1 + z1 * z2 + z2**2 - z1**2 * t)
    matrices = np.empty((t.size, 2, 2))
    matrices[:, 0, 0] = z1 * z2
    matrices[:, 0, 1] = matrices[:, 1, 0] = off
    matrices[:, 1, 1] = 1 + z2**2 - z1 * z2 * t
    return float(np.linalg.eigvalsh(matrices)[:, 0].min())


def check_example2_schur_chain(direction, lambda_U, wxx_eig, wxy_eig):
    """
    Exact leading-minor chain of the reformulated matrix for one eigenpair (wxx_eig, wxy_eig) of the W Hessians, with A2 replaced by lambda_U I.

    D = lambda_U (lambda_U - z1 z2 wxx) - z1^4 wxx^2 / 4 must be positive, then 4 lambda_U D - z1^4 lambda_U wxy^2 and the full second inequality, evaluated without any truncation in wxy.
    """
    z1, z2 = direction.z1, direction.z2
    lam, lt, lw = lambda_U, wxx_eig, wxy_eig
    if not lam > 0:
        raise ValueError('lambda_U should be positive.')

    d = lam * (lam - z1 * z2 * lt) - z1**4 * lt**2 / 4
    alpha = lam - z1 * z2 * lt
    first = 4 * lam * d - z1**4 * lam * lw**2
    second = 4 * d * alpha - (z1**4 * lw**2 * alpha + 2 * z1**5 * z2 * lw**2 * lt + 4 * lam * z1**2 * z2**2 * lw**2)
    cross = 4 * d * z1**2 * lt + 4 * z1**3 * z2 * lw**2 * lam + z1**6 * lw**2 * lt
    full = 4 * first * second - cross**2

    values = {'D': d, 'condition_1': d, 'condition_2a': first, 'condition_2b': full}
    feasible = d > 0 and first > 0 and full > 0
    return CheckResult('example2_schur_chain', 'D > 0, 4 lambda_U D - z1^4 lambda_U wxy^2 > 0 and full second inequality',
                       feasible, values)


def check_remark3(direction, wdiff_eig):
    """
    Upper bound on any achievable decay constant when U = 0 and W(x, y) = W(x - y), from the two Gershgorin rows: min((z1 z2 - 1 - z2^2) / 2, -(z1 z2 - 1 - z2^2) / 2 - 2 z1 z2 wdiff_eig).
    """
    z1, z2 = direction.z1, direction.z2
    s = z1 * z2 - 1 - z2**2
    first = s / 2
    second = -s / 2 - 2 * z1 * z2 * wdiff_eig
    bound = min(first, second)
    return CheckResult('remark3', 'lambda <= min((z1 z2 - 1 - z2^2)/2, -(z1 z2 - 1 - z2^2)/2 - 2 z1 z2 w)',
                       bound > REMARK_TOLERANCE,
                       {'bound': bound, 'first': first, 'second': second})


def run_all(direction, bounds, delta=None, stated_threshold=None, lambda_U=None,
            wxx_eig=None, wxy_eig=None, wdiff_eig=None):
    """
    Runs every closed-form checker whose inputs are available, in a fixed order. Checkers with missing inputs are reported as skipped.

    Args:
        direction (DirectionPair): Constants (z1, z2).
        bounds (EigenBoundSpec): Declared eigenvalue ranges.
        delta (float): Split constant of the Schur test.
        stated_threshold (float): Alternative threshold reported by the Schur test.
        lambda_U (float): Declared lower bound of the U-part. Computed from 'u_range' when omitted.
        wxx_eig, wxy_eig (float): Eigenpair of the W Hessians tested by the Schur chain.
        wdiff_eig (float): Eigenvalue of the difference kernel Hessian used by the infeasibility bound.

    Returns a list of CheckResult.
    """
    results = [check_case1_gershgorin(direction, bounds)]

    name, condition = 'case2_schur', '2 lambda_lo - lambda_hi^2 > 1 - delta and mixed condition > delta'
    if bounds.vxx_range is None or delta is None:
        results.append(skipped(name, condition))
    else:
        result = check_case2_schur(direction.z2, *bounds.vxx_range, delta, z1=direction.z1,
                                   stated_threshold=stated_threshold)
        if bounds.wxy_range is not None and bounds.wxy_range != (0.0, 0.0):
            result.note = 'the test assumes a vanishing xy-Hessian of W'
        results.append(result)

    computed = None
    name, condition = 'lambda_U', 'smallest eigenvalue of the U-part over the declared Hessian range of U'
    if direction.z1 == 0:
        results.append(skipped(name, condition, note='metric singular for z1 = 0'))
    elif bounds.u_range is None:
        results.append(skipped(name, condition))
    else:
        computed = compute_lambda_U(direction, *bounds.u_range)
        results.append(CheckResult(name, condition, computed > 0, {'lambda_U': computed}))

    name, condition = 'example2_interval', 'xx-Hessian eigenvalues of W inside the interval'
    used = lambda_U if lambda_U is not None else computed
    if direction.z1 == 0 or used is None or not used > 0:
        results.append(skipped(name, condition, note='needs z1 != 0 and a positive lambda_U'))
    else:
        values = {'lambda_U': used, 'interval': check_example2_interval(direction, used)}
        if computed is not None and computed > 0:
            values['interval_computed_lambda_U'] = check_example2_interval(direction, computed)
        low, high = values['interval']
        tested = bounds.wxx_range if bounds.wxx_range is not None else (
            (wxx_eig, wxx_eig) if wxx_eig is not None else None)
        feasible = None if tested is None else bool(low < tested[0] and tested[1] < high)
        note = '' if tested is not None else 'interval only: no eigenvalue declared'
        results.append(CheckResult(name, condition, feasible, values, note=note))

    name = 'example2_schur_chain'
    condition = 'D > 0, 4 lambda_U D - z1^4 lambda_U wxy^2 > 0 and full second inequality'
    if used is None or not used > 0 or wxx_eig is None or wxy_eig is None:
        results.append(skipped(name, condition))
    else:
        results.append(check_example2_schur_chain(direction, used, wxx_eig, wxy_eig))

    name = 'remark3'
    condition = 'lambda <= min((z1 z2 - 1 - z2^2)/2, -(z1 z2 - 1 - z2^2)/2 - 2 z1 z2 w)'
    if wdiff_eig is None:
        results.append(skipped(name, condition))
    else:
        results.append(check_remark3(direction, wdiff_eig))
    return results
