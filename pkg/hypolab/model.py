"""
Interaction kernels W(x, y), confinement potentials U(x), position domains and direction pairs (z1, z2).

Every evaluator is vectorized: points are arrays whose last axis has length d, leading axes broadcast. Values have the leading shape, gradients an extra axis of length d and Hessians two extra axes (d, d).
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from hypolab.errors import ConfigError, ModelEvaluationError

logger = logging.getLogger(__name__)

FD_STEP = 1e-4
FD_TOLERANCE = 1e-6


def _as_points(x):
    x = np.asarray(x, dtype=float)
    return x[..., None] if x.ndim == 0 else x


def _diag(values):
    """
    Turns (..., d) diagonal entries into (..., d, d) matrices.
    """
    d = values.shape[-1]
    return values[..., :, None] * np.eye(d)


@dataclass(frozen=True)
class PositionDomain:
    """
    Position domain of the kinetic equation: either the torus [0, period)^d or the symmetric box [-half_width, half_width]^d.

    The line box is a sampling and truncation box. Solvers that need boundary conditions treat it as a periodic cell of width 2*half_width.
    """
    kind: str = 'torus'
    period: float = 2 * np.pi
    half_width: float = None
    dimension: int = 1

    def __post_init__(self):
        if self.kind not in ('torus', 'line'):
            raise ValueError(f"Invalid domain kind '{self.kind}'. Should be one of 'torus' or 'line'.")
        if self.kind == 'torus' and not self.period > 0:
            raise ValueError('Torus period should be positive.')
        if self.kind == 'line' and (self.half_width is None or not self.half_width > 0):
            raise ValueError('Line domain needs a positive half_width.')
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise ValueError('Domain dimension should be a positive integer.')

    @classmethod
    def torus(cls, period=2 * np.pi, dimension=1):
        return cls('torus', period=period, dimension=dimension)

    @classmethod
    def line(cls, half_width, dimension=1):
        return cls('line', half_width=half_width, dimension=dimension)

    @property
    def lower(self):
        return 0.0 if self.kind == 'torus' else -self.half_width

    @property
    def length(self):
        return self.period if self.kind == 'torus' else 2 * self.half_width

    def wrap(self, points):
        """
        Maps points into [lower, lower + length). Idempotent.
        """
        shifted = np.mod(np.asarray(points, dtype=float) - self.lower, self.length)
        shifted = np.where(shifted >= self.length, shifted - self.length, shifted)
        return shifted + self.lower

    def nodes(self, n):
        """
        Returns n equispaced nodes per axis, starting at 'lower' with spacing length/n.
        """
        if n < 1:
            raise ValueError('Number of nodes should be positive.')
        return self.lower + np.arange(n) * (self.length / n)

    def sample(self, n, rng):
        """
        Draws n uniform points of shape (n, d).

        Args:
            n (int): Number of points.
            rng (numpy.random.Generator): Source of randomness.
        """
        return self.lower + self.length * rng.random((n, self.dimension))

    def to_dict(self):
        if self.kind == 'torus':
            return {'kind': 'torus', 'period': self.period, 'dimension': self.dimension}
        return {'kind': 'line', 'half_width': self.half_width, 'dimension': self.dimension}


@dataclass(frozen=True)
class DirectionPair:
    """
    The constants (z1, z2) building the direction matrices a = (0; I) and z = (z1 I; z2 I).
    """
    z1: float
    z2: float

    def a(self, d=1):
        return np.vstack([np.zeros((d, d)), np.eye(d)])

    def z(self, d=1):
        return np.vstack([self.z1 * np.eye(d), self.z2 * np.eye(d)])

    def metric(self, d=1):
        return metric_block(self, d)

    def to_dict(self):
        return {'z1': self.z1, 'z2': self.z2}


def metric_block(direction, d=1):
    """
    Returns aa^T + zz^T = [[z1^2 I, z1 z2 I], [z1 z2 I, (1 + z2^2) I]] as a 2d x 2d array.
    """
    z1, z2 = direction.z1, direction.z2
    eye = np.eye(d)
    return np.block([[z1**2 * eye, z1 * z2 * eye],
                     [z1 * z2 * eye, (1 + z2**2) * eye]])


class KernelModel:
    """
    Symmetric interaction kernel W(x, y) = W(y, x).

    Subclasses implement 'value', 'grad_x', 'hess_xx' and 'hess_xy' and may declare eigenvalue ranges of the Hessians through 'hess_xx_range' and 'hess_xy_range' (None when unknown). The entry [..., i, k] of 'hess_xy' is the derivative with respect to x_i and y_k.
    """
    name = 'kernel'
    hess_xx_range = None
    hess_xy_range = None
    sup_abs = None

    def value(self, x, y):
        raise NotImplementedError

    def grad_x(self, x, y):
        raise NotImplementedError

    def hess_xx(self, x, y):
        raise NotImplementedError

    def hess_xy(self, x, y):
        raise NotImplementedError

    def mean_field_gradient(self, targets, sources, chunk_size=512):
        """
        Computes (1/M) sum_j grad_x W(targets_i, sources_j) for every target by direct summation, chunked over targets.

        Args:
            targets (array of shape (N, d)): Points where the force is evaluated.
            sources (array of shape (M, d)): Empirical measure, equally weighted.
            chunk_size (int): Number of targets processed at once.

        Returns an array of shape (N, d).
        """
        targets, sources = _as_points(targets), _as_points(sources)
        out = np.empty_like(targets)
        for start in range(0, len(targets), chunk_size):
            block = targets[start:start + chunk_size]
            out[start:start + chunk_size] = self.grad_x(block[:, None, :], sources[None, :, :]).mean(axis=1)
        return out

    def params(self):
        return {}

    def __repr__(self):
        params = ', '.join(f'{key}={value}' for key, value in self.params().items())
        return f'{self.__class__.__name__}({params})'


class PotentialModel:
    """
    Confinement potential U(x). Subclasses implement 'value', 'grad' and 'hess' and declare 'hess_range' when known.
    """
    name = 'potential'
    hess_range = None
    periodic = True

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def hess(self, x):
        raise NotImplementedError

    def params(self):
        return {}

    def __repr__(self):
        params = ', '.join(f'{key}={value}' for key, value in self.params().items())
        return f'{self.__class__.__name__}({params})'


@dataclass(frozen=True, repr=False)
class ZeroKernel(KernelModel):
    name = 'zero'
    hess_xx_range = (0.0, 0.0)
    hess_xy_range = (0.0, 0.0)
    sup_abs = 0.0

    def value(self, x, y):
        x, y = np.broadcast_arrays(_as_points(x), _as_points(y))
        return np.zeros(x.shape[:-1])

    def grad_x(self, x, y):
        x, y = np.broadcast_arrays(_as_points(x), _as_points(y))
        return np.zeros(x.shape)

    def hess_xx(self, x, y):
        x, y = np.broadcast_arrays(_as_points(x), _as_points(y))
        return np.zeros(x.shape + x.shape[-1:])

    hess_xy = hess_xx

    def mean_field_gradient(self, targets, sources, chunk_size=512):
        return np.zeros_like(_as_points(targets))


@dataclass(frozen=True, repr=False)
class DifferenceKernel(KernelModel):
    """
    W(x, y) = alpha * sum_i cos(omega (x_i - y_i)).
    """
    alpha: float = 1.0
    omega: float = 1.0
    name = 'difference'

    def _phase(self, x, y):
        return self.omega * (_as_points(x) - _as_points(y))

    def value(self, x, y):
        return self.alpha * np.cos(self._phase(x, y)).sum(axis=-1)

    def grad_x(self, x, y):
        return -self.alpha * self.omega * np.sin(self._phase(x, y))

    def hess_xx(self, x, y):
        return _diag(-self.alpha * self.omega**2 * np.cos(self._phase(x, y)))

    def hess_xy(self, x, y):
        return _diag(self.alpha * self.omega**2 * np.cos(self._phase(x, y)))

    @property
    def hess_xx_range(self):
        bound = abs(self.alpha) * self.omega**2
        return (-bound, bound)

    hess_xy_range = hess_xx_range

    @property
    def sup_abs(self):
        return abs(self.alpha)

    def mean_field_gradient(self, targets, sources, chunk_size=512):
        # sin(w(x - y)) = sin(wx) cos(wy) - cos(wx) sin(wy)
        targets, sources = _as_points(targets), _as_points(sources)
        mean_cos = np.cos(self.omega * sources).mean(axis=0)
        mean_sin = np.sin(self.omega * sources).mean(axis=0)
        phase = self.omega * targets
        return -self.alpha * self.omega * (np.sin(phase) * mean_cos - np.cos(phase) * mean_sin)

    def params(self):
        return {'alpha': self.alpha, 'omega': self.omega}


_PROFILES = {
    # g, g', g''
    'cos': (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)),
    'sin': (np.sin, np.cos, lambda x: -np.sin(x)),
}


@dataclass(frozen=True, repr=False)
class SeparableKernel(KernelModel):
    """
    W(x, y) = beta * sum_i g(x_i) g(y_i) with g either cos or sin.
    """
    beta: float = 1.0
    profile: str = 'cos'
    name = 'separable'

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ValueError(f"Invalid profile '{self.profile}'. Should be one of {sorted(_PROFILES)}.")

    def value(self, x, y):
        g, _, _ = _PROFILES[self.profile]
        return self.beta * (g(_as_points(x)) * g(_as_points(y))).sum(axis=-1)

    def grad_x(self, x, y):
        g, dg, _ = _PROFILES[self.profile]
        return self.beta * dg(_as_points(x)) * g(_as_points(y))

    def hess_xx(self, x, y):
        g, _, d2g = _PROFILES[self.profile]
        return _diag(self.beta * d2g(_as_points(x)) * g(_as_points(y)))

    def hess_xy(self, x, y):
        _, dg, _ = _PROFILES[self.profile]
        return _diag(self.beta * dg(_as_points(x)) * dg(_as_points(y)))

    @property
    def hess_xx_range(self):
        return (-abs(self.beta), abs(self.beta))

    hess_xy_range = hess_xx_range

    @property
    def sup_abs(self):
        return abs(self.beta)

    def mean_field_gradient(self, targets, sources, chunk_size=512):
        g, dg, _ = _PROFILES[self.profile]
        return self.beta * dg(_as_points(targets)) * g(_as_points(sources)).mean(axis=0)

    def params(self):
        return {'beta': self.beta, 'profile': self.profile}


@dataclass(frozen=True, repr=False)
class ZeroPotential(PotentialModel):
    name = 'zero'
    hess_range = (0.0, 0.0)

    def value(self, x):
        return np.zeros(_as_points(x).shape[:-1])

    def grad(self, x):
        return np.zeros(_as_points(x).shape)

    def hess(self, x):
        x = _as_points(x)
        return np.zeros(x.shape + x.shape[-1:])


@dataclass(frozen=True, repr=False)
class CosinePotential(PotentialModel):
    """
    U(x) = kappa * sum_i (1 - cos x_i).
    """
    kappa: float = 1.0
    name = 'cosine'

    def value(self, x):
        return self.kappa * (1 - np.cos(_as_points(x))).sum(axis=-1)

    def grad(self, x):
        return self.kappa * np.sin(_as_points(x))

    def hess(self, x):
        return _diag(self.kappa * np.cos(_as_points(x)))

    @property
    def hess_range(self):
        return (-abs(self.kappa), abs(self.kappa))

    def params(self):
        return {'kappa': self.kappa}


@dataclass(frozen=True, repr=False)
class QuadraticPotential(PotentialModel):
    """
    U(x) = kappa |x|^2 / 2. Not periodic, so it is only declared on line domains.
    """
    kappa: float = 1.0
    name = 'quadratic'
    periodic = False

    def value(self, x):
        return 0.5 * self.kappa * (_as_points(x)**2).sum(axis=-1)

    def grad(self, x):
        return self.kappa * _as_points(x)

    def hess(self, x):
        x = _as_points(x)
        return self.kappa * np.broadcast_to(np.eye(x.shape[-1]), x.shape + x.shape[-1:]).copy()

    @property
    def hess_range(self):
        return (self.kappa, self.kappa)

    def params(self):
        return {'kappa': self.kappa}


BUILTIN_KERNELS = {cls.name: cls for cls in (ZeroKernel, DifferenceKernel, SeparableKernel)}
BUILTIN_POTENTIALS = {cls.name: cls for cls in (ZeroPotential, CosinePotential, QuadraticPotential)}


def _make(registry, what, name, params):
    if name not in registry:
        raise ConfigError(f"Unknown {what} '{name}'. Available builtins are {sorted(registry)}.")
    try:
        return registry[name](**params)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"Invalid parameters {params} for {what} '{name}': {err}") from err


def make_kernel(name, **params):
    """
    Instanciates a builtin kernel by name, e.g. make_kernel('difference', alpha=0.2).
    """
    return _make(BUILTIN_KERNELS, 'kernel', name, params)


def make_potential(name, **params):
    """
    Instanciates a builtin potential by name, e.g. make_potential('cosine', kappa=0.5).
    """
    return _make(BUILTIN_POTENTIALS, 'potential', name, params)


@dataclass
class ValidationReport:
    """
    Result of 'validate_model'. 'defects' maps each check to its maximal defect; relative defects use max(1, |analytic|) as scale.
    """
    defects: dict = field(default_factory=dict)
    tolerance: float = FD_TOLERANCE
    samples: int = 0

    @property
    def passed(self):
        return all(value <= self.tolerance for value in self.defects.values())

    @property
    def failures(self):
        return [name for name, value in self.defects.items() if value > self.tolerance]

    def to_dict(self):
        return {'passed': self.passed,
                'tolerance': self.tolerance,
                'samples': self.samples,
                'defects': dict(self.defects)}


def _checked(values, what, x, y=None):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values.reshape(len(x), -1)))[0][0]
        point = (x[bad].tolist(),) if y is None else (x[bad].tolist(), y[bad].tolist())
        raise ModelEvaluationError(f'Non-finite output of {what}', point=point)
    return values


def _relative_defect(analytic, numeric):
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic)), initial=0.0))


def validate_model(kernel, potential, domain, samples=32, seed=0, step=FD_STEP, tolerance=FD_TOLERANCE):
    """
    Checks analytic derivatives of a kernel and a potential against central finite differences at random points of the domain, along with the symmetry and periodicity of the evaluators.

    Gradients are checked against differences of 'value'; Hessians against differences of the gradients. The identity between the yy-Hessian of W at (y, x) and hess_xx(x, y) is checked with second differences of 'value'.

    Args:
        kernel (KernelModel): Interaction kernel.
        potential (PotentialModel): Confinement potential.
        domain (PositionDomain): Sampling domain.
        samples (int): Number of sampled (x, y) pairs.
        seed (int): Seed of the sampling generator.
        step (float): Finite difference step.
        tolerance (float): Maximal accepted defect.

    Returns a ValidationReport.
    """
    if samples < 1:
        raise ValueError('At least one sample is needed.')
    rng = np.random.default_rng(seed)
    x = domain.sample(samples, rng)
    y = domain.sample(samples, rng)
    d = domain.dimension
    eye = np.eye(d)

    w = _checked(kernel.value(x, y), 'kernel value', x, y)
    w_swap = _checked(kernel.value(y, x), 'kernel value', y, x)
    grad = _checked(kernel.grad_x(x, y), 'kernel gradient', x, y)
    h_xx = _checked(kernel.hess_xx(x, y), 'kernel hess_xx', x, y)
    h_xy = _checked(kernel.hess_xy(x, y), 'kernel hess_xy', x, y)
    u = _checked(potential.value(x), 'potential value', x)
    u_grad = _checked(potential.grad(x), 'potential gradient', x)
    u_hess = _checked(potential.hess(x), 'potential hess', x)

    fd_grad = np.empty_like(grad)
    fd_hxx = np.empty_like(h_xx)
    fd_hxy = np.empty_like(h_xy)
    fd_hyy_swapped = np.empty_like(h_xx)
    fd_u_grad = np.empty_like(u_grad)
    fd_u_hess = np.empty_like(u_hess)
    for k in range(d):
        e = step * eye[k]
        fd_grad[:, k] = (kernel.value(x + e, y) - kernel.value(x - e, y)) / (2 * step)
        fd_hxx[:, :, k] = (kernel.grad_x(x + e, y) - kernel.grad_x(x - e, y)) / (2 * step)
        fd_hxy[:, :, k] = (kernel.grad_x(x, y + e) - kernel.grad_x(x, y - e)) / (2 * step)
        fd_u_grad[:, k] = (potential.value(x + e) - potential.value(x - e)) / (2 * step)
        fd_u_hess[:, :, k] = (potential.grad(x + e) - potential.grad(x - e)) / (2 * step)
        for l in range(d):
            f = step * eye[l]
            # d^2 W(y, x) / dx_k dx_l, i.e. the yy-Hessian of W evaluated at (y, x)
            fd_hyy_swapped[:, k, l] = (kernel.value(y, x + e + f) - kernel.value(y, x + e - f)
                                       - kernel.value(y, x - e + f) + kernel.value(y, x - e - f)) / (4 * step**2)

    report = ValidationReport(tolerance=tolerance, samples=samples)
    report.defects['kernel_symmetry'] = float(np.max(np.abs(w - w_swap)))
    report.defects['kernel_grad_x'] = _relative_defect(grad, fd_grad)
    report.defects['kernel_hess_xx'] = _relative_defect(h_xx, fd_hxx)
    report.defects['kernel_hess_xy'] = _relative_defect(h_xy, fd_hxy)
    report.defects['kernel_hess_xx_symmetry'] = float(np.max(np.abs(h_xx - np.swapaxes(h_xx, -1, -2))))
    report.defects['kernel_hess_yy_swap'] = _relative_defect(h_xx, fd_hyy_swapped)
    report.defects['potential_grad'] = _relative_defect(u_grad, fd_u_grad)
    report.defects['potential_hess'] = _relative_defect(u_hess, fd_u_hess)

    if domain.kind == 'torus':
        shift_defects = [0.0]
        for k in range(d):
            e = domain.period * eye[k]
            shift_defects.append(np.max(np.abs(kernel.value(x + e, y) - w)))
            shift_defects.append(np.max(np.abs(kernel.value(x, y + e) - w)))
            shift_defects.append(np.max(np.abs(potential.value(x + e) - u)))
        report.defects['periodicity'] = float(max(shift_defects))

    if report.passed:
        logger.debug('Model %r / %r passed validation on %d samples', kernel, potential, samples)
    else:
        logger.warning('Model %r / %r failed validation: %s', kernel, potential, ', '.join(report.failures))
    return report
