"""
Phase-space discretization of the kinetic equation at d = 1, the nonlinear Gibbs equilibrium and the Lyapunov functionals evaluated on a grid.
"""
import json
import logging

import numpy as np

from hypolab.errors import ConvergenceError, DensityDomainError, GridError, ModelEvaluationError
from hypolab.model import PositionDomain

logger = logging.getLogger(__name__)

DENSITY_FLOOR = 1e-300
MASS_TOLERANCE = 1e-8
MIN_VMAX = 5.0


class PhaseGrid:
    """
    Tensor grid over (x, v). The x nodes are periodic with spacing hx = length/nx, the v nodes span [-vmax, vmax] with nv points. Quadrature is uniform in x and trapezoidal in v.
    """
    def __init__(self, domain, nx, nv, vmax=6.0):
        """
        Args:
            domain (PositionDomain): One dimensional position domain. A line box is treated as a periodic cell.
            nx (int): Number of x nodes.
            nv (int): Number of v nodes, including both endpoints.
            vmax (float): Velocity truncation, at least 5.
        """
        if domain.dimension != 1:
            raise GridError('Phase grids are only implemented for d = 1.')
        if int(nx) != nx or nx < 2 or int(nv) != nv or nv < 3:
            raise GridError(f'Invalid grid size nx={nx}, nv={nv}.')
        if vmax < MIN_VMAX:
            raise GridError(f'vmax should be at least {MIN_VMAX} to keep the Gaussian tail negligible, got {vmax}.')
        self.domain = domain
        self.nx = int(nx)
        self.nv = int(nv)
        self.vmax = float(vmax)

        self.hx = domain.length / self.nx
        self.x = domain.nodes(self.nx)
        self.v = np.linspace(-self.vmax, self.vmax, self.nv)
        self.hv = 2 * self.vmax / (self.nv - 1)
        self.wv = np.full(self.nv, self.hv)
        self.wv[[0, -1]] = self.hv / 2
        self.weights = self.hx * self.wv[None, :] * np.ones((self.nx, 1))

    @property
    def shape(self):
        return (self.nx, self.nv)

    @property
    def points(self):
        """
        x nodes as points of shape (nx, 1).
        """
        return self.x[:, None]

    def integrate(self, values):
        return float(np.sum(self.weights * values))

    def marginal(self, values):
        """
        x-marginal sum_j wv_j f(x_i, v_j).
        """
        return values @ self.wv

    def grad_x(self, values):
        """
        Periodic centered difference along x.
        """
        return (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2 * self.hx)

    def grad_v(self, values):
        """
        Centered difference along v, one-sided at +-vmax.
        """
        return np.gradient(values, self.hv, axis=1, edge_order=1)

    def gaussian(self):
        """
        Standard Gaussian profile in v normalized by the v quadrature.
        """
        profile = np.exp(-0.5 * self.v**2)
        return profile / (profile @ self.wv)

    def same_as(self, other):
        return (self.domain == other.domain and self.nx == other.nx and self.nv == other.nv
                and self.vmax == other.vmax)

    def to_dict(self):
        return {'domain': self.domain.to_dict(), 'nx': self.nx, 'nv': self.nv, 'vmax': self.vmax}

    @classmethod
    def from_dict(cls, data):
        return cls(PositionDomain(**data['domain']), data['nx'], data['nv'], data['vmax'])

    def __repr__(self):
        return f'PhaseGrid(nx={self.nx}, nv={self.nv}, vmax={self.vmax}, domain={self.domain.kind})'


class DensityField:
    """
    Density values f(x_i, v_j) on a PhaseGrid, stored as an array of shape (nx, nv).
    """
    def __init__(self, values, grid):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise ValueError(f'Density of shape {values.shape} does not match grid of shape {grid.shape}.')
        if not np.all(np.isfinite(values)):
            raise DensityDomainError('Density values should be finite.')
        self.values = values
        self.grid = grid

    @property
    def mass(self):
        return self.grid.integrate(self.values)

    @property
    def rho(self):
        return self.grid.marginal(self.values)

    @property
    def min(self):
        return float(self.values.min())

    def normalized(self):
        mass = self.mass
        if not mass > 0:
            raise DensityDomainError(f'Cannot normalize a density of mass {mass}.')
        return DensityField(self.values / mass, self.grid)

    def is_normalized(self, tolerance=MASS_TOLERANCE):
        return abs(self.mass - 1) <= tolerance

    def moment_v(self, order=1):
        return self.grid.integrate(self.values * self.grid.v[None, :]**order)

    def copy(self):
        return DensityField(self.values.copy(), self.grid)

    def to_csv(self, path):
        """
        Writes the columns x, v, f with one row per node, x major.
        """
        x, v = np.meshgrid(self.grid.x, self.grid.v, indexing='ij')
        data = np.column_stack([x.ravel(), v.ravel(), self.values.ravel()])
        np.savetxt(path, data, delimiter=',', header='x,v,f', comments='', fmt='%.17g')

    @classmethod
    def from_csv(cls, path, grid):
        data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
        if len(data) != grid.nx * grid.nv:
            raise GridError(f'{path} holds {len(data)} nodes, expected {grid.nx * grid.nv}.')
        x = data[:, 0].reshape(grid.shape)[:, 0]
        v = data[:, 1].reshape(grid.shape)[0]
        if not (np.allclose(x, grid.x, atol=1e-12) and np.allclose(v, grid.v, atol=1e-12)):
            raise GridError(f'The nodes of {path} do not match {grid}.')
        return cls(data[:, 2].reshape(grid.shape), grid)

    def __repr__(self):
        return f'DensityField({self.grid}, mass={self.mass:.10g})'


def interaction_matrix(kernel, grid):
    """
    Returns K[i, j] = W(x_i, x_j) on the x nodes.
    """
    points = grid.points
    matrix = np.asarray(kernel.value(points[:, None, :], points[None, :, :]), dtype=float)
    if not np.all(np.isfinite(matrix)):
        i, j = np.argwhere(~np.isfinite(matrix))[0]
        raise ModelEvaluationError('Non-finite kernel value', point=(points[i].tolist(), points[j].tolist()))
    return matrix


def force_matrix(kernel, grid):
    """
    Returns G[i, j] = d/dx W(x_i, x_j), so that the mean-field force is G @ (rho hx).
    """
    points = grid.points
    matrix = np.asarray(kernel.grad_x(points[:, None, :], points[None, :, :]), dtype=float)[..., 0]
    if not np.all(np.isfinite(matrix)):
        i, j = np.argwhere(~np.isfinite(matrix))[0]
        raise ModelEvaluationError('Non-finite kernel gradient', point=(points[i].tolist(), points[j].tolist()))
    return matrix


def _potential_on(potential, grid):
    values = np.asarray(potential.value(grid.points), dtype=float)
    if not np.all(np.isfinite(values)):
        i = int(np.argmin(np.isfinite(values)))
        raise ModelEvaluationError('Non-finite potential value', point=(grid.points[i].tolist(),))
    return values


def _check_nonnegative(field):
    if field.min < 0:
        raise DensityDomainError(f'Density has negative entries (min {field.min:.3e}).')


class Landscape:
    """
    Kernel and potential tabulated on a PhaseGrid. All functionals are evaluated through it so that the quadrature and difference stencils are shared by the equilibrium, the diagnostics and the solver.
    """
    def __init__(self, kernel, potential, grid):
        self.kernel = kernel
        self.potential = potential
        self.grid = grid
        self.K = interaction_matrix(kernel, grid)
        self.U = _potential_on(potential, grid)
        self.gradU = np.asarray(potential.grad(grid.points), dtype=float)[:, 0]
        self._force = None

    @property
    def force_matrix(self):
        if self._force is None:
            self._force = force_matrix(self.kernel, self.grid)
        return self._force

    def mean_field(self, rho):
        """
        (W * rho)(x_i) by direct quadrature.
        """
        return self.K @ (rho * self.grid.hx)

    def mean_field_force(self, rho):
        """
        d/dx (U + W * rho) on the x nodes.
        """
        return self.gradU + self.force_matrix @ (rho * self.grid.hx)

    def interaction_energy(self, rho):
        return 0.5 * self.grid.hx**2 * float(rho @ self.K @ rho)

    def free_energy(self, field):
        _check_nonnegative(field)
        grid, f = self.grid, field.values
        rho = field.rho
        entropy = grid.integrate(f * np.log(np.maximum(f, DENSITY_FLOOR)))
        kinetic = grid.integrate(0.5 * grid.v[None, :]**2 * f)
        confinement = grid.hx * float(self.U @ rho)
        return entropy + kinetic + self.interaction_energy(rho) + confinement

    def variation(self, field, floor=DENSITY_FLOOR):
        grid = self.grid
        log_f = np.log(np.maximum(field.values, floor))
        return log_f + 1 + 0.5 * grid.v[None, :]**2 + (self.mean_field(field.rho) + self.U)[:, None]

    def fisher_a(self, field):
        xi = self.variation(field)
        return self.grid.integrate(field.values * self.grid.grad_v(xi)**2)

    def fisher_z(self, field, direction):
        xi = self.variation(field)
        flux = direction.z1 * self.grid.grad_x(xi) + direction.z2 * self.grid.grad_v(xi)
        return self.grid.integrate(field.values * flux**2)

    def fisher_az(self, field, direction):
        """
        Returns (DE_a, DE_z) from a single evaluation of the variation.
        """
        grid = self.grid
        xi = self.variation(field)
        dv = grid.grad_v(xi)
        dx = grid.grad_x(xi)
        de_a = grid.integrate(field.values * dv**2)
        de_z = grid.integrate(field.values * (direction.z1 * dx + direction.z2 * dv)**2)
        return de_a, de_z

    def hamiltonian_work(self, field):
        grid = self.grid
        xi = self.variation(field)
        force = self.mean_field_force(field.rho)
        integrand = -grid.v[None, :] * grid.grad_x(xi) + force[:, None] * grid.grad_v(xi)
        return grid.integrate(field.values * integrand)


class Equilibrium:
    """
    Nonlinear Gibbs equilibrium f_inf(x, v) = exp(-v^2/2 - (W * rho)(x) - U(x)) / Z.

    Attributes:
        rho_inf (array of shape (nx,)): x-marginal of f_inf.
        f_inf (DensityField): Equilibrium density.
        Z (float): Normalization constant, with log_Z its logarithm.
        residual (float): Final sup-norm self-consistency residual.
        iterations (int): Number of fixed-point iterations.
        residual_history (list of float): Residual at each iteration.
        mean_field (array of shape (nx,)): The W * rho used to build f_inf.
    """
    def __init__(self, rho_inf, f_inf, log_Z, residual, iterations, residual_history=None,
                 mean_field=None, kernel=None, potential=None):
        self.rho_inf = rho_inf
        self.f_inf = f_inf
        self.log_Z = float(log_Z)
        self.residual = float(residual)
        self.iterations = int(iterations)
        self.residual_history = residual_history or []
        self.mean_field = mean_field
        self.kernel = kernel
        self.potential = potential

    @property
    def Z(self):
        return float(np.exp(self.log_Z))

    @property
    def grid(self):
        return self.f_inf.grid

    def metadata(self):
        return {'Z': self.Z, 'log_Z': self.log_Z, 'residual': self.residual,
                'iterations': self.iterations, 'grid': self.grid.to_dict()}

    def to_csv(self, path):
        """
        Writes a JSON header line followed by the columns x, rho_inf.
        """
        with open(path, 'w', encoding='utf8') as file:
            file.write('# ' + json.dumps(self.metadata()) + '\n')
            np.savetxt(file, np.column_stack([self.grid.x, self.rho_inf]), delimiter=',',
                       header='x,rho_inf', comments='', fmt='%.17g')

    @classmethod
    def from_csv(cls, path):
        """
        Reads an equilibrium written by 'to_csv'. The density is rebuilt as rho_inf(x) times the normalized Gaussian in v.
        """
        with open(path, 'r', encoding='utf8') as file:
            header = json.loads(file.readline()[1:])
            data = np.loadtxt(file, delimiter=',', skiprows=1, ndmin=2)
        grid = PhaseGrid.from_dict(header['grid'])
        rho = data[:, 1]
        f_inf = DensityField(rho[:, None] * grid.gaussian()[None, :], grid)
        return cls(rho, f_inf, header['log_Z'], header['residual'], header['iterations'])

    def __repr__(self):
        return f'Equilibrium(Z={self.Z:.10g}, residual={self.residual:.3e}, iterations={self.iterations})'


def _normalize_x(values, hx):
    return values / (values.sum() * hx)


def _gibbs_marginal(landscape, rho):
    exponent = -landscape.U - landscape.mean_field(rho)
    return _normalize_x(np.exp(exponent - exponent.max()), landscape.grid.hx)


def fixed_point(kernel, potential, grid, tol=1e-10, max_iter=1000, damping=0.5):
    """
    Damped Picard iteration for the equilibrium marginal rho = T(rho), T(rho) proportional to exp(-U - W * rho).

    Starts from rho proportional to exp(-U). At each iteration the residual |rho - T(rho)|_inf is recorded; the iteration stops once it is below 'tol', otherwise rho <- damping T(rho) + (1 - damping) rho.

    Args:
        kernel (KernelModel): Interaction kernel.
        potential (PotentialModel): Confinement potential.
        grid (PhaseGrid): Phase grid.
        tol (float): Sup-norm residual tolerance.
        max_iter (int): Iteration budget.
        damping (float): Relaxation parameter in (0, 1].

    Returns an Equilibrium. Raises ConvergenceError when the budget is exhausted.
    """
    if not tol > 0:
        raise ValueError('tol should be positive.')
    if max_iter < 1:
        raise ValueError('max_iter should be at least 1.')
    if not 0 < damping <= 1:
        raise ValueError('damping should be in (0, 1].')

    landscape = Landscape(kernel, potential, grid)
    rho = _normalize_x(np.exp(-(landscape.U - landscape.U.min())), grid.hx)
    history = []
    for iteration in range(1, max_iter + 1):
        image = _gibbs_marginal(landscape, rho)
        residual = float(np.max(np.abs(rho - image)))
        history.append(residual)
        logger.debug('Fixed point iteration %d: residual %.3e', iteration, residual)
        if residual <= tol:
            break
        rho = damping * image + (1 - damping) * rho
    else:
        raise ConvergenceError('Fixed point iteration did not converge', residual=residual, iterations=max_iter)

    mean_field = landscape.mean_field(rho)
    exponent = -0.5 * grid.v[None, :]**2 - (mean_field + landscape.U)[:, None]
    shift = exponent.max()
    log_Z = shift + np.log(grid.integrate(np.exp(exponent - shift)))
    f_inf = DensityField(np.exp(exponent - log_Z), grid)
    logger.info('Equilibrium reached after %d iterations (residual %.3e, log Z %.10g)', iteration, residual, log_Z)
    return Equilibrium(f_inf.rho, f_inf, log_Z, residual, iteration, history, mean_field, kernel, potential)


def free_energy(f, kernel, potential):
    """
    E(f) = int f log f + int v^2/2 f + 1/2 int int W f f' + int U f by grid quadrature, with 0 log 0 = 0.

    Raises DensityDomainError on negative entries.
    """
    return Landscape(kernel, potential, f.grid).free_energy(f)


def variation(f, kernel, potential, floor=DENSITY_FLOOR):
    """
    Returns the first variation xi = log f + 1 + v^2/2 + W * rho + U as an array of shape (nx, nv). Values below 'floor' are floored inside the logarithm.
    """
    return Landscape(kernel, potential, f.grid).variation(f, floor)


def fisher_a(f, kernel, potential):
    """
    DE_a(f) = int |d_v xi|^2 f.
    """
    return Landscape(kernel, potential, f.grid).fisher_a(f)


def fisher_z(f, kernel, potential, direction):
    """
    DE_z(f) = int |z1 d_x xi + z2 d_v xi|^2 f.
    """
    return Landscape(kernel, potential, f.grid).fisher_z(f, direction)


def hamiltonian_work(f, kernel, potential):
    """
    Work of the Hamiltonian transport on the free energy, int f <grad xi, J grad H> with H = v^2/2 + W * rho + U and J the symplectic rotation. It vanishes up to discretization for any density since the transport part of the flux conserves E.
    """
    return Landscape(kernel, potential, f.grid).hamiltonian_work(f)


def l1_distance(f, g):
    if not f.grid.same_as(g.grid):
        raise GridError('Densities live on different grids.')
    return f.grid.integrate(np.abs(f.values - g.values))


def kl_divergence(f, g, floor=DENSITY_FLOOR):
    """
    int f log(f / g), with both densities floored inside the logarithm.
    """
    _check_nonnegative(f)
    ratio = np.log(np.maximum(f.values, floor)) - np.log(np.maximum(g.values, floor))
    return f.grid.integrate(f.values * ratio)


def _equilibrium_landscape(eq, kernel=None, potential=None):
    kernel = kernel if kernel is not None else eq.kernel
    potential = potential if potential is not None else eq.potential
    if kernel is None or potential is None:
        raise ValueError('The equilibrium does not carry its models, pass them explicitly.')
    return Landscape(kernel, potential, eq.grid)


def energy_gap_identity(f, eq, kernel=None, potential=None):
    """
    Evaluates both sides of E(f) - E(f_inf) = KL(f | f_inf) + 1/2 int int W (f - f_inf)(f' - f_inf').

    Returns a dict with 'direct_gap', 'kl_term', 'quad_term' and 'defect' = direct_gap - kl_term - quad_term.
    """
    landscape = _equilibrium_landscape(eq, kernel, potential)
    direct_gap = landscape.free_energy(f) - landscape.free_energy(eq.f_inf)
    kl_term = kl_divergence(f, eq.f_inf)
    quad_term = landscape.interaction_energy(f.rho - eq.rho_inf)
    return {'direct_gap': direct_gap,
            'kl_term': kl_term,
            'quad_term': quad_term,
            'defect': direct_gap - kl_term - quad_term}


def ckp_check(f, eq, C_W=None, kernel=None, potential=None):
    """
    Checks the lower bound E(f) - E(f_inf) >= (1 - C_W)/2 |f - f_inf|_1^2 obtained from the Csiszar-Kullback-Pinsker inequality.

    Args:
        f (DensityField): Normalized density.
        eq (Equilibrium): Equilibrium of the same model.
        C_W (float): Bound on |W|. Defaults to the maximum of |W| over the x nodes.

    Returns a dict with 'gap', 'l1', 'lower_bound', 'C_W', 'applicable' and 'holds'. When C_W >= 1 the bound is inapplicable and 'holds' is None.
    """
    landscape = _equilibrium_landscape(eq, kernel, potential)
    if C_W is None:
        C_W = float(np.max(np.abs(landscape.K)))
    gap = landscape.free_energy(f) - landscape.free_energy(eq.f_inf)
    l1 = l1_distance(f, eq.f_inf)
    result = {'gap': gap, 'l1': l1, 'C_W': C_W}
    if C_W >= 1:
        logger.warning('CKP bound inapplicable: C_W = %g >= 1', C_W)
        result.update(lower_bound=None, applicable=False, holds=None)
        return result
    lower_bound = 0.5 * (1 - C_W) * l1**2
    result.update(lower_bound=lower_bound, applicable=True, holds=gap >= lower_bound - 1e-9)
    return result


def derived_l1_constant(lambda_, C_W):
    """
    Constant C of the L1 decay |f_t - f_inf|_1 <= C exp(-lambda t) obtained by chaining the entropy decay with the CKP bound, sqrt(1 / (lambda (1 - C_W))). This is a reconstruction, the constant is not given in closed form elsewhere.
    """
    if not lambda_ > 0:
        raise ValueError('lambda should be positive.')
    if not C_W < 1:
        raise ValueError('C_W should be below 1.')
    return float(np.sqrt(1 / (lambda_ * (1 - C_W))))


def equilibrium_energy(eq, kernel=None):
    """
    Closed form E(f_inf) = -1/2 int int W f_inf f_inf' - log Z.
    """
    kernel = kernel if kernel is not None else eq.kernel
    if kernel is None:
        raise ValueError('The equilibrium does not carry its kernel, pass it explicitly.')
    K = interaction_matrix(kernel, eq.grid)
    return -0.5 * eq.grid.hx**2 * float(eq.rho_inf @ K @ eq.rho_inf) - eq.log_Z


def perturbed(f, amplitude=0.1, mode=1):
    """
    Returns the normalized density f (1 + amplitude cos(mode x)). Used to build off-equilibrium initial data.
    """
    grid = f.grid
    factor = 1 + amplitude * np.cos(mode * 2 * np.pi * (grid.x - grid.domain.lower) / grid.domain.length)
    return DensityField(f.values * factor[:, None], grid).normalized()
