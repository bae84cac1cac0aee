"""
Assembly of the mean-field information matrix R(z, x, y) and certification of its decay constant.

R is the 4d x 4d symmetric matrix 1/2 [[A(x, y), B], [B^T, A(y, x)]] and the decay constant at a phase pair is the smallest generalized eigenvalue of (R, diag(M, M)) with M = aa^T + zz^T. Certification takes the minimum over a grid of phase pairs.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import linalg

from hypolab.errors import GridError, ModelEvaluationError, SingularMetricError
from hypolab.model import DirectionPair, metric_block

logger = logging.getLogger(__name__)

FEASIBILITY_TOLERANCE = 1e-10


class _Hessians:
    """
    Hessians of the model at a batch of phase pairs, computed once and reused for every direction.
    """
    def __init__(self, kernel, potential, x, y):
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        self.y = np.atleast_2d(np.asarray(y, dtype=float))
        self.w_xy = kernel.hess_xx(self.x, self.y)
        self.w_yx = kernel.hess_xx(self.y, self.x)
        self.u_x = potential.hess(self.x)
        self.u_y = potential.hess(self.y)
        self.w_mixed = kernel.hess_xy(self.x, self.y)
        for name in ('w_xy', 'w_yx', 'u_x', 'u_y', 'w_mixed'):
            values = getattr(self, name)
            finite = np.isfinite(values).reshape(len(values), -1).all(axis=1)
            if not finite.all():
                i = int(np.argmin(finite))
                raise ModelEvaluationError(f'Non-finite Hessian ({name})',
                                           point=(self.x[i].tolist(), self.y[i].tolist()))

    @property
    def dimension(self):
        return self.x.shape[-1]

    def __len__(self):
        return len(self.x)


def _a_block(direction, w_hess, u_hess, d, with_constant=True):
    """
    Returns the 2d x 2d block [[z1 z2 I, off], [off, (1 + z2^2) I - z1 z2 H]] with off = 1/2 ((1 + z1 z2 + z2^2) I - z1^2 H) and H = w_hess + u_hess. Without the constant part, only the Hessian terms are kept.
    """
    z1, z2 = direction.z1, direction.z2
    hess = w_hess + u_hess
    eye = np.broadcast_to(np.eye(d), hess.shape) if with_constant else np.zeros(hess.shape)
    top_left = z1 * z2 * eye
    off = 0.5 * ((1 + z1 * z2 + z2**2) * eye - z1**2 * hess)
    bottom_right = (1 + z2**2) * eye - z1 * z2 * hess
    return np.block([[top_left, off], [off, bottom_right]])


def _b_block(direction, w_mixed, d):
    z1, z2 = direction.z1, direction.z2
    zeros = np.zeros(w_mixed.shape)
    return np.block([[zeros, -0.5 * z1**2 * w_mixed],
                     [-0.5 * z1**2 * w_mixed, -z1 * z2 * w_mixed]])


def _assemble(direction, hessians):
    d = hessians.dimension
    a_xy = _a_block(direction, hessians.w_xy, hessians.u_x, d)
    a_yx = _a_block(direction, hessians.w_yx, hessians.u_y, d)
    b = _b_block(direction, hessians.w_mixed, d)
    r = 0.5 * np.block([[a_xy, b], [np.swapaxes(b, -1, -2), a_yx]])
    return a_xy, a_yx, b, r


class ReformBlocks:
    """
    Split of the A blocks into a part carrying the Hessian of W (A1) and a part carrying the Hessian of U and the constant terms (A2).
    """
    def __init__(self, A1_xy, A1_yx, A2_xy, A2_yx, B):
        self.A1_xy = A1_xy
        self.A1_yx = A1_yx
        self.A2_xy = A2_xy
        self.A2_yx = A2_yx
        self.B = B

    def reassemble(self):
        """
        Returns R rebuilt from the reformulated blocks.
        """
        a_xy = self.A1_xy + self.A2_xy
        a_yx = self.A1_yx + self.A2_yx
        return 0.5 * np.block([[a_xy, self.B], [self.B.T, a_yx]])


class InfoMatrix:
    """
    Mean-field information matrix at one phase pair (x, y) for a direction pair.

    Attributes:
        A_xy, A_yx, B (arrays of shape (2d, 2d)): Blocks of R.
        R (array of shape (4d, 4d)): The symmetric information matrix.
        reform (ReformBlocks): The A1/A2 split of the blocks.
    """
    def __init__(self, A_xy, A_yx, B, R, x, y, direction, reform=None):
        self.A_xy = A_xy
        self.A_yx = A_yx
        self.B = B
        self.R = R
        self.x = x
        self.y = y
        self.direction = direction
        self.reform = reform

    @property
    def dimension(self):
        return self.A_xy.shape[0] // 2

    def metric(self):
        """
        Returns diag(M, M), the metric R is compared with.
        """
        m = metric_block(self.direction, self.dimension)
        return linalg.block_diag(m, m)

    def __repr__(self):
        return f'InfoMatrix(x={self.x}, y={self.y}, z1={self.direction.z1}, z2={self.direction.z2})'


def assemble_R(kernel, potential, direction, x, y):
    """
    Assembles R(z, x, y) and its reformulated blocks at a single phase pair.

    Args:
        kernel (KernelModel): Interaction kernel.
        potential (PotentialModel): Confinement potential.
        direction (DirectionPair): Constants (z1, z2).
        x, y (array of shape (d,) or float): Phase pair.

    Returns an InfoMatrix.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    hessians = _Hessians(kernel, potential, x[None, :], y[None, :])
    a_xy, a_yx, b, r = (block[0] for block in _assemble(direction, hessians))

    d = hessians.dimension
    zeros = np.zeros((1, d, d))
    reform = ReformBlocks(A1_xy=_a_block(direction, hessians.w_xy, zeros, d, with_constant=False)[0],
                          A1_yx=_a_block(direction, hessians.w_yx, zeros, d, with_constant=False)[0],
                          A2_xy=_a_block(direction, zeros, hessians.u_x, d)[0],
                          A2_yx=_a_block(direction, zeros, hessians.u_y, d)[0],
                          B=b)
    return InfoMatrix(a_xy, a_yx, b, r, x, y, direction, reform=reform)


def _whitening(direction, d):
    if direction.z1 == 0:
        raise SingularMetricError('The metric aa^T + zz^T is singular for z1 = 0.')
    m = metric_block(direction, d)
    chol = linalg.cholesky(linalg.block_diag(m, m), lower=True)
    return linalg.solve_triangular(chol, np.eye(4 * d), lower=True)


def _generalized_min(r, inv_chol):
    """
    Smallest generalized eigenvalue of (R, L L^T) for a batch of R, with the corresponding eigenvectors v = L^{-T} w.
    """
    whitened = inv_chol @ r @ inv_chol.T
    whitened = 0.5 * (whitened + np.swapaxes(whitened, -1, -2))
    values, vectors = np.linalg.eigh(whitened)
    witnesses = np.einsum('ji,...j->...i', inv_chol, vectors[..., :, 0])
    return values[..., 0], witnesses


def lambda_at(kernel, potential, direction, x, y):
    """
    Largest lambda with R(z, x, y) >= lambda diag(M, M), computed by Cholesky whitening of diag(M, M).

    Raises SingularMetricError when z1 = 0.
    """
    matrix = assemble_R(kernel, potential, direction, x, y)
    inv_chol = _whitening(direction, matrix.dimension)
    value, _ = _generalized_min(matrix.R, inv_chol)
    return float(value)


class XYGrid:
    """
    Grid of phase pairs (x, y). By default, the tensor grid of 'points_per_axis' equispaced nodes per coordinate of the domain, for x and y independently. Explicit pairs can be given instead.
    """
    def __init__(self, domain=None, points_per_axis=16, pairs=None):
        """
        Args:
            domain (PositionDomain): Domain of the nodes. Ignored when 'pairs' is given.
            points_per_axis (int): Number of nodes per coordinate.
            pairs (tuple of 2 arrays of shape (n, d)): Explicit x and y points.
        """
        self.domain = domain
        self.points_per_axis = points_per_axis
        self._pairs = None
        if pairs is not None:
            x, y = (np.asarray(p, dtype=float) for p in pairs)
            x = x[:, None] if x.ndim == 1 else x
            y = y[:, None] if y.ndim == 1 else y
            self._pairs = (x, y)
        elif domain is None:
            raise GridError('An XYGrid needs either a domain or explicit pairs.')

    @classmethod
    def single(cls, x, y):
        return cls(pairs=(np.atleast_2d(np.asarray(x, dtype=float)), np.atleast_2d(np.asarray(y, dtype=float))))

    def pairs(self):
        """
        Returns the pairs (x, y) as two arrays of shape (n, d), ordered lexicographically by grid index.
        """
        if self._pairs is not None:
            return self._pairs
        nodes = self.domain.nodes(self.points_per_axis)
        points = np.array(list(itertools.product(nodes, repeat=self.domain.dimension)))
        n = len(points)
        if n == 0:
            raise GridError('Empty XY grid.')
        x = np.repeat(points, n, axis=0)
        y = np.tile(points, (n, 1))
        return x, y

    def __len__(self):
        return len(self.pairs()[0])

    def to_dict(self):
        if self._pairs is not None:
            return {'kind': 'pairs', 'size': len(self._pairs[0])}
        return {'kind': 'tensor', 'points_per_axis': self.points_per_axis, 'domain': self.domain.to_dict()}


class DirectionGrid:
    """
    Grid of direction pairs (z1, z2), visited in order of increasing z1 then increasing z2.
    """
    def __init__(self, z1_values, z2_values):
        self.z1_values = np.sort(np.asarray(z1_values, dtype=float).ravel())
        self.z2_values = np.sort(np.asarray(z2_values, dtype=float).ravel())
        if self.z1_values.size == 0 or self.z2_values.size == 0:
            raise GridError('Empty direction grid.')
        if np.any(self.z1_values == 0):
            raise GridError('Direction grids cannot contain z1 = 0 (singular metric).')

    @classmethod
    def from_ranges(cls, z1, z2):
        """
        Args:
            z1, z2 (tuple of (low, high, n)): Ranges passed to numpy.linspace.
        """
        return cls(np.linspace(*z1[:2], int(z1[2])), np.linspace(*z2[:2], int(z2[2])))

    def __iter__(self):
        for z1 in self.z1_values:
            for z2 in self.z2_values:
                yield DirectionPair(float(z1), float(z2))

    def __len__(self):
        return self.z1_values.size * self.z2_values.size


class SpectralCertificate:
    """
    Certified decay constant over a grid of phase pairs.

    Attributes:
        lambda_ (float): Minimum over the grid of the generalized eigenvalue.
        argmin_point (tuple of arrays): Phase pair (x, y) realizing the minimum (first one in grid order).
        witness (array of shape (4d,)): Generalized eigenvector at the argmin.
        grid (dict): Description of the grid.
        direction (DirectionPair): Direction pair used.
        feasible (bool): Whether lambda_ exceeds the feasibility tolerance.
    """
    def __init__(self, lambda_, argmin_point, witness, grid, direction, tolerance=FEASIBILITY_TOLERANCE):
        self.lambda_ = float(lambda_)
        self.argmin_point = argmin_point
        self.witness = witness
        self.grid = grid
        self.direction = direction
        self.tolerance = tolerance
        self.checks = []
        # (z1, z2, lambda) of every candidate when found by a direction search
        self.candidates = []

    @property
    def feasible(self):
        return self.lambda_ > self.tolerance

    def to_dict(self):
        x, y = self.argmin_point
        return {'lambda': self.lambda_,
                'z1': self.direction.z1,
                'z2': self.direction.z2,
                'argmin': [np.asarray(x).tolist(), np.asarray(y).tolist()],
                'witness': np.asarray(self.witness).tolist(),
                'feasible': self.feasible,
                'grid': self.grid,
                'checks': [check.to_dict() for check in self.checks],
                'candidates': [{'z1': z1, 'z2': z2, 'lambda': value} for z1, z2, value in self.candidates]}

    def __repr__(self):
        return f'SpectralCertificate(lambda={self.lambda_:.6g}, z1={self.direction.z1}, z2={self.direction.z2}, feasible={self.feasible})'


def _chunks(n, threads):
    bounds = np.linspace(0, n, max(1, min(threads, n)) + 1).astype(int)
    return [slice(start, stop) for start, stop in zip(bounds[:-1], bounds[1:])]


def _sweep(direction, hessians, inv_chol, threads):
    """
    Generalized eigenvalues and witnesses at every pair, evaluated in contiguous chunks so that the result does not depend on the thread count.
    """
    def evaluate(part):
        subset = _Subset(hessians, part)
        return _generalized_min(_assemble(direction, subset)[3], inv_chol)

    parts = _chunks(len(hessians), threads)
    if len(parts) == 1:
        return evaluate(parts[0])
    with ThreadPoolExecutor(max_workers=len(parts)) as executor:
        results = list(executor.map(evaluate, parts))
    return np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results])


class _Subset:
    def __init__(self, hessians, part):
        self.w_xy = hessians.w_xy[part]
        self.w_yx = hessians.w_yx[part]
        self.u_x = hessians.u_x[part]
        self.u_y = hessians.u_y[part]
        self.w_mixed = hessians.w_mixed[part]
        self.dimension = hessians.dimension


def _certify(hessians, direction, grid_info, threads):
    inv_chol = _whitening(direction, hessians.dimension)
    values, witnesses = _sweep(direction, hessians, inv_chol, threads)
    i = int(np.argmin(values))
    return SpectralCertificate(values[i], (hessians.x[i], hessians.y[i]), witnesses[i], grid_info, direction)


def certify_lambda(kernel, potential, direction, xy_grid, threads=1):
    """
    Certifies the decay constant of a direction pair as the minimum of 'lambda_at' over a grid of phase pairs. Ties are resolved by the first pair in grid order.

    Args:
        kernel (KernelModel): Interaction kernel.
        potential (PotentialModel): Confinement potential.
        direction (DirectionPair): Constants (z1, z2).
        xy_grid (XYGrid): Phase pairs.
        threads (int): Number of worker threads for the sweep.

    Returns a SpectralCertificate.
    """
    x, y = xy_grid.pairs()
    if len(x) == 0:
        raise GridError('Empty XY grid.')
    hessians = _Hessians(kernel, potential, x, y)
    certificate = _certify(hessians, direction, xy_grid.to_dict(), threads)
    logger.info('Certified lambda=%.6g for z=(%g, %g) over %d pairs', certificate.lambda_,
                direction.z1, direction.z2, len(hessians))
    return certificate


def search_directions(kernel, potential, z_grid, xy_grid, threads=1):
    """
    Finds the direction pair of a DirectionGrid with the largest certified decay constant. Ties keep the smallest z1, then the smallest z2.

    Returns a tuple (DirectionPair, SpectralCertificate).
    """
    if len(z_grid) == 0:
        raise GridError('Empty direction grid.')
    x, y = xy_grid.pairs()
    hessians = _Hessians(kernel, potential, x, y)
    best = None
    candidates = []
    for direction in z_grid:
        certificate = _certify(hessians, direction, xy_grid.to_dict(), threads)
        candidates.append((direction.z1, direction.z2, certificate.lambda_))
        if best is None or certificate.lambda_ > best.lambda_:
            best = certificate
    logger.info('Best direction z=(%g, %g) with lambda=%.6g among %d candidates',
                best.direction.z1, best.direction.z2, best.lambda_, len(z_grid))
    best.candidates = candidates
    return best.direction, best
