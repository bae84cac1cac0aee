"""
Mean-field underdamped Langevin particles, integrated with Euler-Maruyama:

    dx = v dt,  dv = -v dt - [(1/N) sum_j grad_x W(x, x_j) + grad U(x)] dt + sqrt(2) dB.
"""
import logging

import numpy as np

from hypolab.equilibrium import DensityField
from hypolab.errors import InstabilityError

logger = logging.getLogger(__name__)


def step_generator(seed, step):
    """
    Random generator of a given step. Each step owns the Philox stream whose highest counter word is the step index, so the draws of a step do not depend on how many draws the previous steps made.
    """
    return np.random.Generator(np.random.Philox(key=int(seed), counter=int(step) << 192))


class ParticleState:
    """
    Positions and velocities of N particles, both of shape (N, d).

    Attributes:
        t (float): Current time.
        step (int): Number of steps taken, which is also the position in the random stream.
        seed (int): Key of the random stream.
    """
    def __init__(self, positions, velocities, domain, seed=0, t=0.0, step=0):
        positions = np.asarray(positions, dtype=float)
        velocities = np.asarray(velocities, dtype=float)
        positions = positions[:, None] if positions.ndim == 1 else positions
        velocities = velocities[:, None] if velocities.ndim == 1 else velocities
        if positions.shape != velocities.shape:
            raise ValueError(f'Positions {positions.shape} and velocities {velocities.shape} should have the same shape.')
        if len(positions) < 2:
            raise ValueError('At least 2 particles are needed.')
        self.positions = domain.wrap(positions)
        self.velocities = velocities
        self.domain = domain
        self.seed = int(seed)
        self.t = float(t)
        self.step = int(step)

    @property
    def n_particles(self):
        return len(self.positions)

    def __repr__(self):
        return f'ParticleState(N={self.n_particles}, t={self.t:.6g}, step={self.step})'


def em_step(state, kernel, potential, dt, noise=None):
    """
    One Euler-Maruyama step. The mean-field force is the empirical average over all particles, the particle itself included.

    Args:
        state (ParticleState): Current state.
        kernel (KernelModel): Interaction kernel.
        potential (PotentialModel): Confinement potential.
        dt (float): Time step.
        noise (array of shape (N, d)): Standard normal increments. Drawn from the stream of the current step when omitted.

    Returns a new ParticleState.
    """
    if not dt > 0:
        raise ValueError('dt should be positive.')
    x, v = state.positions, state.velocities
    if noise is None:
        noise = step_generator(state.seed, state.step).standard_normal(x.shape)
    force = kernel.mean_field_gradient(x, x) + potential.grad(x)
    positions = x + v * dt
    velocities = v - v * dt - force * dt + np.sqrt(2 * dt) * noise
    if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
        raise InstabilityError('Non-finite particle state', substep='em_step', time=state.t + dt)
    return ParticleState(positions, velocities, state.domain, state.seed, state.t + dt, state.step + 1)


def sample_from_density(field, n, rng):
    """
    Draws n phase points from a DensityField: a node is chosen with probability proportional to its quadrature mass, then the point is spread uniformly over the cell of the node.

    Returns positions and velocities of shape (n, 1).
    """
    grid = field.grid
    probabilities = (grid.weights * np.maximum(field.values, 0)).ravel()
    probabilities /= probabilities.sum()
    nodes = rng.choice(probabilities.size, size=n, p=probabilities)
    i, j = np.divmod(nodes, grid.nv)
    x = grid.x[i] + (rng.random(n) - 0.5) * grid.hx
    v = grid.v[j] + (rng.random(n) - 0.5) * grid.hv
    return grid.domain.wrap(x)[:, None], v[:, None]


class ParticleSnapshot:
    """
    Histograms of a particle state on the bins of a PhaseGrid. x bins are centered on the x nodes (periodically), v bins on the v nodes with velocities beyond +-vmax counted in the extreme bins.
    """
    def __init__(self, state, grid):
        self.t = state.t
        self.grid = grid
        n = state.n_particles
        x = state.positions[:, 0]
        v = state.velocities[:, 0]
        ix = np.floor((x - grid.domain.lower + grid.hx / 2) / grid.hx).astype(int) % grid.nx
        iv = np.clip(np.round((v + grid.vmax) / grid.hv).astype(int), 0, grid.nv - 1)
        counts = np.zeros(grid.shape)
        np.add.at(counts, (ix, iv), 1)
        self.counts = counts
        self.rho = counts.sum(axis=1) / (n * grid.hx)
        self.density = DensityField(counts / (n * grid.weights), grid)
        self.velocity_variance = float(np.var(v))

    def marginal_to_csv(self, path):
        np.savetxt(path, np.column_stack([self.grid.x, self.rho]), delimiter=',',
                   header='x,rho', comments='', fmt='%.17g')

    def __repr__(self):
        return f'ParticleSnapshot(t={self.t:.6g})'


def compare_marginals(snapshot, field):
    """
    L1 distance between the x-marginal of a particle snapshot and that of a DensityField on the same grid.
    """
    return float(snapshot.grid.hx * np.sum(np.abs(snapshot.rho - field.rho)))


class ParticleTrajectory:
    """
    Snapshots of a particle run, ordered by time, and its final state.
    """
    def __init__(self, snapshots, final_state):
        self.snapshots = snapshots
        self.final_state = final_state

    @property
    def times(self):
        return [snapshot.t for snapshot in self.snapshots]

    def at(self, t):
        """
        Snapshot closest to time t.
        """
        return min(self.snapshots, key=lambda snapshot: abs(snapshot.t - t))


def simulate(n_particles, kernel, potential, dt, t_end, seed, grid, initial=None, snapshot_times=None):
    """
    Runs the particle system from t = 0 to t_end.

    Args:
        n_particles (int): Number of particles N.
        kernel (KernelModel): Interaction kernel.
        potential (PotentialModel): Confinement potential.
        dt (float): Time step.
        t_end (float): Final time.
        seed (int): Key of the random streams. The same seed gives bit-identical runs.
        grid (PhaseGrid): Grid whose bins are used for the snapshots.
        initial (DensityField): Initial law of the particles. Defaults to uniform in x times a standard Gaussian in v.
        snapshot_times (list of float): Snapshot times. Defaults to [t_end].

    Returns a ParticleTrajectory.
    """
    if not dt > 0 or not t_end > 0:
        raise ValueError('dt and t_end should be positive.')
    n_steps = int(round(t_end / dt))
    times = sorted(float(t) for t in (snapshot_times if snapshot_times is not None else [t_end]))

    # draws of the initial condition use the stream reserved below step 0
    rng = np.random.Generator(np.random.Philox(key=int(seed), counter=(1 << 256) - (1 << 192)))
    if initial is None:
        positions = grid.domain.sample(n_particles, rng)
        velocities = rng.standard_normal((n_particles, 1))
    else:
        positions, velocities = sample_from_density(initial, n_particles, rng)
    state = ParticleState(positions, velocities, grid.domain, seed=seed)

    snapshots = []
    pending = list(times)
    while pending and pending[0] <= 0.5 * dt:
        pending.pop(0)
        snapshots.append(ParticleSnapshot(state, grid))
    for n in range(1, n_steps + 1):
        state = em_step(state, kernel, potential, dt)
        while pending and pending[0] <= n * dt + 0.5 * dt:
            pending.pop(0)
            snapshots.append(ParticleSnapshot(state, grid))
            logger.debug('Particle snapshot at t=%g', state.t)
    logger.info('Particle run with N=%d finished at t=%g', n_particles, state.t)
    return ParticleTrajectory(snapshots, state)
