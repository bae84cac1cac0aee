import numpy as np
from pytest import approx, fixture, raises

from hypolab.equilibrium import DensityField, PhaseGrid, fixed_point
from hypolab.errors import InstabilityError
from hypolab.infomatrix import XYGrid, certify_lambda
from hypolab.kinetic import SolverConfig, run
from hypolab.model import (CosinePotential, DifferenceKernel, DirectionPair, PositionDomain, QuadraticPotential,
                           ZeroKernel, ZeroPotential)
from hypolab.particles import *


@fixture
def torus():
    return PositionDomain.torus()


@fixture
def grid(torus):
    return PhaseGrid(torus, 16, 61, vmax=6.0)


@fixture
def two_particles(torus):
    return ParticleState([1.0, 2.0], [0.5, -0.5], torus, seed=3)


@fixture(scope='module')
def confined():
    domain = PositionDomain.line(6.0)
    kernel, potential = DifferenceKernel(0.05), QuadraticPotential(0.9)
    grid = PhaseGrid(domain, 32, 48, vmax=6.0)
    equilibrium = fixed_point(kernel, potential, grid)
    config = SolverConfig(grid, dt=0.01, t_end=5.0, stride=100, initial={'kind': 'perturbed', 'amplitude': 0.3},
                          snapshot_times=[0.0, 1.0, 5.0])
    series = run(config, kernel, potential, equilibrium=equilibrium)
    return {'kernel': kernel, 'potential': potential, 'grid': grid, 'series': series,
            'certificate': certify_lambda(kernel, potential, DirectionPair(1.0, 0.3), XYGrid(domain, 16))}


class TestParticleState:
    def test_shapes(self, two_particles):
        assert two_particles.positions.shape == (2, 1)
        assert two_particles.n_particles == 2

    def test_positions_are_wrapped(self, torus):
        state = ParticleState([-1.0, 7.0], [0.0, 0.0], torus)
        assert np.all((state.positions >= 0) & (state.positions < 2 * np.pi))

    def test_invalid(self, torus):
        with raises(ValueError):
            ParticleState([1.0, 2.0], [0.5], torus)
        with raises(ValueError):
            ParticleState([1.0], [0.5], torus)


class TestEMStep:
    def test_without_forces_or_noise(self, two_particles):
        state = em_step(two_particles, ZeroKernel(), ZeroPotential(), 0.1, noise=np.zeros((2, 1)))
        assert state.positions[:, 0] == approx([1.05, 1.95])
        assert state.velocities[:, 0] == approx([0.45, -0.45])
        assert state.t == approx(0.1)
        assert state.step == 1
        assert state.seed == 3

    def test_confinement_force(self, two_particles):
        potential = CosinePotential(0.8)
        state = em_step(two_particles, ZeroKernel(), potential, 0.1, noise=np.zeros((2, 1)))
        expected = two_particles.velocities * 0.9 - 0.1 * potential.grad(two_particles.positions)
        assert state.velocities == approx(expected)

    def test_draws_depend_on_step_only(self, two_particles):
        first = em_step(two_particles, ZeroKernel(), ZeroPotential(), 0.1)
        again = em_step(two_particles, ZeroKernel(), ZeroPotential(), 0.1)
        assert np.array_equal(first.velocities, again.velocities)
        noise = step_generator(3, 0).standard_normal((2, 1))
        expected = em_step(two_particles, ZeroKernel(), ZeroPotential(), 0.1, noise=noise)
        assert np.array_equal(first.velocities, expected.velocities)

    def test_streams_differ_between_steps(self):
        assert not np.array_equal(step_generator(0, 1).standard_normal(4), step_generator(0, 2).standard_normal(4))

    def test_non_finite_state(self, torus):
        state = ParticleState([1.0, 2.0], [np.inf, 0.0], torus)
        with raises(InstabilityError):
            em_step(state, ZeroKernel(), ZeroPotential(), 0.1)

    def test_invalid_dt(self, two_particles):
        with raises(ValueError):
            em_step(two_particles, ZeroKernel(), ZeroPotential(), 0.0)


class TestSampling:
    def test_sample_from_density(self, grid):
        values = np.ones(grid.nx)[:, None] * np.exp(-0.5 * (grid.v - 0.5)**2)[None, :]
        field = DensityField(values, grid).normalized()
        x, v = sample_from_density(field, 5000, np.random.default_rng(0))
        assert x.shape == (5000, 1)
        assert np.all((x >= 0) & (x < 2 * np.pi))
        assert v.mean() == approx(0.5, abs=0.06)


class TestSnapshot:
    def test_histograms_are_normalized(self, grid, torus):
        rng = np.random.default_rng(1)
        state = ParticleState(torus.sample(500, rng), rng.standard_normal((500, 1)), torus)
        snapshot = ParticleSnapshot(state, grid)
        assert snapshot.counts.sum() == 500
        assert snapshot.rho.sum() * grid.hx == approx(1.0)
        assert snapshot.density.is_normalized()

    def test_marginal_csv(self, grid, two_particles, tmp_path):
        path = str(tmp_path / 'particles.csv')
        ParticleSnapshot(two_particles, grid).marginal_to_csv(path)
        data = np.loadtxt(path, delimiter=',', skiprows=1)
        assert data.shape == (grid.nx, 2)


class TestSimulate:
    def test_same_seed_same_run(self, grid):
        runs = [simulate(50, DifferenceKernel(0.5), CosinePotential(1.0), 0.05, 0.5, seed, grid)
                for seed in (7, 7, 8)]
        assert np.array_equal(runs[0].final_state.positions, runs[1].final_state.positions)
        assert np.array_equal(runs[0].final_state.velocities, runs[1].final_state.velocities)
        assert not np.array_equal(runs[0].final_state.velocities, runs[2].final_state.velocities)

    def test_snapshot_times(self, grid):
        trajectory = simulate(20, ZeroKernel(), ZeroPotential(), 0.1, 1.0, 0, grid, snapshot_times=[1.0, 0.0, 0.5])
        assert trajectory.times == approx([0.0, 0.5, 1.0])
        assert trajectory.at(0.45).t == approx(0.5)
        assert trajectory.final_state.step == 10

    def test_velocity_variance_of_discrete_ornstein_uhlenbeck(self, grid):
        trajectory = simulate(4000, ZeroKernel(), ZeroPotential(), 0.1, 5.0, 0, grid)
        assert trajectory.at(5.0).velocity_variance == approx(1 / (1 - 0.05), abs=0.1)

    def test_marginal_close_to_equilibrium(self, grid):
        eq = fixed_point(ZeroKernel(), ZeroPotential(), grid)
        trajectory = simulate(4000, ZeroKernel(), ZeroPotential(), 0.1, 1.0, 0, grid, initial=eq.f_inf)
        assert compare_marginals(trajectory.at(1.0), eq.f_inf) < 0.15

    def test_invalid(self, grid):
        with raises(ValueError):
            simulate(10, ZeroKernel(), ZeroPotential(), 0.0, 1.0, 0, grid)


class TestAgreementWithKinetic:
    def test_model_is_certified(self, confined):
        assert confined['certificate'].feasible

    def test_marginals_agree(self, confined):
        snapshots = confined['series'].snapshots
        trajectory = simulate(20000, confined['kernel'], confined['potential'], 0.01, 5.0, 0, confined['grid'],
                              initial=snapshots[0.0], snapshot_times=[1.0, 5.0])
        assert compare_marginals(trajectory.at(1.0), snapshots[1.0]) <= 0.1
        assert compare_marginals(trajectory.at(5.0), snapshots[5.0]) <= 0.1

    def test_more_particles_agree_better(self, confined):
        snapshots = confined['series'].snapshots
        discrepancies = {}
        for n in (1000, 2000):
            discrepancies[n] = np.mean([
                compare_marginals(simulate(n, confined['kernel'], confined['potential'], 0.02, 1.0, seed,
                                           confined['grid'], initial=snapshots[0.0]).at(1.0), snapshots[1.0])
                for seed in range(10)])
        assert discrepancies[2000] < discrepancies[1000]
