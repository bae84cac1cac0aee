import json
import os

import numpy as np
from pytest import approx, fixture, raises
from scipy import linalg

import hypolab
from hypolab.errors import GridError, ModelEvaluationError, SingularMetricError
from hypolab.infomatrix import *
from hypolab.model import (CosinePotential, DifferenceKernel, DirectionPair, PositionDomain, QuadraticPotential,
                           SeparableKernel, ZeroKernel, ZeroPotential)

# smallest root of l^2 - 0.5 l + 0.04649375 for the quadratic model with kappa = 0.9 and z = (1, 0.3)
QUADRATIC_LAMBDA = (0.5 - np.sqrt(0.064025)) / 2


def smallest_root(matrix):
    """
    Smallest real eigenvalue from the characteristic polynomial, built by the Faddeev-LeVerrier recursion.
    """
    n = len(matrix)
    coefficients = [1.0]
    power = np.zeros_like(matrix)
    for k in range(1, n + 1):
        power = matrix @ power + coefficients[-1] * np.eye(n)
        coefficients.append(-np.trace(matrix @ power) / k)
    return float(np.min(np.roots(coefficients).real))


class NanKernel(ZeroKernel):
    def hess_xx(self, x, y):
        return np.full(np.shape(x) + np.shape(x)[-1:], np.nan)


@fixture
def direction():
    return DirectionPair(1.0, 0.3)


@fixture
def line():
    return PositionDomain.line(5.0)


class TestAssembleR:
    def test_identity_hessian_without_coupling(self):
        matrix = assemble_R(ZeroKernel(), QuadraticPotential(1.0), DirectionPair(1.0, 0.0), 0.3, -1.2)
        assert matrix.A_xy == approx(np.array([[0.0, 0.0], [0.0, 1.0]]))
        assert matrix.B == approx(np.zeros((2, 2)))
        assert np.linalg.eigvalsh(matrix.R) == approx([0, 0, 0.5, 0.5], abs=1e-14)

    def test_difference_kernel_on_the_diagonal(self, direction):
        matrix = assemble_R(DifferenceKernel(alpha=-1.0), ZeroPotential(), direction, 0.7, 0.7)
        assert matrix.A_xy == approx(np.array([[0.3, 0.195], [0.195, 0.79]]))
        assert matrix.B == approx(np.array([[0.0, 0.5], [0.5, 0.3]]))

    def test_r_is_half_the_block_matrix(self, direction):
        matrix = assemble_R(SeparableKernel(0.4, 'sin'), CosinePotential(0.6), direction, 1.0, 2.5)
        expected = 0.5 * np.block([[matrix.A_xy, matrix.B], [matrix.B.T, matrix.A_yx]])
        assert np.array_equal(matrix.R, expected)
        assert np.abs(matrix.R - matrix.R.T).max() < 1e-15

    def test_z1_zero_decouples(self):
        matrix = assemble_R(DifferenceKernel(0.8), CosinePotential(0.5), DirectionPair(0.0, 0.3), 0.2, 1.1)
        assert np.array_equal(matrix.B, np.zeros((2, 2)))
        assert matrix.A_xy[0, 1] == approx(0.5 * 1.09)

    def test_reform_blocks_reassemble(self):
        rng = np.random.default_rng(0)
        models = [(DifferenceKernel(0.7, 2.0), CosinePotential(0.3)),
                  (SeparableKernel(-0.5, 'cos'), QuadraticPotential(0.9)),
                  (ZeroKernel(), CosinePotential(1.5))]
        for _ in range(100):
            kernel, potential = models[rng.integers(len(models))]
            direction = DirectionPair(*rng.uniform(0.1, 3.0, size=2))
            x, y = rng.uniform(-3, 3, size=2)
            matrix = assemble_R(kernel, potential, direction, x, y)
            reform = matrix.reform
            assert np.abs(reform.reassemble() - matrix.R).max() < 1e-12
            assert np.abs(reform.A1_xy + reform.A2_xy - matrix.A_xy).max() < 1e-12

    def test_two_dimensional_blocks(self, direction):
        matrix = assemble_R(SeparableKernel(0.3), CosinePotential(0.5), direction, [0.1, 0.2], [1.0, 2.0])
        assert matrix.R.shape == (8, 8)
        assert matrix.dimension == 2

    def test_non_finite_hessian(self, direction):
        with raises(ModelEvaluationError) as info:
            assemble_R(NanKernel(), ZeroPotential(), direction, 0.5, 1.0)
        assert info.value.point == ([0.5], [1.0])


class TestLambdaAt:
    def test_zero_for_degenerate_direction(self):
        value = lambda_at(ZeroKernel(), QuadraticPotential(1.0), DirectionPair(1.0, 0.0), 0.0, 0.0)
        assert value == approx(0.0, abs=1e-14)

    def test_quadratic_potential(self, direction):
        value = lambda_at(ZeroKernel(), QuadraticPotential(0.9), direction, 0.4, -0.4)
        assert value == approx(QUADRATIC_LAMBDA, rel=1e-10)

    def test_matches_generalized_eigensolver(self, direction):
        kernel, potential = SeparableKernel(0.4, 'cos'), CosinePotential(0.8)
        matrix = assemble_R(kernel, potential, direction, 0.3, 2.0)
        expected = linalg.eigh(matrix.R, matrix.metric(), eigvals_only=True)[0]
        assert lambda_at(kernel, potential, direction, 0.3, 2.0) == approx(expected, rel=1e-10)

    def test_matches_characteristic_polynomial_roots(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            kernel = DifferenceKernel(rng.uniform(-1, 1), rng.uniform(0.5, 2))
            if rng.random() < 0.5:
                potential = CosinePotential(rng.uniform(-1, 1))
            else:
                potential = QuadraticPotential(rng.uniform(0.1, 2))
            direction = DirectionPair(rng.uniform(0.5, 2), rng.uniform(-1, 1))
            x, y = rng.uniform(-np.pi, np.pi, 2)
            matrix = assemble_R(kernel, potential, direction, x, y)
            expected = smallest_root(linalg.solve(matrix.metric(), matrix.R))
            assert lambda_at(kernel, potential, direction, x, y) == approx(expected, rel=1e-9, abs=1e-9)

    def test_difference_kernel_without_confinement_is_negative(self, direction):
        for alpha in (-1.0, 0.5, 2.0):
            assert lambda_at(DifferenceKernel(alpha), ZeroPotential(), direction, 1.0, 1.0) < 0

    def test_singular_metric(self):
        with raises(SingularMetricError):
            lambda_at(ZeroKernel(), ZeroPotential(), DirectionPair(0.0, 0.3), 0.0, 0.0)


class TestXYGrid:
    def test_tensor_grid(self):
        grid = XYGrid(PositionDomain.torus(), points_per_axis=4)
        x, y = grid.pairs()
        assert len(grid) == 16
        assert x.shape == (16, 1)
        assert np.array_equal(x[:4, 0], np.zeros(4))
        assert y[:4, 0] == approx(PositionDomain.torus().nodes(4))

    def test_single(self):
        grid = XYGrid.single(0.5, 1.5)
        assert len(grid) == 1
        assert grid.to_dict() == {'kind': 'pairs', 'size': 1}

    def test_needs_domain_or_pairs(self):
        with raises(GridError):
            XYGrid()


class TestDirectionGrid:
    def test_order(self):
        grid = DirectionGrid([2.0, 1.0], [0.5, 0.1])
        assert [(pair.z1, pair.z2) for pair in grid] == [(1.0, 0.1), (1.0, 0.5), (2.0, 0.1), (2.0, 0.5)]
        assert len(grid) == 4

    def test_from_ranges(self):
        grid = DirectionGrid.from_ranges((0.5, 1.5, 3), (0.0, 1.0, 5))
        assert len(grid) == 15

    def test_invalid(self):
        with raises(GridError):
            DirectionGrid([], [0.3])
        with raises(GridError):
            DirectionGrid([0.0, 1.0], [0.3])


class TestCertifyLambda:
    def test_quadratic_uniform_over_grid(self, direction, line):
        certificate = certify_lambda(ZeroKernel(), QuadraticPotential(0.9), direction, XYGrid(line, 6))
        assert certificate.lambda_ == approx(QUADRATIC_LAMBDA, rel=1e-10)
        assert certificate.feasible

    def test_zero_model_is_infeasible(self, direction):
        certificate = certify_lambda(ZeroKernel(), ZeroPotential(), direction, XYGrid(PositionDomain.torus(), 4))
        assert certificate.lambda_ < 0
        assert not certificate.feasible

    def test_single_point_equals_lambda_at(self, direction):
        kernel, potential = DifferenceKernel(0.3), CosinePotential(0.7)
        certificate = certify_lambda(kernel, potential, direction, XYGrid.single(0.4, 2.2))
        assert certificate.lambda_ == approx(lambda_at(kernel, potential, direction, 0.4, 2.2), rel=1e-12)

    def test_witness_is_generalized_eigenvector(self, direction):
        kernel, potential = SeparableKernel(0.5, 'sin'), CosinePotential(1.0)
        certificate = certify_lambda(kernel, potential, direction, XYGrid(PositionDomain.torus(), 8))
        x, y = certificate.argmin_point
        matrix = assemble_R(kernel, potential, direction, x, y)
        v = certificate.witness
        metric_norm = v @ matrix.metric() @ v
        assert abs(v @ matrix.R @ v - certificate.lambda_ * metric_norm) <= 1e-9 * abs(metric_norm)

    def test_refined_grid_is_not_larger(self, direction):
        kernel, potential = DifferenceKernel(0.4), CosinePotential(1.2)
        torus = PositionDomain.torus()
        coarse = certify_lambda(kernel, potential, direction, XYGrid(torus, 8))
        fine = certify_lambda(kernel, potential, direction, XYGrid(torus, 16))
        assert fine.lambda_ <= coarse.lambda_ + 1e-12

    def test_threads_do_not_change_result(self, direction):
        kernel, potential = DifferenceKernel(0.4), CosinePotential(1.2)
        grid = XYGrid(PositionDomain.torus(), 12)
        serial = certify_lambda(kernel, potential, direction, grid, threads=1)
        parallel = certify_lambda(kernel, potential, direction, grid, threads=4)
        assert parallel.lambda_ == approx(serial.lambda_, rel=1e-12)
        assert np.array_equal(parallel.argmin_point[0], serial.argmin_point[0])
        assert np.array_equal(parallel.argmin_point[1], serial.argmin_point[1])

    def test_schur_feasible_model_certifies(self, direction, line):
        certificate = certify_lambda(ZeroKernel(), QuadraticPotential(0.99), direction, XYGrid(line, 4))
        assert certificate.lambda_ > 0

    def test_empty_grid(self, direction):
        empty = XYGrid(pairs=(np.empty((0, 1)), np.empty((0, 1))))
        with raises(GridError):
            certify_lambda(ZeroKernel(), ZeroPotential(), direction, empty)

    def test_to_dict_has_published_keys(self, direction, line):
        certificate = certify_lambda(ZeroKernel(), QuadraticPotential(0.9), direction, XYGrid(line, 3))
        schema_path = os.path.join(os.path.dirname(hypolab.__file__), 'schemas', 'certificate.schema.json')
        with open(schema_path, encoding='utf8') as file:
            schema = json.load(file)
        data = json.loads(json.dumps(certificate.to_dict()))
        assert set(schema['required']) <= set(data)
        assert data['z1'] == 1.0
        assert len(data['witness']) == 4
        assert len(data['argmin']) == 2


class TestSearchDirections:
    def test_superset_is_not_worse(self, direction, line):
        xy_grid = XYGrid(line, 3)
        z_grid = DirectionGrid([0.5, 1.0, 2.0], [0.1, 0.3, 0.6])
        best, certificate = search_directions(ZeroKernel(), QuadraticPotential(0.9), z_grid, xy_grid)
        assert certificate.lambda_ >= QUADRATIC_LAMBDA - 1e-12
        assert certificate.direction == best
        assert len(certificate.candidates) == 9

    def test_two_point_grid(self, line):
        z_grid = DirectionGrid([1.0], [0.3, 10.0])
        best, _ = search_directions(ZeroKernel(), QuadraticPotential(0.9), z_grid, XYGrid(line, 2))
        assert best == DirectionPair(1.0, 0.3)

    def test_difference_kernel_without_confinement(self):
        z_grid = DirectionGrid(np.linspace(0.2, 3.0, 8), np.linspace(0.2, 3.0, 8))
        _, certificate = search_directions(DifferenceKernel(1.0), ZeroPotential(), z_grid,
                                           XYGrid(PositionDomain.torus(), 4))
        assert certificate.lambda_ <= 1e-8
        assert not certificate.feasible

    def test_difference_kernel_is_never_certified(self):
        values = np.linspace(0.06, 3.0, 50)
        xy_grid = XYGrid(PositionDomain.torus(), 16)
        for alpha in (0.1, 0.5, 1.0):
            _, certificate = search_directions(DifferenceKernel(alpha), ZeroPotential(), DirectionGrid(values, values),
                                               xy_grid)
            assert len(certificate.candidates) == 2500
            assert max(candidate[2] for candidate in certificate.candidates) <= 1e-8
