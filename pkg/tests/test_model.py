import numpy as np
from pytest import approx, fixture, raises

from hypolab.errors import ConfigError, ModelEvaluationError
from hypolab.model import *


class SignFlippedKernel(DifferenceKernel):
    def hess_xx(self, x, y):
        return -super().hess_xx(x, y)


class NanPotential(CosinePotential):
    def value(self, x):
        values = super().value(x)
        values[0] = np.nan
        return values


@fixture
def torus():
    return PositionDomain.torus()


class TestPositionDomain:
    def test_torus_defaults(self, torus):
        assert torus.lower == 0
        assert torus.length == approx(2 * np.pi)

    def test_line(self):
        line = PositionDomain.line(3.0)
        assert line.lower == -3.0
        assert line.length == 6.0
        assert line.to_dict() == {'kind': 'line', 'half_width': 3.0, 'dimension': 1}

    def test_wrap_is_idempotent(self, torus):
        points = np.array([-0.5, 7.0, 2 * np.pi, 1.0])
        wrapped = torus.wrap(points)
        assert np.all((wrapped >= 0) & (wrapped < 2 * np.pi))
        assert np.array_equal(torus.wrap(wrapped), wrapped)
        assert wrapped[3] == approx(1.0)

    def test_nodes(self, torus):
        nodes = torus.nodes(4)
        assert nodes == approx([0, np.pi / 2, np.pi, 3 * np.pi / 2])

    def test_invalid_domains(self):
        with raises(ValueError):
            PositionDomain('sphere')
        with raises(ValueError):
            PositionDomain.line(-1.0)
        with raises(ValueError):
            PositionDomain.torus(dimension=0)

    def test_sample_shape(self, torus):
        points = torus.sample(10, np.random.default_rng(0))
        assert points.shape == (10, 1)


class TestDirectionPair:
    def test_metric_block(self):
        metric = DirectionPair(1.0, 0.3).metric()
        assert metric == approx(np.array([[1.0, 0.3], [0.3, 1.09]]))

    def test_metric_is_aat_plus_zzt(self):
        pair = DirectionPair(0.7, -0.4)
        a, z = pair.a(2), pair.z(2)
        assert pair.metric(2) == approx(a @ a.T + z @ z.T)

    def test_metric_singular_for_z1_zero(self):
        assert np.linalg.det(DirectionPair(0.0, 0.3).metric()) == approx(0.0)


class TestBuiltins:
    def test_difference_kernel_values(self):
        kernel = DifferenceKernel(alpha=-1.0)
        assert kernel.value(np.array([0.5]), np.array([0.5])) == approx(-1.0)
        assert kernel.hess_xx(np.array([0.0]), np.array([0.0]))[0, 0] == approx(1.0)
        assert kernel.hess_xy(np.array([0.0]), np.array([0.0]))[0, 0] == approx(-1.0)

    def test_declared_ranges(self):
        assert DifferenceKernel(alpha=0.5, omega=2.0).hess_xx_range == (-2.0, 2.0)
        assert QuadraticPotential(0.9).hess_range == (0.9, 0.9)
        assert CosinePotential(0.5).hess_range == (-0.5, 0.5)
        assert ZeroKernel().hess_xy_range == (0.0, 0.0)

    def test_kernel_symmetry(self):
        rng = np.random.default_rng(1)
        x, y = rng.random((5, 1)), rng.random((5, 1))
        for kernel in (DifferenceKernel(0.3, 2.0), SeparableKernel(0.7, 'sin')):
            assert kernel.value(x, y) == approx(kernel.value(y, x))

    def test_vectorized_shapes(self):
        kernel = SeparableKernel(1.0, 'cos')
        x = np.zeros((4, 2))
        y = np.ones((4, 2))
        assert kernel.value(x, y).shape == (4,)
        assert kernel.grad_x(x, y).shape == (4, 2)
        assert kernel.hess_xy(x, y).shape == (4, 2, 2)

    def test_quadratic_is_not_periodic(self):
        assert not QuadraticPotential().periodic
        assert CosinePotential().periodic

    def test_mean_field_gradient_matches_direct_sum(self):
        rng = np.random.default_rng(2)
        targets, sources = rng.random((7, 1)) * 6, rng.random((11, 1)) * 6
        for kernel in (DifferenceKernel(0.4, 1.0), SeparableKernel(-0.6, 'cos')):
            direct = KernelModel.mean_field_gradient(kernel, targets, sources, chunk_size=3)
            assert kernel.mean_field_gradient(targets, sources) == approx(direct)

    def test_repr(self):
        assert repr(DifferenceKernel(0.2, 1.0)) == 'DifferenceKernel(alpha=0.2, omega=1.0)'


class TestRegistry:
    def test_make_kernel(self):
        kernel = make_kernel('difference', alpha=0.2)
        assert isinstance(kernel, DifferenceKernel)
        assert kernel.alpha == 0.2

    def test_unknown_name(self):
        with raises(ConfigError):
            make_kernel('gaussian')
        with raises(ConfigError):
            make_potential('double_well')

    def test_invalid_parameters(self):
        with raises(ConfigError):
            make_potential('cosine', depth=1.0)
        with raises(ConfigError):
            make_kernel('separable', profile='tan')


class TestValidateModel:
    def test_builtins_pass(self, torus):
        for kernel in (ZeroKernel(), DifferenceKernel(0.5, 2.0), SeparableKernel(0.3, 'sin')):
            report = validate_model(kernel, CosinePotential(0.8), torus)
            assert report.passed, report.defects

    def test_quadratic_on_line_passes(self):
        report = validate_model(DifferenceKernel(0.1), QuadraticPotential(0.9), PositionDomain.line(5.0))
        assert report.passed
        assert 'periodicity' not in report.defects

    def test_two_dimensional(self):
        report = validate_model(SeparableKernel(0.4), CosinePotential(1.0), PositionDomain.torus(dimension=2),
                                samples=8)
        assert report.passed

    def test_wrong_hessian_fails(self, torus):
        report = validate_model(SignFlippedKernel(0.5), CosinePotential(0.8), torus)
        assert not report.passed
        assert 'kernel_hess_xx' in report.failures

    def test_non_finite_output(self, torus):
        with raises(ModelEvaluationError) as info:
            validate_model(ZeroKernel(), NanPotential(1.0), torus)
        assert info.value.point is not None

    def test_report_to_dict(self, torus):
        data = validate_model(ZeroKernel(), ZeroPotential(), torus, samples=4).to_dict()
        assert data['passed'] is True
        assert data['samples'] == 4
