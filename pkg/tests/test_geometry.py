import math

import numpy as np
import pytest

from etherphase.exceptions import ConditioningException, DomainException, NumericException
from etherphase.geometry import (
    Box,
    Membrane,
    Polyline,
    StandardPhaseSpace,
    as_point,
    check_fixture,
    count_iterations,
    fd_gradient,
    fd_jacobian,
    gauss_legendre,
    gauss_legendre_integral,
    integrate_ode,
    invert,
    line_integral_theta,
    newton_iterate,
    newton_solve,
    poisson_bracket,
    solve_linear,
    standard_omega,
)


def rotation(t, x):
    return np.array([-x[1], x[0]])


def shift_potential(z):
    return z[..., 0] ** 2 * z[..., 1] + z[..., 1] ** 3 / 3.0


class ExactlyShifted(StandardPhaseSpace):
    """The standard plane with θ replaced by θ + dS."""

    def theta(self, z):
        q, p = z[..., 0], z[..., 1]
        return super().theta(z) + np.stack([2.0 * q * p, q * q + p * p], axis=-1)


class TestStandardPhaseSpace:
    @pytest.fixture
    def plane(self):
        return StandardPhaseSpace(1)

    def test_omega(self, plane):
        assert np.array_equal(plane.omega(np.zeros(2)), np.array([[0.0, -1.0], [1.0, 0.0]]))

    def test_psi_inverts_omega(self, plane):
        z = np.array([0.3, -0.2])
        assert np.allclose(plane.psi(z) @ plane.omega(z), np.eye(2))

    def test_stacked_points(self, plane):
        points = np.zeros((4, 3, 2))
        assert plane.omega(points).shape == (4, 3, 2, 2)

    def test_theta_is_p_dq(self):
        fix = StandardPhaseSpace(2)
        assert np.array_equal(fix.theta(np.array([1.0, 2.0, 3.0, 4.0])), [3.0, 4.0, 0.0, 0.0])

    @pytest.mark.parametrize("n", [1, 2])
    def test_fixture_invariants(self, n):
        residuals = check_fixture(StandardPhaseSpace(n), np.full(2 * n, 0.2))
        assert max(residuals.values()) < 1e-8

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            StandardPhaseSpace(0)

    def test_standard_omega_block_form(self):
        omega = standard_omega(2)
        assert omega[0, 2] == -1.0
        assert omega[2, 0] == 1.0
        assert np.array_equal(omega, -omega.T)

    def test_canonical_bracket(self, plane):
        def q(z):
            return z[0]

        def p(z):
            return z[1]

        assert poisson_bracket(plane, q, p, np.zeros(2)) == pytest.approx(1.0)

    def test_bracket_is_antisymmetric(self, plane):
        rng = np.random.default_rng(4)
        a, b = rng.normal(size=2), rng.normal(size=2)
        S = rng.normal(size=(2, 2))

        def f(z):
            return math.sin(a @ z) + z @ S @ z

        def g(z):
            return math.exp(b @ z)

        for z in rng.uniform(-1.0, 1.0, size=(10, 2)):
            total = poisson_bracket(plane, f, g, z) + poisson_bracket(plane, g, f, z)
            assert abs(total) < 1e-12


class TestBox:
    def test_contains(self):
        box = Box.cube(2, 1.0)
        assert box.contains(np.array([0.5, -1.0]))
        assert not box.contains(np.array([1.5, 0.0]))
        assert not box.contains(np.array([math.nan, 0.0]))

    def test_require_raises(self):
        with pytest.raises(DomainException):
            Box.cube(2, 1.0).require(np.array([2.0, 0.0]))


def test_as_point_rejects_matrices():
    with pytest.raises(ValueError):
        as_point([[1.0, 2.0]])


class TestFiniteDifferences:
    def test_gradient(self):
        def f(z):
            return z[0] ** 2 + 3.0 * z[1]

        assert np.allclose(fd_gradient(f, np.array([1.0, 2.0])), [2.0, 3.0], atol=1e-8)

    def test_jacobian_layout(self):
        def F(z):
            return np.array([z[0] * z[1], z[1]])

        J = fd_jacobian(F, np.array([2.0, 3.0]))
        assert np.allclose(J, [[3.0, 2.0], [0.0, 1.0]], atol=1e-8)


class TestQuadrature:
    def test_weights_sum_to_one(self):
        _, weights = gauss_legendre(5)
        assert sum(weights) == pytest.approx(1.0)

    def test_exact_for_polynomials(self):
        assert float(gauss_legendre_integral(lambda t: t**5, 3)) == pytest.approx(1.0 / 6.0)

    def test_doubling_the_nodes_converges(self):
        coarse = float(gauss_legendre_integral(lambda t: math.cos(3.0 * t), 8))
        fine = float(gauss_legendre_integral(lambda t: math.cos(3.0 * t), 16))
        assert abs(coarse - fine) < 1e-9
        assert fine == pytest.approx(math.sin(3.0) / 3.0, abs=1e-12)

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            gauss_legendre(0)


class TestPolyline:
    def test_reversed(self):
        line = Polyline(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]))
        assert np.array_equal(line.reversed().start, [1.0, 1.0])
        assert np.array_equal(line.reversed().end, [0.0, 0.0])

    def test_join_drops_shared_vertex(self):
        first = Polyline(np.array([[0.0, 0.0], [1.0, 0.0]]))
        second = Polyline(np.array([[1.0, 0.0], [1.0, 1.0]]))
        assert len(first.join(second).vertices) == 3

    def test_non_finite_vertex(self):
        with pytest.raises(NumericException):
            Polyline(np.array([[0.0, math.inf]]))

    def test_theta_around_triangle(self):
        fix = StandardPhaseSpace(1)
        loop = Polyline(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), closed=True)
        assert line_integral_theta(fix, loop) == pytest.approx(-0.5)

    def test_theta_primitive_does_not_matter_on_loops(self):
        fix, shifted = StandardPhaseSpace(1), ExactlyShifted()
        loop = Polyline(np.array([[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]]), closed=True)
        assert line_integral_theta(shifted, loop) == pytest.approx(
            line_integral_theta(fix, loop), abs=1e-9
        )
        path = Polyline(np.array([[0.1, 0.0], [0.5, 0.5], [0.2, 0.8]]))
        jump = shift_potential(path.end) - shift_potential(path.start)
        assert line_integral_theta(shifted, path) - line_integral_theta(fix, path) == (
            pytest.approx(jump, abs=1e-9)
        )

    def test_membrane_area_sign(self):
        fix = StandardPhaseSpace(1)
        loop = Polyline(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
        assert Membrane((loop,)).area(fix) == pytest.approx(0.5)

    def test_mapped_pushes_tangents(self):
        line = Polyline(np.array([[0.0, 0.0], [1.0, 0.0]]))
        image = line.mapped(lambda z: 2.0 * z, lambda z: 2.0 * np.eye(2))
        assert np.array_equal(image.end, [2.0, 0.0])
        assert np.array_equal(image.tangents[0, 0], [2.0, 0.0])


class TestLinearAlgebra:
    def test_solve(self):
        x = solve_linear(np.array([[2.0, 0.0], [1.0, 1.0]]), np.array([2.0, 3.0]))
        assert np.allclose(x, [1.0, 2.0])

    def test_invert(self):
        A = np.array([[0.0, -1.0], [1.0, 0.0]])
        assert np.allclose(invert(A) @ A, np.eye(2))

    @pytest.mark.parametrize("A", [np.zeros((2, 2)), np.array([[1.0, 1.0], [1.0, 1.0]])])
    def test_singular_matrix(self, A):
        with pytest.raises(ConditioningException):
            solve_linear(A, np.ones(2))
        with pytest.raises(ConditioningException):
            invert(A)

    def test_non_finite_matrix(self):
        with pytest.raises(NumericException):
            invert(np.array([[math.nan, 0.0], [0.0, 1.0]]))


class TestNewton:
    def test_square_root(self):
        root = newton_solve(lambda x: x**2 - 2.0, np.array([1.0]))
        assert root[0] == pytest.approx(math.sqrt(2.0), abs=1e-10)

    def test_counts_iterations(self):
        with count_iterations() as counter:
            result = newton_iterate(lambda x: x**2 - 2.0, np.array([1.0]))
        assert counter[0] == result.iterations > 0

    def test_without_counter(self):
        result = newton_iterate(lambda x: x - 1.0, np.array([0.0]))
        assert result.iterations == 1

    def test_no_root(self):
        with pytest.raises(NumericException):
            newton_solve(lambda x: x**2 + 1.0, np.array([1.0]))

    def test_non_finite_seed(self):
        with pytest.raises(NumericException):
            newton_solve(lambda x: np.log(x), np.array([-1.0]))


class TestIntegrateOde:
    def test_exponential(self):
        path = integrate_ode(lambda t, x: x, np.array([1.0]), (0.0, 1.0), 64)
        assert path.end[0] == pytest.approx(math.e, abs=1e-8)
        assert len(path.vertices) == 65

    def test_fourth_order(self):
        exact = np.array([math.cos(1.0), math.sin(1.0)])
        errors = [
            np.max(np.abs(integrate_ode(rotation, np.array([1.0, 0.0]), (0.0, 1.0), n).end - exact))
            for n in (10, 20)
        ]
        assert 12.0 < errors[0] / errors[1] < 20.0

    def test_one_period_of_rotation(self):
        path = integrate_ode(rotation, np.array([1.0, 0.0]), (0.0, 2.0 * math.pi), 200)
        assert np.allclose(path.end, [1.0, 0.0], atol=1e-6)

    def test_leaving_domain(self):
        with pytest.raises(NumericException):
            integrate_ode(
                lambda t, x: np.ones_like(x), np.zeros(2), (0.0, 3.0), 8, Box.cube(2, 1.0)
            )

    def test_invalid_steps(self):
        with pytest.raises(ValueError):
            integrate_ode(lambda t, x: x, np.ones(1), (0.0, 1.0), 0)
