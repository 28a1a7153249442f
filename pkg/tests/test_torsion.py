import math

import numpy as np
import pytest
import sympy

from etherphase.ether import exp_map, reflection, reflection_inverse
from etherphase.exceptions import ParameterException
from etherphase.fixtures import load_fixture
from etherphase.torsion import (
    TORSION_IDENTITIES,
    internal_geodesic,
    involution_violation,
    make_torsion_fixture,
    torsion_matrices,
    torsion_phase_suite,
    zero_curvature_condition,
)


@pytest.fixture(scope="module")
def torsion():
    return make_torsion_fixture(1.0)


class TestMatrices:
    def test_inverse(self):
        _, N, N_inverse = torsion_matrices(0.7)
        assert np.allclose(N @ N_inverse, np.eye(2))

    def test_symbolic_inversions_are_symplectic(self):
        b = sympy.Symbol("b")
        N = sympy.Matrix([[-1, 0], [-b, -1]])
        omega = sympy.Matrix([[0, -1], [1, 0]])
        assert sympy.simplify(N.T * omega * N - omega) == sympy.zeros(2, 2)
        assert sympy.simplify(N * sympy.Matrix([[-1, 0], [b, -1]])) == sympy.eye(2)

    def test_symbolic_zero_curvature(self):
        b = sympy.Symbol("b")
        B = sympy.Matrix([[b, 0], [0, 0]])
        psi = sympy.Matrix([[0, 1], [-1, 0]])
        assert sympy.simplify(B.T - B + B * psi * B.T) == sympy.zeros(2, 2)

    @pytest.mark.parametrize("b", [-1.5, 0.0, 0.3, 1.9])
    def test_diagonal_deformations_are_flat(self, b):
        assert np.allclose(zero_curvature_condition(np.diag([b, 0.0])), 0.0)

    def test_off_diagonal_deformation_is_not_flat(self):
        assert np.max(np.abs(zero_curvature_condition(np.array([[0.0, 1.0], [0.0, 0.0]])))) > 0.5


class TestFixture:
    @pytest.mark.parametrize("b", [2.0, -2.5, math.nan])
    def test_invalid_deformation(self, b):
        with pytest.raises(ParameterException):
            make_torsion_fixture(b)

    def test_registered(self):
        E = load_fixture("torsion_const", {"b": 0.5})
        assert not E.involutive
        assert E.name == "torsion_const(b=0.5)"
        assert E.deformation == 0.5

    def test_inversion_squares(self, torsion):
        z = np.array([0.3, 0.0])
        twice = reflection(torsion, np.zeros(2), reflection(torsion, np.zeros(2), z))
        assert np.allclose(twice, [0.3, 0.6])
        assert involution_violation(torsion, np.zeros(2), z) == pytest.approx(0.6)

    def test_zero_deformation_is_involutive(self):
        E = make_torsion_fixture(0.0)
        assert E.involutive
        assert E.deformation == 0.0
        assert involution_violation(E, np.array([0.1, 0.0]), np.array([0.4, 0.2])) < 1e-14


class TestInternalGeodesic:
    def test_endpoints(self, torsion):
        x, v = np.array([0.1, -0.1]), np.array([0.2, 0.1])
        path = internal_geodesic(torsion, x, v)
        end = exp_map(torsion, x, v)
        assert np.allclose(path.end, end)
        assert np.allclose(path.start, reflection_inverse(torsion, x, end))

    def test_zero_velocity(self, torsion):
        x = np.array([0.1, -0.1])
        path = internal_geodesic(torsion, x, np.zeros(2))
        assert np.array_equal(path.start, x)
        assert np.array_equal(path.end, x)


class TestPhaseSuite:
    def test_membrane_phases(self, torsion):
        report = torsion_phase_suite(torsion, [np.array([0.1, 0.2]), np.array([-0.2, 0.1])])
        assert report.errors == []
        assert set(report.residuals) == set(TORSION_IDENTITIES)
        assert report.passed(1e-5)
        assert report.involution_violation > 0.1

    def test_failed_tolerance(self, torsion):
        report = torsion_phase_suite(torsion, [np.array([0.1, 0.2])])
        report.residuals["closedness"] = 1.0
        assert not report.passed(1e-5)

    @pytest.mark.parametrize("b", [1e-2, 1e-4, 0.0])
    def test_residuals_approach_the_weyl_structure(self, b):
        points = [np.array([0.1, 0.2]), np.array([-0.2, 0.1])]
        weyl = torsion_phase_suite(load_fixture("euclid_weyl_2n"), points)
        report = torsion_phase_suite(make_torsion_fixture(b), points)
        assert report.errors == []
        for identity in TORSION_IDENTITIES:
            assert report.residuals[identity] == pytest.approx(
                weyl.residuals[identity], abs=1e-6
            )
        assert report.involution_violation == pytest.approx(0.6 * b, abs=1e-12)
