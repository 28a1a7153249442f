from dataclasses import replace

import numpy as np
import pytest

from etherphase.ether import (
    boundary_residual,
    connection_from_family,
    diagonal_derivative_residual,
    ether_eval,
    ether_from_reflections,
    ether_geodesic,
    ether_translation,
    exp_map,
    exp_reflection_residual,
    log_map,
    midpoint,
    reflection,
    reflection_by_integration,
    reflection_inverse,
    reflection_jacobian,
    sample_pairs,
    sample_points,
    symplectic_compatibility_residual,
    symplecticity_residual,
    zero_curvature_residual,
)
from etherphase.exceptions import DomainException
from etherphase.fixtures import load_fixture


@pytest.fixture
def euclid():
    return load_fixture("euclid_weyl_2n")


@pytest.fixture
def darboux():
    return load_fixture("darboux_pullback")


class TestEuclid:
    def test_hamiltonian(self, euclid):
        value = ether_eval(euclid, np.zeros(2), np.array([1.0, 0.0]))
        assert np.allclose(value, [0.0, 2.0])

    def test_reflection(self, euclid):
        x, z = np.array([0.2, 0.1]), np.array([0.5, -0.3])
        assert np.allclose(reflection(euclid, x, z), 2.0 * x - z)

    def test_reflection_from_dynamic_equation(self, euclid):
        rng = np.random.default_rng(3)
        for x, z in sample_pairs(euclid, rng, 20):
            integrated = reflection_by_integration(euclid, x, z)
            assert np.max(np.abs(integrated - (2.0 * x - z))) < 1e-7

    def test_path_independence(self, euclid):
        x, z = np.array([0.1, 0.2]), np.array([0.4, -0.1])
        via = np.array([0.5, 0.5])
        assert np.allclose(
            reflection_by_integration(euclid, x, z, via),
            reflection_by_integration(euclid, x, z),
            atol=1e-7,
        )

    def test_hamiltonian_from_reflections(self, euclid):
        x, z = np.array([0.1, -0.2]), np.array([0.4, 0.3])
        rebuilt = ether_from_reflections(
            euclid.fixture, euclid.closed_forms.reflection, x, z
        )
        assert np.allclose(rebuilt, ether_eval(euclid, x, z), atol=1e-6)

    def test_zero_curvature(self, euclid):
        assert zero_curvature_residual(euclid, np.zeros(2), np.array([0.3, 0.4])) < 1e-6

    def test_corrupted_structure_fails_zero_curvature(self, euclid):
        corrupted = euclid.scaled(1.1)
        assert corrupted.name == "euclid_weyl_2n*1.1"
        assert zero_curvature_residual(corrupted, np.zeros(2), np.array([0.3, 0.4])) > 0.1

    def test_diagonal(self, euclid):
        assert diagonal_derivative_residual(euclid, np.array([0.3, -0.4])) < 1e-8
        assert boundary_residual(euclid, np.array([0.3, -0.4])) < 1e-4

    def test_exp_log_midpoint(self, euclid):
        x, v = np.array([0.1, 0.1]), np.array([0.2, -0.1])
        z = exp_map(euclid, x, v)
        assert np.allclose(z, x + v)
        assert np.allclose(log_map(euclid, x, z), v)
        assert np.allclose(midpoint(euclid, z, 2.0 * x - z), x)

    def test_reflection_jacobian(self, euclid):
        x, z = np.array([0.1, 0.2]), np.array([-0.3, 0.4])
        assert np.allclose(reflection_jacobian(euclid, x, z), -np.eye(2))

    def test_translation(self, euclid):
        x, y, z = np.array([0.3, 0.0]), np.array([0.1, 0.1]), np.array([-0.2, 0.5])
        assert np.allclose(ether_translation(euclid, x, y, z), z + 2.0 * (x - y))

    def test_exp_reflection(self, euclid):
        assert exp_reflection_residual(euclid, np.zeros(2), np.array([0.2, 0.1])) < 1e-12

    def test_geodesic_is_centered(self, euclid):
        path = ether_geodesic(euclid, np.zeros(2), np.array([0.2, 0.0]))
        assert np.allclose(path.start, [-0.2, 0.0])
        assert np.allclose(path.end, [0.2, 0.0])

    def test_higher_dimension(self):
        E = load_fixture("euclid_weyl_2n", {"n": 2})
        x, z = np.zeros(4), np.array([0.1, 0.2, 0.3, 0.4])
        assert zero_curvature_residual(E, x, z) < 1e-6
        assert np.allclose(reflection(E, x, z), -z)


class TestDarboux:
    def test_structure_equations(self, darboux):
        rng = np.random.default_rng(0)
        for x, z in sample_pairs(darboux, rng, 10):
            assert zero_curvature_residual(darboux, x, z) < 1e-6
            assert symplecticity_residual(darboux, x, z) < 1e-6

    def test_skew_symmetry(self, darboux):
        x, z = np.array([0.3, 0.1]), np.array([0.5, -0.2])
        assert np.allclose(
            ether_eval(darboux, x, reflection(darboux, x, z)), -ether_eval(darboux, x, z), atol=1e-8
        )

    def test_numerical_reflection_matches_closed_form(self, darboux):
        numerical = darboux.without_closed_forms("reflection")
        x, z = np.array([0.3, 0.1]), np.array([0.5, -0.2])
        assert np.allclose(reflection(numerical, x, z), reflection(darboux, x, z), atol=1e-6)

    def test_connection_is_symplectic(self, darboux):
        x = np.array([0.2, -0.1])
        assert connection_from_family(darboux, x).shape == (2, 2, 2)
        assert symplectic_compatibility_residual(darboux, x) < 1e-4


class TestValidity:
    def test_outside_validity_radius(self, euclid):
        E = replace(euclid, validity_radius=0.5)
        with pytest.raises(DomainException):
            ether_eval(E, np.zeros(2), np.array([1.0, 0.0]))

    def test_outside_domain(self, euclid):
        with pytest.raises(DomainException):
            reflection(euclid, np.array([10.0, 0.0]), np.zeros(2))

    def test_samples_stay_inside(self, euclid):
        points = sample_points(euclid, np.random.default_rng(1), 50, radius=0.6)
        assert points.shape == (50, 2)
        assert np.all(np.abs(points) <= 0.6)


class TestTorsionInversions:
    def test_inverse_undoes_inversion(self):
        E = load_fixture("torsion_const", {"b": 1.0})
        x, z = np.array([0.1, 0.2]), np.array([0.3, -0.1])
        assert np.allclose(reflection_inverse(E, x, reflection(E, x, z)), z)

    def test_not_an_involution(self):
        E = load_fixture("torsion_const", {"b": 1.0})
        x, z = np.zeros(2), np.array([0.3, 0.0])
        assert np.max(np.abs(reflection(E, x, reflection(E, x, z)) - z)) > 0.1
