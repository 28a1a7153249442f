import math

import numpy as np
import pytest

from etherphase.exceptions import (
    AmbiguityException,
    ComposabilityException,
    DomainException,
    ParameterException,
)
from etherphase.fixtures import load_fixture
from etherphase.groupoid import (
    OPERATOR_IDENTITIES,
    FlowSection,
    GroupoidElement,
    LagrangianCurve,
    LagrangianSection,
    chord_find,
    chord_gradient,
    chord_hj_residual,
    chord_phase,
    chord_phase_function,
    chord_product,
    circle,
    element_from_arrow,
    element_with_left,
    element_with_right,
    extension_gradients,
    extension_phase,
    groupoid_inverse,
    groupoid_multiply,
    hj_residual,
    lagrangian_product_point,
    left_expansion_residuals,
    left_map,
    lie_engel_residual,
    operator_calculus_check,
    product_section,
    restriction_point,
    right_map,
    section_element_with_left,
    section_element_with_right,
    unit,
    zero_section,
)
from etherphase.phase_maps import (
    dynamic_phase,
    harmonic_oscillator,
    linear_map,
    linear_phase,
    phase_function,
    phase_gradient,
    translation_map,
)
from etherphase.phase_product import phase_product


@pytest.fixture
def euclid():
    return load_fixture("euclid_weyl_2n")


@pytest.fixture
def darboux():
    return load_fixture("darboux_pullback")


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return linear_map(np.array([[c, -s], [s, c]]))


def gap(m, n):
    return max(np.max(np.abs(m.base - n.base)), np.max(np.abs(m.momentum - n.momentum)))


class TestLeftRight:
    def test_euclid_values(self, euclid):
        m = GroupoidElement(np.zeros(2), np.array([0.0, 2.0]))
        assert np.allclose(left_map(euclid, m), [1.0, 0.0])
        assert np.allclose(right_map(euclid, m), [-1.0, 0.0])

    def test_unit(self, darboux):
        x = np.array([0.2, -0.1])
        assert np.array_equal(left_map(darboux, unit(x)), x)
        assert np.allclose(right_map(darboux, unit(x)), x)

    def test_element_from_arrow(self, darboux):
        left, right = np.array([0.3, 0.1]), np.array([0.1, -0.2])
        m = element_from_arrow(darboux, left, right)
        assert np.allclose(left_map(darboux, m), left, atol=1e-8)
        assert np.allclose(right_map(darboux, m), right, atol=1e-8)

    def test_element_builders(self, darboux):
        x, target = np.array([0.1, 0.2]), np.array([0.3, 0.1])
        assert np.allclose(left_map(darboux, element_with_left(darboux, x, target)), target)
        assert np.allclose(right_map(darboux, element_with_right(darboux, x, target)), target)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            GroupoidElement(np.zeros(2), np.zeros(4))

    @pytest.mark.parametrize("name", ["euclid_weyl_2n", "darboux_pullback"])
    def test_lie_engel(self, name):
        E = load_fixture(name)
        m = GroupoidElement(np.array([0.1, 0.2]), np.array([0.3, -0.2]))
        assert lie_engel_residual(E, m) < 1e-5

    def test_expansion(self, darboux):
        residuals = left_expansion_residuals(darboux, np.array([0.1, -0.2]))
        assert residuals[0] < 1e-12
        assert residuals[1] < 1e-4
        assert residuals[2] < 1e-3


class TestMultiplication:
    def test_product_arrow(self, darboux):
        a, b, c = np.array([0.2, 0.1]), np.array([0.0, 0.1]), np.array([-0.1, -0.1])
        m2, m1 = element_from_arrow(darboux, a, b), element_from_arrow(darboux, b, c)
        product = groupoid_multiply(darboux, m2, m1)
        assert np.allclose(left_map(darboux, product), a, atol=1e-8)
        assert np.allclose(right_map(darboux, product), c, atol=1e-8)

    def test_not_composable(self, euclid):
        m2 = element_from_arrow(euclid, np.array([0.2, 0.1]), np.zeros(2))
        m1 = element_from_arrow(euclid, np.array([0.1, 0.1]), np.zeros(2))
        with pytest.raises(ComposabilityException):
            groupoid_multiply(euclid, m2, m1)

    def test_inverse_negates_momentum(self, euclid):
        m = GroupoidElement(np.array([0.1, 0.0]), np.array([0.2, 0.4]))
        inverse = groupoid_inverse(euclid, m)
        assert np.allclose(inverse.base, m.base)
        assert np.allclose(inverse.momentum, -m.momentum)

    def test_inverse_law(self, darboux):
        m = element_from_arrow(darboux, np.array([0.2, 0.1]), np.array([-0.1, 0.0]))
        product = groupoid_multiply(darboux, m, groupoid_inverse(darboux, m))
        assert gap(product, unit(left_map(darboux, m))) < 1e-7


class TestSections:
    def test_zero_section_is_unit(self, darboux):
        phi = phase_function(darboux, rotation(0.2), np.zeros(2))
        x = np.array([0.1, 0.15])
        point = lagrangian_product_point(darboux, zero_section(2), LagrangianSection(phi), x)
        assert np.allclose(point.momentum, phi.grad(x), atol=1e-7)

    @pytest.mark.parametrize("side", ["left", "right"])
    def test_section_elements(self, euclid, side):
        c, target = np.array([0.2, 0.4]), np.array([0.1, -0.3])
        section = LagrangianSection(linear_phase(c))
        if side == "left":
            m = section_element_with_left(euclid, section, target)
            image = left_map(euclid, m)
        else:
            m = section_element_with_right(euclid, section, target)
            image = right_map(euclid, m)
        assert np.allclose(m.momentum, c)
        assert np.allclose(image, target, atol=1e-8)

    def test_product_section_phase(self, euclid):
        first = phase_function(euclid, translation_map(np.array([0.1, 0.0])), np.zeros(2))
        second = phase_function(euclid, rotation(0.2), np.zeros(2))
        section = product_section(euclid, LagrangianSection(second), LagrangianSection(first))
        x = np.array([0.2, -0.1])
        expected = phase_product(euclid, second, first, x) - phase_product(
            euclid, second, first, np.zeros(2)
        )
        assert section.phase(np.zeros(2)) == 0.0
        assert section.phase(x) == pytest.approx(expected, abs=1e-6)

    def test_product_point(self, euclid):
        first = phase_function(euclid, translation_map(np.array([0.1, 0.0])), np.zeros(2))
        second = phase_function(euclid, rotation(0.2), np.zeros(2))
        x = np.array([0.1, -0.1])
        point = lagrangian_product_point(
            euclid, LagrangianSection(second), LagrangianSection(first), x
        )
        composed = first.transform.then(second.transform)
        assert np.allclose(point.momentum, phase_gradient(euclid, composed, x), atol=1e-6)


class TestChords:
    def test_circle_oracle(self, euclid):
        expected = math.acos(0.5) - 0.5 * math.sqrt(0.75)
        assert chord_phase(euclid, circle(), np.array([0.5, 0.0])) == pytest.approx(
            expected, abs=1e-6
        )

    def test_chord_phase_function(self, euclid):
        curve, x = circle(), np.array([0.5, 0.0])
        phi = chord_phase_function(euclid, curve)
        assert phi(x) == pytest.approx(math.acos(0.5) - 0.5 * math.sqrt(0.75), abs=1e-6)
        assert np.allclose(phi.grad(x), chord_gradient(euclid, curve, x))

    def test_reverse_orientation(self, euclid):
        x = np.array([0.5, 0.0])
        assert chord_phase(euclid, circle(), x, reverse=True) == pytest.approx(
            -chord_phase(euclid, circle(), x), abs=1e-8
        )

    def test_chord_feet(self, euclid):
        chord = chord_find(euclid, circle(), np.array([0.5, 0.0]))
        assert np.allclose(chord.a + chord.b, [1.0, 0.0])
        assert np.allclose([np.linalg.norm(chord.a), np.linalg.norm(chord.b)], 1.0)

    @pytest.mark.parametrize("x", [[3.0, 0.0], [1.05, 0.0]])
    def test_no_chord_outside_the_circle(self, euclid, x):
        with pytest.raises(DomainException):
            chord_find(euclid, circle(), np.array(x))

    def test_center_is_ambiguous(self, euclid):
        with pytest.raises(AmbiguityException):
            chord_find(euclid, circle(), np.zeros(2))

    def test_point_on_curve(self, euclid):
        x = np.array([0.0, 1.0])
        assert chord_find(euclid, circle(), x).degenerate
        assert chord_phase(euclid, circle(), x) == 0.0
        assert np.array_equal(chord_gradient(euclid, circle(), x), np.zeros(2))

    def test_invalid_radius(self):
        with pytest.raises(ParameterException):
            circle(0.0)

    def test_hamilton_jacobi(self, euclid):
        assert chord_hj_residual(euclid, circle(0.5), np.array([0.2, 0.1])) < 1e-6

    def test_hamilton_jacobi_needs_levels(self, euclid):
        segment = LagrangianCurve(lambda s: np.array([s, 0.0]), (-1.0, 1.0))
        with pytest.raises(ParameterException):
            chord_hj_residual(euclid, segment, np.array([0.2, 0.1]))

    def test_gradient(self, euclid):
        curve = circle(0.5)
        x = np.array([0.2, 0.1])
        h = 1e-3
        numerical = np.array(
            [
                (chord_phase(euclid, curve, x + e) - chord_phase(euclid, curve, x - e)) / (2 * h)
                for e in h * np.eye(2)
            ]
        )
        assert np.allclose(numerical, chord_gradient(euclid, curve, x), atol=1e-5)

    def test_flow_product_needs_time(self, euclid):
        with pytest.raises(ParameterException):
            chord_product(euclid, circle(0.5), harmonic_oscillator(), np.array([0.2, 0.1]))

    def test_flow_product_at_zero_time(self, euclid):
        x = np.array([0.2, 0.1])
        value = chord_product(euclid, circle(0.5), harmonic_oscillator(), x, t=0.0)
        assert value == chord_phase(euclid, circle(0.5), x)


class TestExtensions:
    @pytest.fixture
    def section(self):
        return FlowSection(harmonic_oscillator(), 0.5)

    def test_restriction(self, euclid, section):
        x = np.array([0.2, -0.1])
        y = restriction_point(euclid, section, x)
        value = extension_phase(euclid, section, x, y)
        assert value == pytest.approx(dynamic_phase(euclid, section.system, x, 0.5), abs=1e-6)

    def test_gradients(self, euclid, section):
        x = np.array([0.2, -0.1])
        y = restriction_point(euclid, section, x) + np.array([0.02, 0.01])
        h = 1e-3
        dx = np.array(
            [
                (
                    extension_phase(euclid, section, x + e, y)
                    - extension_phase(euclid, section, x - e, y)
                )
                / (2 * h)
                for e in h * np.eye(2)
            ]
        )
        gx, _ = extension_gradients(euclid, section, x, y)
        assert np.allclose(dx, gx, atol=1e-5)

    def test_curve_restriction(self, euclid):
        curve = circle(0.5)
        x = np.array([0.2, 0.1])
        foot = chord_find(euclid, curve, x).b
        assert extension_phase(euclid, curve, x, foot) == pytest.approx(
            chord_phase(euclid, curve, x), abs=1e-6
        )


class TestOperators:
    def test_identities_hold(self, euclid):
        first = LagrangianSection(phase_function(euclid, rotation(0.15), np.zeros(2)))
        second = LagrangianSection(
            phase_function(euclid, translation_map(np.array([0.05, -0.05])), np.zeros(2))
        )
        report = operator_calculus_check(euclid, first, second, samples=2, radius=0.2)
        assert report.errors == []
        assert set(report.residuals) == set(OPERATOR_IDENTITIES)
        assert report.max_residual() < 1e-4

    def test_selected_identities(self, euclid):
        first = LagrangianSection(phase_function(euclid, rotation(0.1), np.zeros(2)))
        report = operator_calculus_check(
            euclid, first, first, samples=1, identities=("unit", "inverse")
        )
        assert set(report.residuals) == {"unit", "inverse"}


class TestHamiltonJacobi:
    def test_dynamic_phase(self, euclid):
        system = harmonic_oscillator()

        def phase(w, s):
            return dynamic_phase(euclid, system, w, s)

        assert hj_residual(euclid, system, phase, np.array([0.3, 0.1]), 0.4) < 1e-4
