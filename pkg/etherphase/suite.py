"""
The identity catalogue run by `etherphase verify`. Identity ids are a short
tag followed by a slug, e.g. "eq2.3-skew" or "thm3.2ii-cocycle".
"""
import math
from concurrent.futures import ThreadPoolExecutor
from logging import getLogger
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from etherphase.checks import CheckReport, IdentityCheck, register_check
from etherphase.ether import (
    EtherStructure,
    boundary_residual,
    ether_eval,
    ether_from_reflections,
    exp_reflection_residual,
    hamiltonian_z_jacobian,
    midpoint,
    reflection,
    reflection_by_integration,
    sample_pairs,
    sample_points,
    symplectic_compatibility_residual,
    symplecticity_residual,
    zero_curvature_residual,
)
from etherphase.exceptions import EtherPhaseException, InvalidConfigException
from etherphase.geometry import StandardPhaseSpace, fd_gradient
from etherphase.groupoid import (
    FlowSection,
    GroupoidElement,
    LagrangianSection,
    chord_find,
    chord_flow_product,
    chord_gradient,
    chord_hj_residual,
    chord_map_product,
    chord_phase,
    chord_phase_function,
    circle,
    element_from_arrow,
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
    restriction_point,
    right_map,
    unit,
    zero_section,
)
from etherphase.phase_maps import (
    HamiltonianSystem,
    SymplecticMap,
    closedness_residual,
    dynamic_phase,
    dynamic_phase_function,
    fixed_midpoint,
    flow_map,
    gradient_line_integral,
    harmonic_oscillator,
    linear_map,
    map_from_phase,
    normalized_phase,
    phase_function,
    phase_gradient,
    poincare_cartan_area,
    translation_map,
)
from etherphase.phase_product import (
    ether_translation_map,
    flow_phase_product,
    normalized_composition_residual,
    phase_product,
    product_phase_function,
    product_stationarity_residual,
    triangle_phase,
)
from etherphase.registry import CHECKS
from etherphase.torsion import involution_violation, torsion_phase_suite

logger = getLogger(__name__)


def involutive(E: EtherStructure) -> bool:
    return E.involutive


def torsion(E: EtherStructure) -> bool:
    return not E.involutive


def plane_involutive(E: EtherStructure) -> bool:
    return E.involutive and E.dim == 2


def euclid_plane(E: EtherStructure) -> bool:
    return E.name == "euclid_weyl_2n" and E.dim == 2


def _point(E: EtherStructure, rng: np.random.Generator, radius: float = 0.3) -> np.ndarray:
    return sample_points(E, rng, 1, radius)[0]


def _pair(E: EtherStructure, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    return sample_pairs(E, rng, 1)[0]


def _near(rng: np.random.Generator, x: np.ndarray, scale: float) -> np.ndarray:
    return x + scale * rng.uniform(-1.0, 1.0, size=x.shape)


def oscillator(E: EtherStructure, center: Optional[np.ndarray] = None) -> HamiltonianSystem:
    if E.dim == 2:
        return harmonic_oscillator(center)
    c = np.zeros(E.dim) if center is None else center
    return HamiltonianSystem(
        lambda z: 0.5 * float((z - c) @ (z - c)), lambda z: z - c, name="isotropic oscillator"
    )


def quadratic_system(
    E: EtherStructure, rng: np.random.Generator, scale: float = 0.3
) -> HamiltonianSystem:
    """H = ½ zᵀSz + k·z with random S and k of size `scale`."""
    A = rng.normal(size=(E.dim, E.dim))
    S = 0.5 * scale * (A + A.T) / max(1.0, float(np.linalg.norm(A)))
    k = 0.3 * scale * rng.uniform(-1.0, 1.0, size=E.dim)
    return HamiltonianSystem(
        lambda z: float(0.5 * z @ S @ z + k @ z), lambda z: S @ z + k, name="quadratic"
    )


def sample_map(E: EtherStructure, rng: np.random.Generator, scale: float = 0.3) -> SymplecticMap:
    """A small symplectic map: affine on constant-form charts, a quadratic flow otherwise."""
    if not isinstance(E.fixture, StandardPhaseSpace):
        return flow_map(quadratic_system(E, rng, scale), E.fixture, 1.0)
    psi = E.fixture.psi(np.zeros(E.dim))
    A = rng.normal(size=(E.dim, E.dim))
    S = 0.5 * scale * (A + A.T) / max(1.0, float(np.linalg.norm(A)))
    M = scipy.linalg.expm(psi.T @ S)
    center = _point(E, rng)
    shift = 0.3 * scale * rng.uniform(-1.0, 1.0, size=E.dim)
    return linear_map(M, center).then(translation_map(shift))


def _annulus_point(rng: np.random.Generator, inner: float, outer: float) -> np.ndarray:
    angle = rng.uniform(-math.pi, math.pi)
    radius = rng.uniform(inner, outer)
    return radius * np.array([math.cos(angle), math.sin(angle)])


def _gap(m: GroupoidElement, n: GroupoidElement) -> float:
    return float(max(np.max(np.abs(m.base - n.base)), np.max(np.abs(m.momentum - n.momentum))))


# structure equations


def zero_curvature(E: EtherStructure, rng: np.random.Generator) -> float:
    x, z = _pair(E, rng)
    return zero_curvature_residual(E, x, z)


def boundary_h(E: EtherStructure, rng: np.random.Generator) -> float:
    x = _point(E, rng, 0.6)
    return float(np.max(np.abs(ether_eval(E, x, x))))


def boundary_dh(E: EtherStructure, rng: np.random.Generator) -> float:
    x = _point(E, rng, 0.6)
    return float(np.max(np.abs(hamiltonian_z_jacobian(E, x, x) - 2.0 * E.fixture.omega(x))))


def boundary_d2h(E: EtherStructure, rng: np.random.Generator) -> float:
    return boundary_residual(E, _point(E, rng, 0.6))


def skew(E: EtherStructure, rng: np.random.Generator) -> float:
    x, z = _pair(E, rng)
    return float(np.max(np.abs(ether_eval(E, x, reflection(E, x, z)) + ether_eval(E, x, z))))


def fixed_point(E: EtherStructure, rng: np.random.Generator) -> float:
    x = _point(E, rng, 0.6)
    return float(np.max(np.abs(reflection(E, x, x) - x)))


def involution(E: EtherStructure, rng: np.random.Generator) -> float:
    x, z = _pair(E, rng)
    return involution_violation(E, x, z)


def symplectic(E: EtherStructure, rng: np.random.Generator) -> float:
    x, z = _pair(E, rng)
    return symplecticity_residual(E, x, z)


def exp_reflection(E: EtherStructure, rng: np.random.Generator) -> float:
    x = _point(E, rng)
    v = 0.2 * rng.uniform(-1.0, 1.0, size=E.dim)
    return exp_reflection_residual(E, x, v)


def path_independence(E: EtherStructure, rng: np.random.Generator) -> float:
    x, z = _pair(E, rng)
    via = _near(rng, 0.5 * (x + z), 0.1)
    direct = reflection_by_integration(E, x, z)
    residual = float(np.max(np.abs(direct - reflection_by_integration(E, x, z, via))))
    if E.closed_forms.reflection is not None:
        residual = max(residual, float(np.max(np.abs(direct - reflection(E, x, z)))))
    return residual


def from_reflections(E: EtherStructure, rng: np.random.Generator) -> float:
    x, z = _pair(E, rng)
    family = E.closed_forms.reflection
    assert family is not None
    rebuilt = ether_from_reflections(
        E.fixture, family, x, z, E.settings.h_fd, E.settings.quad_order
    )
    return float(np.max(np.abs(rebuilt - ether_eval(E, x, z))))


def symplectic_connection(E: EtherStructure, rng: np.random.Generator) -> float:
    return symplectic_compatibility_residual(E, _point(E, rng, 0.6))


# phase functions


def reconstruction(E: EtherStructure, rng: np.random.Generator) -> float:
    gamma = sample_map(E, rng)
    x = _point(E, rng)
    x_tilde = fixed_midpoint(E, gamma, x)
    return float(np.max(np.abs(gamma(x_tilde) - reflection(E, x, x_tilde))))


def closedness(E: EtherStructure, rng: np.random.Generator) -> float:
    gamma = sample_map(E, rng)
    x = _point(E, rng)
    return closedness_residual(lambda w: phase_gradient(E, gamma, w), x, E.settings.h_fd2)


def membrane(E: EtherStructure, rng: np.random.Generator) -> float:
    gamma = sample_map(E, rng)
    x, y = _pair(E, rng)
    line = gradient_line_integral(
        lambda w: phase_gradient(E, gamma, w), y, x, E.settings.quad_order
    )
    return abs(line - normalized_phase(E, gamma, x, y))


def cocycle(E: EtherStructure, rng: np.random.Generator) -> float:
    gamma = sample_map(E, rng)
    x = _point(E, rng)
    y, z = _near(rng, x, 0.2), _near(rng, x, 0.2)
    return abs(
        normalized_phase(E, gamma, x, y)
        + normalized_phase(E, gamma, y, z)
        - normalized_phase(E, gamma, x, z)
    )


def round_trip(E: EtherStructure, rng: np.random.Generator) -> float:
    gamma = sample_map(E, rng)
    y, z = _pair(E, rng)
    phi = phase_function(E, gamma, y)
    return float(np.max(np.abs(map_from_phase(E, phi, z) - gamma(z))))


def dynamic(E: EtherStructure, rng: np.random.Generator) -> float:
    system = quadratic_system(E, rng)
    t = rng.uniform(-0.5, 0.5)
    x, y = _pair(E, rng)
    flow = flow_map(system, E.fixture, t)
    return abs(
        dynamic_phase(E, system, x, t)
        - dynamic_phase(E, system, y, t)
        - normalized_phase(E, flow, x, y)
    )


def oscillator_phase(E: EtherStructure, rng: np.random.Generator) -> float:
    return abs(dynamic_phase(E, harmonic_oscillator(), np.array([1.0, 0.0]), 0.5 * math.pi) + 1.0)


def poincare_cartan(E: EtherStructure, rng: np.random.Generator) -> float:
    system = quadratic_system(E, rng)
    t = rng.uniform(-0.5, 0.5)
    z, w = _pair(E, rng)
    return abs(poincare_cartan_area(E, system, z, w, t) - t * (system(z) - system(w)))


# phase products


def _phases(E: EtherStructure, rng: np.random.Generator, count: int, scale: float = 0.2) -> List:
    return [phase_function(E, sample_map(E, rng, scale), _point(E, rng)) for _ in range(count)]


def product_unit(E: EtherStructure, rng: np.random.Generator) -> float:
    (phi,) = _phases(E, rng, 1)
    zero = zero_section(E.dim).phase
    x = _point(E, rng)
    value = phi(x)
    return max(
        abs(phase_product(E, phi, zero, x) - value), abs(phase_product(E, zero, phi, x) - value)
    )


def product_associativity(E: EtherStructure, rng: np.random.Generator) -> float:
    phi1, phi2, phi3 = _phases(E, rng, 3, 0.15)
    x = _point(E, rng)
    left = phase_product(E, product_phase_function(E, phi3, phi2), phi1, x)
    right = phase_product(E, phi3, product_phase_function(E, phi2, phi1), x)
    return abs(left - right)


def product_gradient(E: EtherStructure, rng: np.random.Generator) -> float:
    phi1, phi2 = _phases(E, rng, 2)
    x = _point(E, rng)
    assert phi1.transform is not None and phi2.transform is not None
    composed = phi1.transform.then(phi2.transform)
    numeric = fd_gradient(lambda w: phase_product(E, phi2, phi1, w), x, E.settings.h_fd2)
    return float(np.max(np.abs(numeric - phase_gradient(E, composed, x))))


def group_law(E: EtherStructure, rng: np.random.Generator) -> float:
    system = quadratic_system(E, rng)
    t, tau = rng.uniform(-0.5, 0.5, size=2)
    x = _point(E, rng)
    product = phase_product(
        E, dynamic_phase_function(E, system, tau), dynamic_phase_function(E, system, t), x
    )
    return abs(product - dynamic_phase(E, system, x, tau + t))


def normalized_composition(E: EtherStructure, rng: np.random.Generator) -> float:
    gamma1, gamma2 = sample_map(E, rng, 0.2), sample_map(E, rng, 0.2)
    x, y = _pair(E, rng)
    return abs(normalized_composition_residual(E, gamma2, gamma1, y, x))


def triangle_translation(E: EtherStructure, rng: np.random.Generator) -> float:
    x = _point(E, rng)
    y, z = _near(rng, x, 0.2), _near(rng, x, 0.2)
    numeric = fd_gradient(lambda w: triangle_phase(E, w, y, z), x, E.settings.h_fd2)
    return float(np.max(np.abs(numeric - phase_gradient(E, ether_translation_map(E, y, z), x))))


def triangle_oracle(E: EtherStructure, rng: np.random.Generator) -> float:
    return abs(triangle_phase(E, np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0])) + 2.0)


def stationary(E: EtherStructure, rng: np.random.Generator) -> float:
    phi1, phi2 = _phases(E, rng, 2)
    return product_stationarity_residual(E, phi2, phi1, _point(E, rng))


# groupoid


def _element(E: EtherStructure, rng: np.random.Generator) -> GroupoidElement:
    x, z = _pair(E, rng)
    return GroupoidElement(x, ether_eval(E, x, z))


def left_right(E: EtherStructure, rng: np.random.Generator) -> float:
    m = _element(E, rng)
    return float(np.max(np.abs(left_map(E, m) - reflection(E, m.base, right_map(E, m)))))


def lie_engel(E: EtherStructure, rng: np.random.Generator) -> float:
    return lie_engel_residual(E, _element(E, rng))


def expansion(E: EtherStructure, rng: np.random.Generator) -> float:
    residuals = left_expansion_residuals(E, _point(E, rng))
    return max(residuals[0], residuals[1])


def expansion_second(E: EtherStructure, rng: np.random.Generator) -> float:
    return left_expansion_residuals(E, _point(E, rng))[2]


def groupoid_associativity(E: EtherStructure, rng: np.random.Generator) -> float:
    a = _point(E, rng)
    b, c, d = (_near(rng, a, 0.15) for _ in range(3))
    m3, m2, m1 = (element_from_arrow(E, *arrow) for arrow in ((a, b), (b, c), (c, d)))
    left = groupoid_multiply(E, groupoid_multiply(E, m3, m2), m1)
    right = groupoid_multiply(E, m3, groupoid_multiply(E, m2, m1))
    return _gap(left, right)


def unit_inverse(E: EtherStructure, rng: np.random.Generator) -> float:
    a = _point(E, rng)
    m = element_from_arrow(E, a, _near(rng, a, 0.2))
    inverse = groupoid_inverse(E, m)
    left_unit, right_unit = unit(left_map(E, m)), unit(right_map(E, m))
    return max(
        _gap(groupoid_multiply(E, m, right_unit), m),
        _gap(groupoid_multiply(E, left_unit, m), m),
        _gap(groupoid_multiply(E, m, inverse), left_unit),
        _gap(groupoid_multiply(E, inverse, m), right_unit),
    )


def section_product(E: EtherStructure, rng: np.random.Generator) -> float:
    phi1, phi2 = _phases(E, rng, 2)
    x = _point(E, rng)
    assert phi1.transform is not None and phi2.transform is not None
    composed = phi1.transform.then(phi2.transform)
    point = lagrangian_product_point(E, LagrangianSection(phi2), LagrangianSection(phi1), x)
    return float(np.max(np.abs(point.momentum - phase_gradient(E, composed, x))))


def hamilton_jacobi(E: EtherStructure, rng: np.random.Generator) -> float:
    system = oscillator(E)
    x = _point(E, rng, 0.8)
    x = x * min(1.0, 0.8 / max(float(np.linalg.norm(x)), 1e-12))
    t = rng.uniform(0.05, 1.0) * rng.choice([-1.0, 1.0])
    (phi0,) = _phases(E, rng, 1, 0.15)
    dynamic_residual = hj_residual(E, system, lambda w, s: dynamic_phase(E, system, w, s), x, t)
    product_residual = hj_residual(
        E, system, lambda w, s: flow_phase_product(E, system, phi0, w, s), x, t
    )
    return max(dynamic_residual, product_residual)


# chords and extensions

CHORD_RADIUS = 0.5


def chord_gradient_law(E: EtherStructure, rng: np.random.Generator) -> float:
    curve = circle(CHORD_RADIUS)
    x = _annulus_point(rng, 0.1, 0.35)
    numeric = fd_gradient(lambda w: chord_phase(E, curve, w), x, E.settings.h_fd2)
    return float(np.max(np.abs(numeric - chord_gradient(E, curve, x))))


def chord_oracle(E: EtherStructure, rng: np.random.Generator) -> float:
    expected = math.acos(0.5) - 0.5 * math.sqrt(0.75)
    return abs(chord_phase(E, circle(), np.array([0.5, 0.0])) - expected)


def chord_hamilton_jacobi(E: EtherStructure, rng: np.random.Generator) -> float:
    return chord_hj_residual(E, circle(CHORD_RADIUS), _annulus_point(rng, 0.1, 0.35))


def chord_flow(E: EtherStructure, rng: np.random.Generator) -> float:
    curve = circle(CHORD_RADIUS)
    system = harmonic_oscillator(np.array([0.1, 0.05]))
    t = rng.uniform(0.1, 0.4)
    x = _annulus_point(rng, 0.1, 0.3)
    membrane_value = chord_flow_product(E, curve, system, x, t)
    return abs(membrane_value - flow_phase_product(E, system, chord_phase_function(E, curve), x, t))


def chord_map(E: EtherStructure, rng: np.random.Generator) -> float:
    curve = circle(CHORD_RADIUS)
    system = harmonic_oscillator(np.array([0.1, 0.05]))
    t = rng.uniform(0.1, 0.4)
    x = _annulus_point(rng, 0.1, 0.3)
    gamma = flow_map(system, E.fixture, t)
    c0 = curve(0.0)
    y = midpoint(E, gamma(c0), c0)
    expected = chord_flow_product(E, curve, system, x, t) - dynamic_phase(E, system, y, t)
    return abs(chord_map_product(E, curve, gamma, x, anchor=0.0) - expected)


def _flow_section(E: EtherStructure) -> FlowSection:
    return FlowSection(oscillator(E), 0.5)


def extension_gradient(E: EtherStructure, rng: np.random.Generator) -> float:
    section = _flow_section(E)
    x = _point(E, rng)
    y = _near(rng, restriction_point(E, section, x), 0.05)
    h = E.settings.h_fd2
    dx = fd_gradient(lambda w: extension_phase(E, section, w, y), x, h)
    dy = fd_gradient(lambda w: extension_phase(E, section, x, w), y, h)
    gx, gy = extension_gradients(E, section, x, y)
    return float(max(np.max(np.abs(dx - gx)), np.max(np.abs(dy - gy))))


def restriction(E: EtherStructure, rng: np.random.Generator) -> float:
    flow_section = _flow_section(E)
    x = _point(E, rng)
    section = flow_section.section(E)
    residual = abs(
        extension_phase(E, flow_section, x, restriction_point(E, flow_section, x))
        - section.phase(x)
    )
    if E.dim == 2:
        curve = circle(CHORD_RADIUS)
        w = _annulus_point(rng, 0.1, 0.35)
        foot = chord_find(E, curve, w).b
        residual = max(residual, abs(extension_phase(E, curve, w, foot) - chord_phase(E, curve, w)))
    return residual


def operators(E: EtherStructure, rng: np.random.Generator) -> float:
    first, second = (LagrangianSection(phi) for phi in _phases(E, rng, 2, 0.15))
    report = operator_calculus_check(
        E, first, second, samples=1, seed=int(rng.integers(2**31)), radius=0.2
    )
    if report.errors:
        raise EtherPhaseException(report.errors[0])
    return report.max_residual()


# torsion


def torsion_closed(E: EtherStructure, rng: np.random.Generator) -> float:
    return closedness(E, rng)


def torsion_membranes(E: EtherStructure, rng: np.random.Generator) -> float:
    report = torsion_phase_suite(E, [_point(E, rng)], sys=harmonic_oscillator())
    if report.errors:
        raise EtherPhaseException(report.errors[0])
    return max(report.residuals.values())


CATALOGUE: Tuple[IdentityCheck, ...] = (
    IdentityCheck(
        "eq2.1-zero-curvature", "dH + {H, H} = 0", zero_curvature, 1e-6, 100, 1e-4
    ),
    IdentityCheck("eq2.2-boundary-h", "H_x(x) = 0", boundary_h, 1e-9, 100),
    IdentityCheck(
        "eq2.2-boundary-dh", "D_zH|diag = 2ω", boundary_dh, 1e-6, 100, 1e-4, involutive
    ),
    IdentityCheck(
        "eq2.2-boundary-d2h", "D²H|diag = 2ωΓ", boundary_d2h, 1e-4, 20, 1e-4, involutive
    ),
    IdentityCheck("eq2.3-skew", "H_x(s_x z) = -H_x(z)", skew, 1e-8, 100, 1e-4, involutive),
    IdentityCheck("eq2.4-fixed-point", "s_x(x) = x", fixed_point, 1e-9, 100),
    IdentityCheck(
        "eq2.5-involution",
        "s_x∘s_x = id",
        involution,
        1e-8,
        100,
        1e-6,
        expected_violation=torsion,
        violation_threshold=lambda E: 0.1 * E.deformation,
    ),
    IdentityCheck("thm2.1ii-symplectic", "s_x is symplectic", symplectic, 1e-6, 100, 1e-4),
    IdentityCheck(
        "thm2.1iii-connection",
        "the connection of the family preserves ω",
        symplectic_connection,
        1e-5,
        20,
        1e-3,
        involutive,
    ),
    IdentityCheck(
        "eq2.8-exp-reflection",
        "s_x(Exp_x v) = Exp_x(-v)",
        exp_reflection,
        1e-7,
        50,
        1e-4,
        involutive,
    ),
    IdentityCheck(
        "eq3.4-path-independence",
        "reflections integrated along two x-paths agree",
        path_independence,
        1e-7,
        10,
        1e-4,
    ),
    IdentityCheck(
        "eq2.7-from-reflections",
        "H rebuilt from the reflection family",
        from_reflections,
        1e-6,
        50,
        applies=lambda E: E.involutive
        and E.closed_forms.reflection is not None
        and not E.fd_limited,
    ),
    IdentityCheck(
        "thm3.1-reconstruction", "γ(x̃) = s_x(x̃)", reconstruction, 1e-8, 10, 1e-6
    ),
    IdentityCheck(
        "eq3.2-closedness", "x -> H_x(γ(x̃)) is closed", closedness, 1e-5, 10, 1e-4, involutive
    ),
    IdentityCheck(
        "thm3.2i-membrane", "membrane area = line integral of dΦ", membrane, 1e-6, 10, 1e-4
    ),
    IdentityCheck("thm3.2ii-cocycle", "Φ_y(x) + Φ_z(y) = Φ_z(x)", cocycle, 1e-6, 10, 1e-4),
    IdentityCheck("thm5.1-round-trip", "map of the phase of γ is γ", round_trip, 1e-6, 10, 1e-4),
    IdentityCheck(
        "eq4.2-dynamic", "Φ^t(x) - Φ^t(y) = Φ^{γ^t}_y(x)", dynamic, 1e-6, 5, 1e-4
    ),
    IdentityCheck(
        "eq4.2-oscillator",
        "oscillator phase at t = π/2, x = (1, 0) is -1",
        oscillator_phase,
        1e-4,
        1,
        applies=euclid_plane,
    ),
    IdentityCheck(
        "eq4.3-poincare-cartan",
        "flow tube area = t(H(z) - H(w))",
        poincare_cartan,
        1e-6,
        5,
        1e-4,
    ),
    IdentityCheck("thm6.1i-unit", "0∘Φ = Φ∘0 = Φ", product_unit, 1e-6, 5, 1e-4),
    IdentityCheck(
        "thm6.1i-assoc", "(Φ3∘Φ2)∘Φ1 = Φ3∘(Φ2∘Φ1)", product_associativity, 1e-5, 3, 1e-4
    ),
    IdentityCheck(
        "eq6.4-gradient", "d(Φ2∘Φ1) = H_x(γ2γ1(x̃))", product_gradient, 1e-5, 5, 1e-3
    ),
    IdentityCheck("thm6.1iii-group", "Φ^{τ+t} = Φ^τ∘Φ^t", group_law, 1e-5, 5, 1e-4),
    IdentityCheck(
        "eq6.8-normalized-composition",
        "normalized phases compose up to a triangle",
        normalized_composition,
        1e-5,
        5,
        1e-4,
    ),
    IdentityCheck(
        "thm6.1iv-triangle",
        "triangle phase generates the Ether translation",
        triangle_translation,
        1e-5,
        5,
        1e-3,
        involutive,
    ),
    IdentityCheck(
        "thm6.1iv-triangle-euclid",
        "triangle (0,0), (1,0), (0,1) has area -2",
        triangle_oracle,
        1e-8,
        1,
        applies=euclid_plane,
    ),
    IdentityCheck(
        "eq6.2-stationary", "product mid-points are stationary", stationary, 1e-5, 5, 1e-3
    ),
    IdentityCheck("eq7.2-left-right", "ℓ = s_x∘r", left_right, 1e-7, 50, 1e-6),
    IdentityCheck(
        "eq7.3-lie-engel", "Lie–Engel brackets of ℓ and r", lie_engel, 1e-6, 50, 1e-4, involutive
    ),
    IdentityCheck("eq7.4-expansion", "ℓ to first order in p", expansion, 1e-5, 10, 1e-4),
    IdentityCheck(
        "eq7.4-expansion-2", "ℓ to second order in p", expansion_second, 1e-3, 10, 1e-3
    ),
    IdentityCheck(
        "eq7.8-assoc", "groupoid product is associative", groupoid_associativity, 1e-7, 10, 1e-6
    ),
    IdentityCheck("eq7.9-unit-inverse", "units and inverses", unit_inverse, 1e-7, 10, 1e-6),
    IdentityCheck(
        "thm7.3-product", "Λ^{Φ2}⊙Λ^{Φ1} = Λ^{Φ2∘Φ1}", section_product, 1e-6, 5, 1e-4
    ),
    IdentityCheck(
        "eq7.5-hj", "Hamilton–Jacobi for dynamic and evolved phases", hamilton_jacobi, 1e-4, 3,
        applies=involutive,
    ),
    IdentityCheck(
        "eq8.3-chord-gradient", "dΦ_λ = H_x(a)", chord_gradient_law, 1e-5, 10, 1e-4,
        plane_involutive,
    ),
    IdentityCheck(
        "eq8.2-chord-circle",
        "unit-circle chord phase at (0.5, 0)",
        chord_oracle,
        1e-6,
        1,
        applies=euclid_plane,
    ),
    IdentityCheck(
        "eq8.11-chord-hj", "ℓ and r of dΦ_λ lie on λ", chord_hamilton_jacobi, 1e-6, 10, 1e-4,
        plane_involutive,
    ),
    IdentityCheck(
        "eq8.13-chord-flow", "chord flow membrane = Φ^t∘Φ_λ", chord_flow, 1e-5, 3, 1e-4,
        plane_involutive,
    ),
    IdentityCheck(
        "eq8.12-chord-map", "chord map membrane = Φ^t∘Φ_λ - Φ^t(y)", chord_map, 1e-5, 3, 1e-4,
        plane_involutive,
    ),
    IdentityCheck(
        "eq9.3-extension-gradient",
        "dΦ^# = (H_x(b), -H_y(a))",
        extension_gradient,
        1e-5,
        5,
        1e-3,
        involutive,
    ),
    IdentityCheck(
        "eq9.5-restriction", "Φ^#(x, Y(x)) = Φ(x)", restriction, 1e-6, 5, 1e-4, involutive
    ),
    IdentityCheck(
        "thm9.2-operators", "extension operator calculus", operators, 1e-5, 20, 1e-4, involutive
    ),
    IdentityCheck(
        "lem10.1-symplectic-connection",
        "the torsion connection preserves ω",
        symplectic_connection,
        1e-5,
        20,
        applies=torsion,
    ),
    IdentityCheck(
        "lem10.2-lie-engel", "Lie–Engel in torsion mode", lie_engel, 1e-6, 50, applies=torsion
    ),
    IdentityCheck(
        "lem10.3-closed", "x -> H_x(γ(x̃)) is closed in torsion mode", torsion_closed, 1e-5, 10,
        applies=torsion,
    ),
    IdentityCheck(
        "lem10.4-membranes",
        "membrane phases with internal geodesics",
        torsion_membranes,
        1e-5,
        3,
        applies=torsion,
    ),
    IdentityCheck(
        "sec10-boundary", "boundary condition with torsion", boundary_d2h, 1e-4, 20, applies=torsion
    ),
)

for _check in CATALOGUE:
    register_check(_check)


def select_checks(E: EtherStructure, identities: Sequence[str] = ()) -> List[IdentityCheck]:
    """Applicable checks in catalogue order, restricted to `identities` when given."""
    unknown = [identity for identity in identities if identity not in CHECKS]
    if unknown:
        raise InvalidConfigException(f"unknown identity ids {unknown}; see `etherphase describe`")
    chosen = set(identities)
    return [
        check
        for check in CATALOGUE
        if (not chosen or check.identity in chosen) and check.applies(E)
    ]


def verify_structure(
    E: EtherStructure,
    seed: int = 0,
    identities: Sequence[str] = (),
    multiplier: float = 1.0,
    tolerance: Optional[float] = None,
    threads: int = 1,
) -> CheckReport:
    checks = select_checks(E, identities)
    report = CheckReport(E.name, seed)

    def run(check: IdentityCheck):  # type: ignore
        return check.run(E, seed, multiplier, tolerance)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        records: Iterable = executor.map(run, checks)
        report.extend(records)
    for record in report.records:
        log = logger.info if record.passed else logger.warning
        log(
            f"{record.identity}: {record.status} max residual {record.max_residual:.3e}"
            f" (tol {record.tolerance:.1e}, {record.samples} samples)"
        )
    return report
