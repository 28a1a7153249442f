"""
Triangle phases and the phase product of phase functions.

The product is built from the explicit mid-point geometry: for γ = γ″∘γ′ and its fixed
mid-point x̃ at x, the inner and outer mid-points are x′ = mid(γ′(x̃), x̃) and
x″ = mid(γ(x̃), γ′(x̃)), and Φ2∘Φ1(x) = Φ2(x″) + Φ1(x′) + Φ_{x″,x′}(x).
"""
from dataclasses import dataclass
from logging import getLogger
from typing import Tuple

import numpy as np

from etherphase.ether import (
    EtherStructure,
    ether_eval,
    geodesic_edge,
    midpoint,
    reflection,
    reflection_inverse,
    solve_stage,
)
from etherphase.geometry import Membrane, as_point, fd_gradient
from etherphase.phase_maps import (
    HamiltonianSystem,
    PhaseFunction,
    SymplecticMap,
    dynamic_phase_function,
    fixed_midpoint,
    fixed_midpoint_result,
    flow_map,
    generating_map,
    normalized_phase,
    phase_function,
    phase_gradient,
)

logger = getLogger(__name__)

# condition number of the fixed-point system above which another stationary branch may be near
BRANCH_CONDITION = 1e6


@dataclass(frozen=True, eq=False)
class TriangleMembrane:
    """Three geodesic sides A -> B -> C -> A through the mid-points z, y and x."""

    midpoints: Tuple[np.ndarray, np.ndarray, np.ndarray]
    vertices: Tuple[np.ndarray, np.ndarray, np.ndarray]
    membrane: Membrane

    def area(self, E: EtherStructure) -> float:
        return self.membrane.area(E.fixture, E.settings.quad_order)


def triangle_vertices(
    E: EtherStructure, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(w, s_z(w), s_y(s_z(w))) for the fixed point w of s_x∘s_y∘s_z (s_x⁻¹ in torsion mode)."""
    x, y, z = as_point(x), as_point(y), as_point(z)
    close = reflection if E.involutive else reflection_inverse

    def residual(w: np.ndarray) -> np.ndarray:
        return close(E, x, reflection(E, y, reflection(E, z, w))) - w

    if np.array_equal(x, y) and np.array_equal(y, z):
        w = x.copy()
    else:
        w = solve_stage(E, residual, x - y + z, "midpoints too spread")
    b = reflection(E, z, w)
    return w, b, reflection(E, y, b)


def triangle_from_vertices(
    E: EtherStructure,
    vertices: Tuple[np.ndarray, np.ndarray, np.ndarray],
    midpoints: Tuple[np.ndarray, np.ndarray, np.ndarray],
) -> TriangleMembrane:
    """`midpoints` lists the centers of the sides A -> B, B -> C and C -> A."""
    a, b, c = vertices
    sides = (
        geodesic_edge(E, midpoints[0], a, b),
        geodesic_edge(E, midpoints[1], b, c),
        geodesic_edge(E, midpoints[2], c, a),
    )
    return TriangleMembrane(midpoints, vertices, Membrane(sides))


def triangle_membrane(
    E: EtherStructure, x: np.ndarray, y: np.ndarray, z: np.ndarray
) -> TriangleMembrane:
    x, y, z = as_point(x), as_point(y), as_point(z)
    return triangle_from_vertices(E, triangle_vertices(E, x, y, z), (z, y, x))


def triangle_phase(E: EtherStructure, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
    """Φ_{y,z}(x), the symplectic area of Δ(x, y, z)."""
    return triangle_membrane(E, x, y, z).area(E)


def ether_translation_map(E: EtherStructure, y: np.ndarray, z: np.ndarray) -> SymplecticMap:
    """g_{y,z} = s_y∘s_z."""
    y, z = as_point(y), as_point(z)
    return SymplecticMap(
        lambda w: reflection(E, y, reflection(E, z, w)),
        name="ether translation",
        h=E.settings.h_fd,
    )


def _transform(E: EtherStructure, phi: PhaseFunction) -> SymplecticMap:
    return phi.transform if phi.transform is not None else generating_map(E, phi)


@dataclass(frozen=True, eq=False)
class ProductGeometry:
    x: np.ndarray
    x_tilde: np.ndarray
    inner: np.ndarray  # x′
    outer: np.ndarray  # x″
    triangle: TriangleMembrane


def product_geometry(
    E: EtherStructure, phi2: PhaseFunction, phi1: PhaseFunction, x: np.ndarray
) -> ProductGeometry:
    x = as_point(x)
    inner_map = _transform(E, phi1)
    outer_map = _transform(E, phi2)
    composed = inner_map.then(outer_map)
    result = fixed_midpoint_result(E, composed, x)
    if result.condition > BRANCH_CONDITION:
        logger.warning(
            f"product fixed point at {np.round(x, 6)} is ill-conditioned"
            f" (cond {result.condition:.2e}); another stationary branch may be close"
        )
    x_tilde = result.x
    middle = inner_map(x_tilde)
    last = outer_map(middle)
    x_inner = midpoint(E, middle, x_tilde)
    x_outer = midpoint(E, last, middle)
    triangle = triangle_from_vertices(E, (x_tilde, middle, last), (x_inner, x_outer, x))
    return ProductGeometry(x, x_tilde, x_inner, x_outer, triangle)


def phase_product(
    E: EtherStructure, phi2: PhaseFunction, phi1: PhaseFunction, x: np.ndarray
) -> float:
    """(Φ2∘Φ1)(x); Φ1 acts first."""
    geometry = product_geometry(E, phi2, phi1, x)
    return phi2(geometry.outer) + phi1(geometry.inner) + geometry.triangle.area(E)


def product_phase_function(
    E: EtherStructure, phi2: PhaseFunction, phi1: PhaseFunction
) -> PhaseFunction:
    composed = _transform(E, phi1).then(_transform(E, phi2))
    return PhaseFunction(
        lambda x: phase_product(E, phi2, phi1, x),
        lambda x: phase_gradient(E, composed, x),
        transform=composed,
        name=f"({phi2.name})∘({phi1.name})",
        h=E.settings.h_fd,
    )


def phase_product_with_map(
    E: EtherStructure,
    gamma2: SymplecticMap,
    phi2: PhaseFunction,
    phi1: PhaseFunction,
    x: np.ndarray,
) -> float:
    """
    Φ2∘Φ1 when only the outer map γ2 and dΦ1 are available. Solves jointly for the inner
    mid-point x′ and the vertex a = γ′(x̃): dΦ1(x′) = H_{x′}(a), s_{x′}(x̃) = a with
    x̃ = s_x(γ2(a)) (s_x⁻¹ in torsion mode).
    """
    x = as_point(x)
    d = x.size
    close = reflection if E.involutive else reflection_inverse

    def residual(unknowns: np.ndarray) -> np.ndarray:
        x_inner, a = unknowns[:d], unknowns[d:]
        x_tilde = close(E, x, gamma2(a))
        return np.concatenate(
            [phi1.grad(x_inner) - ether_eval(E, x_inner, a), reflection(E, x_inner, x_tilde) - a]
        )

    solution = solve_stage(
        E, residual, np.concatenate([x, x]), "product with map", bounded=False
    )
    x_inner, a = solution[:d], solution[d:]
    last = gamma2(a)
    x_tilde = close(E, x, last)
    x_outer = midpoint(E, last, a)
    triangle = triangle_from_vertices(E, (x_tilde, a, last), (x_inner, x_outer, x))
    return phi2(x_outer) + phi1(x_inner) + triangle.area(E)


def flow_phase_product(
    E: EtherStructure, sys: HamiltonianSystem, phi0: PhaseFunction, x: np.ndarray, t: float
) -> float:
    """Φ^t∘Φ⁰(x), solving the Hamilton–Jacobi Cauchy problem with initial phase Φ⁰."""
    if t == 0:
        return phi0(x)
    return phase_product_with_map(
        E, flow_map(sys, E.fixture, t), dynamic_phase_function(E, sys, t), phi0, x
    )


def product_stationarity_residual(
    E: EtherStructure, phi2: PhaseFunction, phi1: PhaseFunction, x: np.ndarray
) -> float:
    """
    max |∂(Φ1(x′) + Φ2(x″) + Φ_{x″,x′}(x))| over (x′, x″) at the constructed mid-points.
    """
    geometry = product_geometry(E, phi2, phi1, x)
    d = geometry.x.size

    def stationary_value(point: np.ndarray) -> float:
        x_inner, x_outer = point[:d], point[d:]
        return phi1(x_inner) + phi2(x_outer) + triangle_phase(E, geometry.x, x_outer, x_inner)

    gradient = fd_gradient(
        stationary_value, np.concatenate([geometry.inner, geometry.outer]), E.settings.h_fd2
    )
    return float(np.max(np.abs(gradient)))


def normalized_composition_residual(
    E: EtherStructure,
    gamma2: SymplecticMap,
    gamma1: SymplecticMap,
    y: np.ndarray,
    x: np.ndarray,
) -> float:
    """Φ^{γ″}_{y″}∘Φ^{γ′}_{y′}(x) - Φ^{γ″∘γ′}_y(x) - Φ_{y″,y′}(y)."""
    y = as_point(y)
    composed = gamma1.then(gamma2)
    y_tilde = fixed_midpoint(E, composed, y)
    middle = gamma1(y_tilde)
    y_inner = midpoint(E, middle, y_tilde)
    y_outer = midpoint(E, gamma2(middle), middle)
    product = phase_product(
        E, phase_function(E, gamma2, y_outer), phase_function(E, gamma1, y_inner), x
    )
    return (
        product
        - normalized_phase(E, composed, x, y)
        - triangle_phase(E, y, y_outer, y_inner)
    )
