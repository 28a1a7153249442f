"""
The correspondence between symplectic transformations and phase functions, Hamiltonian
flows and their dynamic phase functions.

Membranes are represented by their oriented boundaries; see `geometry.Membrane`.
"""
import math
from dataclasses import dataclass
from logging import getLogger
from typing import Callable, Optional

import numpy as np

from etherphase.ether import (
    EtherStructure,
    ether_eval,
    geodesic_edge,
    iterate_stage,
    reflection,
    reflection_inverse,
    solve_stage,
)
from etherphase.geometry import (
    DEFAULT_H_FD,
    Membrane,
    NewtonResult,
    Polyline,
    SymplecticFixture,
    as_point,
    fd_gradient,
    fd_jacobian,
    gauss_legendre,
    integrate_ode,
    invert,
)

logger = getLogger(__name__)

Connector = Callable[[float, np.ndarray, np.ndarray], np.ndarray]

# steps of the central difference used for tangents of user connectors
CONNECTOR_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class SymplecticMap:
    apply: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    inverse: Optional[Callable[[], "SymplecticMap"]] = None
    name: str = "map"
    h: float = DEFAULT_H_FD

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self.apply(as_point(z)), dtype=float)

    def jacobian_at(self, z: np.ndarray) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(as_point(z)), dtype=float)
        return fd_jacobian(self, as_point(z), self.h)

    def inverted(self) -> "SymplecticMap":
        if self.inverse is None:
            raise NotImplementedError(f"map '{self.name}' has no inverse")
        return self.inverse()

    def then(self, outer: "SymplecticMap") -> "SymplecticMap":
        """outer ∘ self."""
        inner = self

        def jacobian(z: np.ndarray) -> np.ndarray:
            return outer.jacobian_at(inner(z)) @ inner.jacobian_at(z)

        inverse = None
        if inner.inverse is not None and outer.inverse is not None:
            inverse = lambda: outer.inverted().then(inner.inverted())  # noqa: E731
        return SymplecticMap(
            lambda z: outer(inner(z)), jacobian, inverse, f"{outer.name}∘{inner.name}"
        )

    def symplecticity_residual(self, fix: SymplecticFixture, z: np.ndarray) -> float:
        J = self.jacobian_at(z)
        return float(np.max(np.abs(J.T @ fix.omega(self(z)) @ J - fix.omega(as_point(z)))))


def identity_map() -> SymplecticMap:
    return SymplecticMap(
        lambda z: z, lambda z: np.eye(z.size), lambda: identity_map(), name="identity"
    )


def translation_map(a: np.ndarray) -> SymplecticMap:
    a = as_point(a)
    return SymplecticMap(
        lambda z: z + a, lambda z: np.eye(a.size), lambda: translation_map(-a), f"z+{a}"
    )


def linear_map(M: np.ndarray, center: Optional[np.ndarray] = None) -> SymplecticMap:
    M = np.asarray(M, dtype=float)
    c = np.zeros(len(M)) if center is None else as_point(center)
    return SymplecticMap(
        lambda z: c + M @ (z - c),
        lambda z: M,
        lambda: linear_map(invert(M, "linear map"), c),
        name="linear",
    )


@dataclass(frozen=True, eq=False)
class PhaseFunction:
    value: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    base: Optional[np.ndarray] = None
    transform: Optional[SymplecticMap] = None
    name: str = "phase"
    h: float = DEFAULT_H_FD

    def __call__(self, x: np.ndarray) -> float:
        return float(self.value(as_point(x)))

    def grad(self, x: np.ndarray) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(as_point(x)), dtype=float)
        return fd_gradient(self, as_point(x), self.h)


def linear_phase(c: np.ndarray, constant: float = 0.0) -> PhaseFunction:
    """Φ(x) = c·x + constant."""
    c = as_point(c)
    return PhaseFunction(
        lambda x: float(c @ x) + constant, lambda x: c.copy(), name=f"linear {c.tolist()}"
    )


def quadratic_phase(S: np.ndarray, c: Optional[np.ndarray] = None) -> PhaseFunction:
    """Φ(x) = ½ xᵀSx + c·x with S symmetric."""
    S = 0.5 * (np.asarray(S, dtype=float) + np.asarray(S, dtype=float).T)
    c = np.zeros(len(S)) if c is None else as_point(c)
    return PhaseFunction(
        lambda x: float(0.5 * x @ S @ x + c @ x), lambda x: S @ x + c, name="quadratic"
    )


@dataclass(frozen=True, eq=False)
class HamiltonianSystem:
    hamiltonian: Callable[[np.ndarray], float]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    steps_per_unit: int = 64
    name: str = "H"
    h: float = DEFAULT_H_FD

    def __call__(self, z: np.ndarray) -> float:
        return float(self.hamiltonian(as_point(z)))

    def grad(self, z: np.ndarray) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(z), dtype=float)
        return fd_gradient(self.hamiltonian, z, self.h)

    def steps(self, t: float) -> int:
        return max(1, math.ceil(abs(t) * self.steps_per_unit))


def harmonic_oscillator(
    center: Optional[np.ndarray] = None, frequency: float = 1.0, steps_per_unit: int = 64
) -> HamiltonianSystem:
    """H = frequency·|z - center|²/2."""
    c = np.zeros(2) if center is None else as_point(center)
    return HamiltonianSystem(
        lambda z: 0.5 * frequency * float((z - c) @ (z - c)),
        lambda z: frequency * (z - c),
        steps_per_unit,
        name="harmonic oscillator",
    )


def linear_hamiltonian(c: np.ndarray, steps_per_unit: int = 8) -> HamiltonianSystem:
    c = as_point(c)
    return HamiltonianSystem(lambda z: float(c @ z), lambda z: c, steps_per_unit, name="linear")


def polynomial_hamiltonian(coefficients: np.ndarray, steps_per_unit: int = 64) -> HamiltonianSystem:
    """H(q, p) = Σ c[i, j] qⁱ pʲ on the plane."""
    c = np.asarray(coefficients, dtype=float)

    def hamiltonian(z: np.ndarray) -> float:
        return float(np.polynomial.polynomial.polyval2d(z[0], z[1], c))

    def gradient(z: np.ndarray) -> np.ndarray:
        dq = np.polynomial.polynomial.polyder(c, axis=0)
        dp = np.polynomial.polynomial.polyder(c, axis=1)
        return np.array(
            [
                np.polynomial.polynomial.polyval2d(z[0], z[1], dq),
                np.polynomial.polynomial.polyval2d(z[0], z[1], dp),
            ]
        )

    return HamiltonianSystem(hamiltonian, gradient, steps_per_unit, name="polynomial")


def _hamiltonian_field(sys: HamiltonianSystem, fix: SymplecticFixture) -> Callable:
    def field(t: float, z: np.ndarray) -> np.ndarray:
        return np.asarray(fix.psi(z).T @ sys.grad(z))

    return field


def trajectory(sys: HamiltonianSystem, fix: SymplecticFixture, z: np.ndarray, t: float) -> Polyline:
    """RK4 nodes of γ^τ(z), τ from 0 to t, with Hermite tangents."""
    z = as_point(z)
    fix.domain.require(z)
    if t == 0:
        return Polyline.point(z)
    return integrate_ode(_hamiltonian_field(sys, fix), z, (0.0, t), sys.steps(t), fix.domain)


def flow(sys: HamiltonianSystem, fix: SymplecticFixture, z: np.ndarray, t: float) -> np.ndarray:
    return trajectory(sys, fix, z, t).end.copy()


def flow_map(sys: HamiltonianSystem, fix: SymplecticFixture, t: float) -> SymplecticMap:
    return SymplecticMap(
        lambda z: flow(sys, fix, z, t),
        inverse=lambda: flow_map(sys, fix, -t),
        name=f"{sys.name} t={t:g}",
    )


def fixed_midpoint_result(
    E: EtherStructure, gamma: SymplecticMap, x: np.ndarray
) -> NewtonResult:
    """x̃ with s_x(γ(x̃)) = x̃ (s_x⁻¹ for torsion structures), Newton from x."""
    x = as_point(x)
    if E.involutive:

        def residual(w: np.ndarray) -> np.ndarray:
            return reflection(E, x, gamma(w)) - w

    else:

        def residual(w: np.ndarray) -> np.ndarray:
            return reflection_inverse(E, x, gamma(w)) - w

    return iterate_stage(E, residual, x, "map too far from identity")


def fixed_midpoint(E: EtherStructure, gamma: SymplecticMap, x: np.ndarray) -> np.ndarray:
    return fixed_midpoint_result(E, gamma, x).x


def phase_gradient(E: EtherStructure, gamma: SymplecticMap, x: np.ndarray) -> np.ndarray:
    """dΦ^γ(x) = H_x(γ(x̃)); equal to -H_x(x̃) for involutive structures."""
    x_tilde = fixed_midpoint(E, gamma, x)
    return ether_eval(E, x, gamma(x_tilde))


def connecting_curve(
    start: np.ndarray, end: np.ndarray, segments: int, connector: Optional[Connector] = None
) -> Polyline:
    if connector is None:
        return Polyline(np.linspace(start, end, segments + 1))
    ts = np.linspace(0.0, 1.0, segments + 1)
    vertices = np.stack([connector(t, start, end) for t in ts])
    ahead = np.stack([connector(t + CONNECTOR_STEP, start, end) for t in ts])
    behind = np.stack([connector(t - CONNECTOR_STEP, start, end) for t in ts])
    tangents = (ahead - behind) / (2.0 * CONNECTOR_STEP * segments)
    return Polyline.from_vertex_tangents(vertices, tangents)


def normalized_phase(
    E: EtherStructure,
    gamma: SymplecticMap,
    x: np.ndarray,
    y: np.ndarray,
    connector: Optional[Connector] = None,
) -> float:
    """
    Φ^γ_y(x): area of the membrane c(x̃ -> ỹ), geodesic ỹ -> γ(ỹ) through y,
    γ(c) backwards, geodesic γ(x̃) -> x̃ through x.
    """
    x, y = as_point(x), as_point(y)
    if np.array_equal(x, y):
        return 0.0
    x_tilde = fixed_midpoint(E, gamma, x)
    y_tilde = fixed_midpoint(E, gamma, y)
    c = connecting_curve(x_tilde, y_tilde, E.settings.geodesic_segments, connector)
    membrane = Membrane(
        (
            c,
            geodesic_edge(E, y, y_tilde, gamma(y_tilde)),
            c.mapped(gamma, gamma.jacobian_at).reversed(),
            geodesic_edge(E, x, gamma(x_tilde), x_tilde),
        )
    )
    return membrane.area(E.fixture, E.settings.quad_order)


def phase_function(E: EtherStructure, gamma: SymplecticMap, y: np.ndarray) -> PhaseFunction:
    y = as_point(y)
    return PhaseFunction(
        lambda x: normalized_phase(E, gamma, x, y),
        lambda x: phase_gradient(E, gamma, x),
        base=y,
        transform=gamma,
        name=f"phase of {gamma.name}",
        h=E.settings.h_fd,
    )


def generating_midpoint(E: EtherStructure, phi: PhaseFunction, z: np.ndarray) -> np.ndarray:
    """The mid-point x = γ̃(z) solving dΦ(x) + H_x(z) = 0 (dΦ(x) = H_x(s_x(z)) in torsion mode)."""
    z = as_point(z)
    if E.involutive:

        def residual(x: np.ndarray) -> np.ndarray:
            return phi.grad(x) + ether_eval(E, x, z)

    else:

        def residual(x: np.ndarray) -> np.ndarray:
            return phi.grad(x) - ether_eval(E, x, reflection(E, x, z))

    return solve_stage(E, residual, z, "phase too far from constant")


def map_from_phase(E: EtherStructure, phi: PhaseFunction, z: np.ndarray) -> np.ndarray:
    z = as_point(z)
    return reflection(E, generating_midpoint(E, phi, z), z)


def generating_map(E: EtherStructure, phi: PhaseFunction) -> SymplecticMap:
    return SymplecticMap(
        lambda z: map_from_phase(E, phi, z), name=f"map of {phi.name}", h=E.settings.h_fd
    )


def membrane_representation(
    E: EtherStructure, phi: PhaseFunction, x: np.ndarray, y: np.ndarray
) -> float:
    """Φ(x) rebuilt as the membrane area of its transformation plus Φ(y)."""
    return normalized_phase(E, generating_map(E, phi), x, y) + phi(y)


def dynamic_phase(E: EtherStructure, sys: HamiltonianSystem, x: np.ndarray, t: float) -> float:
    """Φ^t(x): trajectory x̃ -> γ^t(x̃), geodesic back through x, minus t·H(x̃)."""
    x = as_point(x)
    if t == 0:
        return 0.0
    gamma = flow_map(sys, E.fixture, t)
    x_tilde = fixed_midpoint(E, gamma, x)
    path = trajectory(sys, E.fixture, x_tilde, t)
    membrane = Membrane((path, geodesic_edge(E, x, path.end, x_tilde)))
    return membrane.area(E.fixture, E.settings.quad_order) - t * sys(x_tilde)


def dynamic_phase_function(E: EtherStructure, sys: HamiltonianSystem, t: float) -> PhaseFunction:
    gamma = flow_map(sys, E.fixture, t)
    return PhaseFunction(
        lambda x: dynamic_phase(E, sys, x, t),
        lambda x: phase_gradient(E, gamma, x),
        transform=gamma,
        name=f"dynamic phase of {sys.name} t={t:g}",
        h=E.settings.h_fd,
    )


def poincare_cartan_area(
    E: EtherStructure, sys: HamiltonianSystem, z: np.ndarray, w: np.ndarray, t: float
) -> float:
    """Area of c(w -> z), trajectory of z, γ^t(c) backwards, trajectory of w backwards."""
    z, w = as_point(z), as_point(w)
    gamma = flow_map(sys, E.fixture, t)
    c = connecting_curve(w, z, E.settings.geodesic_segments)
    membrane = Membrane(
        (
            c,
            trajectory(sys, E.fixture, z, t),
            c.mapped(gamma, gamma.jacobian_at).reversed(),
            trajectory(sys, E.fixture, w, t).reversed(),
        )
    )
    return membrane.area(E.fixture, E.settings.quad_order)


def closedness_residual(
    form: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = DEFAULT_H_FD
) -> float:
    """max |∂_j α_k - ∂_k α_j| by central differences."""
    J = fd_jacobian(form, as_point(x), h)
    return float(np.max(np.abs(J - J.T)))


def gradient_line_integral(
    gradient: Callable[[np.ndarray], np.ndarray], y: np.ndarray, x: np.ndarray, order: int = 8
) -> float:
    """∫ gradient along the chart segment y -> x."""
    y, x = as_point(y), as_point(x)
    nodes, weights = gauss_legendre(order)
    values = np.stack([gradient(y + t * (x - y)) for t in nodes])
    return float(weights @ (values @ (x - y)))


def phase_hessian(E: EtherStructure, gamma: SymplecticMap, x: np.ndarray) -> np.ndarray:
    hessian = fd_jacobian(lambda w: phase_gradient(E, gamma, w), as_point(x), E.settings.h_fd2)
    return 0.5 * (hessian + hessian.T)


def fixed_point_hessian(E: EtherStructure, gamma: SymplecticMap, x: np.ndarray) -> np.ndarray:
    """2ω(dγ - I)(dγ + I)⁻¹ at a fixed point x of γ."""
    x = as_point(x)
    J = gamma.jacobian_at(x)
    eye = np.eye(len(J))
    return np.asarray(2.0 * E.fixture.omega(x) @ (J - eye) @ invert(J + eye, "dγ + I", x))
