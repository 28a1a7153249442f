"""
The phase-space groupoid over a fixture: left/right maps ℓ and r, multiplication, products
of Lagrangian sections, chords of Lagrangian curves, groupoid extensions and the
Hamilton–Jacobi equation.

Elements are (x, p) with p a covector at x. ℓ(x, p) is the z with H_x(z) = p and
r(x, p) = s_x⁻¹(ℓ(x, p)), so ℓ = s_x∘r; an element is the pair-groupoid arrow (ℓ, r).
"""
import math
from dataclasses import dataclass, field
from logging import getLogger
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from etherphase.ether import (
    EtherStructure,
    connection_from_family,
    ether_eval,
    geodesic_edge,
    hamiltonian_z_jacobian,
    midpoint,
    reflection,
    reflection_inverse,
    solve_stage,
)
from etherphase.exceptions import (
    AmbiguityException,
    ComposabilityException,
    DomainException,
    EtherPhaseException,
    NumericException,
    ParameterException,
    StageException,
)
from etherphase.geometry import (
    DEFAULT_H_FD,
    Membrane,
    Polyline,
    as_point,
    fd_gradient,
    fd_jacobian,
    invert,
    newton_iterate,
    solve_linear,
)
from etherphase.phase_maps import (
    HamiltonianSystem,
    PhaseFunction,
    SymplecticMap,
    dynamic_phase_function,
    fixed_midpoint,
    generating_map,
    gradient_line_integral,
    identity_map,
    linear_phase,
    trajectory,
)
from etherphase.phase_product import triangle_phase

logger = getLogger(__name__)

COMPOSABILITY_TOLERANCE = 1e-8
CHORD_SAMPLES = 128
CHORD_TOLERANCE = 1e-13
# step in the curve parameter for arc tangents
ARC_STEP = 1e-6
# chords whose feet agree to this are the same chord
SAME_CHORD = 1e-6
# no chord when the best sample pair misses by more than this many sample spacings
NO_CHORD_SPACINGS = 8.0


@dataclass(frozen=True, eq=False)
class GroupoidElement:
    base: np.ndarray
    momentum: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "base", as_point(self.base))
        object.__setattr__(self, "momentum", as_point(self.momentum))
        if self.base.shape != self.momentum.shape:
            raise ValueError("base and momentum dimensions differ")


def unit(x: np.ndarray) -> GroupoidElement:
    x = as_point(x)
    return GroupoidElement(x, np.zeros_like(x))


def _left_seed(E: EtherStructure, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    first = solve_linear(hamiltonian_z_jacobian(E, x, x), p, "D_zH on the diagonal", x)
    if not (E.involutive and E.closed_forms.connection is not None):
        return x + first
    gamma = E.closed_forms.connection(x)
    return x + first - 0.5 * np.einsum("kcd,c,d->k", gamma, first, first)


def left_map(E: EtherStructure, m: GroupoidElement) -> np.ndarray:
    """ℓ(x, p): the z with H_x(z) = p."""
    x, p = m.base, m.momentum
    E.domain.require(x)
    if not np.any(p):
        return x.copy()
    if E.closed_forms.left is not None:
        return np.asarray(E.closed_forms.left(x, p), dtype=float)
    seed = _left_seed(E, x, p)
    return solve_stage(
        E, lambda z: ether_eval(E, x, z) - p, seed, "momentum outside fibration neighborhood"
    )


def right_map(E: EtherStructure, m: GroupoidElement) -> np.ndarray:
    if E.involutive:
        return left_map(E, GroupoidElement(m.base, -m.momentum))
    return reflection_inverse(E, m.base, left_map(E, m))


def element_with_left(E: EtherStructure, x: np.ndarray, target: np.ndarray) -> GroupoidElement:
    x = as_point(x)
    return GroupoidElement(x, ether_eval(E, x, target))


def element_with_right(E: EtherStructure, x: np.ndarray, target: np.ndarray) -> GroupoidElement:
    x = as_point(x)
    return GroupoidElement(x, ether_eval(E, x, reflection(E, x, target)))


def element_from_arrow(E: EtherStructure, left: np.ndarray, right: np.ndarray) -> GroupoidElement:
    """The element with ℓ = left and r = right; its base is the mid-point."""
    x = midpoint(E, left, right)
    return GroupoidElement(x, ether_eval(E, x, left))


def _jacobians(
    E: EtherStructure, x: np.ndarray, p: np.ndarray, which: str
) -> Tuple[np.ndarray, np.ndarray]:
    """(∂/∂x, ∂/∂p) of ℓ or r at (x, p)."""
    d = x.size
    if E.closed_forms.left is None and (which == "left" or E.involutive):
        sign = 1.0 if which == "left" else -1.0
        z = left_map(E, GroupoidElement(x, sign * p))
        dz = hamiltonian_z_jacobian(E, x, z)
        dx = fd_jacobian(lambda y: E.hamiltonian(y, z), x, E.settings.h_fd)
        inverse = invert(dz, "D_zH", last_point=z)
        return -inverse @ dx, sign * inverse
    target = left_map if which == "left" else right_map

    def joint(w: np.ndarray) -> np.ndarray:
        return target(E, GroupoidElement(w[:d], w[d:]))

    J = fd_jacobian(joint, np.concatenate([x, p]), E.settings.h_fd)
    return J[:, :d], J[:, d:]


def lie_engel_residual(E: EtherStructure, m: GroupoidElement) -> float:
    """
    max of |{ℓʲ,ℓᵏ} - Ψʲᵏ(ℓ)|, |{rʲ,rᵏ} - Ψᵏʲ(r)| and |{ℓʲ,rᵏ}| with the bracket
    {f, g} = ∂_p f·∂_x g - ∂_x f·∂_p g on T*X.
    """
    x, p = m.base, m.momentum
    lx, lp = _jacobians(E, x, p, "left")
    rx, rp = _jacobians(E, x, p, "right")
    psi = E.fixture.psi
    left_left = lp @ lx.T - lx @ lp.T - psi(left_map(E, m))
    right_right = rp @ rx.T - rx @ rp.T - psi(right_map(E, m)).T
    left_right = lp @ rx.T - lx @ rp.T
    return float(max(np.max(np.abs(block)) for block in (left_left, right_right, left_right)))


def left_expansion_residuals(E: EtherStructure, x: np.ndarray) -> Dict[int, float]:
    """
    Taylor coefficients of p -> ℓ(x, p) at p = 0 against their diagonal values: order 0 is x,
    order 1 is (D_zH|diag)⁻¹ (½Ψ for involutive structures), order 2 is -¼ Γ(Ψ·, Ψ·).
    """
    x = as_point(x)
    d = x.size
    h = E.settings.h_fd2

    def left(p: np.ndarray) -> np.ndarray:
        return left_map(E, GroupoidElement(x, p))

    origin = np.zeros(d)
    first = fd_jacobian(left, origin, h)
    expected_first = invert(hamiltonian_z_jacobian(E, x, x), "D_zH on the diagonal", x)
    second = np.empty((d, d, d))
    eye = np.eye(d) * h
    for a in range(d):
        for b in range(d):
            second[:, a, b] = (
                left(eye[a] + eye[b])
                - left(eye[a] - eye[b])
                - left(-eye[a] + eye[b])
                + left(-eye[a] - eye[b])
            ) / (4.0 * h * h)
    psi = E.fixture.psi(x)
    gamma = connection_from_family(E, x)
    expected_second = -0.25 * np.einsum("kcd,ca,db->kab", gamma, psi, psi)
    residuals = {
        0: float(np.max(np.abs(left(origin) - x))),
        1: float(np.max(np.abs(first - expected_first))),
        2: float(np.max(np.abs(second - expected_second))),
    }
    if E.involutive:
        residuals[1] = max(residuals[1], float(np.max(np.abs(first - 0.5 * psi))))
    return residuals


def groupoid_multiply(
    E: EtherStructure, m2: GroupoidElement, m1: GroupoidElement
) -> GroupoidElement:
    """m2∘m1, defined when r(m2) = ℓ(m1); the product has ℓ = ℓ(m2) and r = r(m1)."""
    left, joint_point, right = left_map(E, m2), right_map(E, m2), right_map(E, m1)
    gap = float(np.max(np.abs(joint_point - left_map(E, m1))))
    if gap > COMPOSABILITY_TOLERANCE:
        raise ComposabilityException(f"r(m2) and l(m1) differ by {gap:.3e}")
    d = left.size
    seed_base = midpoint(E, left, right)
    seed = np.concatenate([seed_base, ether_eval(E, seed_base, left)])

    def residual(w: np.ndarray) -> np.ndarray:
        m = GroupoidElement(w[:d], w[d:])
        return np.concatenate([left_map(E, m) - left, right_map(E, m) - right])

    solution = solve_stage(E, residual, seed, "groupoid product", bounded=False)
    return GroupoidElement(solution[:d], solution[d:])


def groupoid_inverse(E: EtherStructure, m: GroupoidElement) -> GroupoidElement:
    """The element with ℓ and r exchanged; (x, -p) for involutive structures."""
    return element_from_arrow(E, right_map(E, m), left_map(E, m))


@dataclass(frozen=True, eq=False)
class LagrangianSection:
    """Λ^Φ = {(x, dΦ(x))}."""

    phase: PhaseFunction

    def element(self, x: np.ndarray) -> GroupoidElement:
        return GroupoidElement(x, self.phase.grad(x))

    def transform(self, E: EtherStructure) -> SymplecticMap:
        if self.phase.transform is not None:
            return self.phase.transform
        return generating_map(E, self.phase)


def zero_section(dim: int) -> LagrangianSection:
    phase = linear_phase(np.zeros(dim))
    return LagrangianSection(
        PhaseFunction(phase.value, phase.gradient, transform=identity_map(), name="zero")
    )


def section_element_with_left(
    E: EtherStructure, section: LagrangianSection, target: np.ndarray
) -> GroupoidElement:
    """The element of Λ with ℓ = target: dΦ(x) = H_x(target)."""
    target = as_point(target)
    x = solve_stage(
        E,
        lambda w: section.phase.grad(w) - ether_eval(E, w, target),
        target,
        "phase too far from constant",
    )
    return section.element(x)


def section_element_with_right(
    E: EtherStructure, section: LagrangianSection, target: np.ndarray
) -> GroupoidElement:
    """The element of Λ with r = target: dΦ(x) = H_x(s_x(target))."""
    target = as_point(target)
    x = solve_stage(
        E,
        lambda w: section.phase.grad(w) - ether_eval(E, w, reflection(E, w, target)),
        target,
        "phase too far from constant",
    )
    return section.element(x)


def lagrangian_product_point(
    E: EtherStructure, section2: LagrangianSection, section1: LagrangianSection, x: np.ndarray
) -> GroupoidElement:
    """The point of Λ2⊙Λ1 over x: m2∘m1 with m_i ∈ Λ_i composable and base x."""
    x = as_point(x)
    d = x.size

    def residual(w: np.ndarray) -> np.ndarray:
        m2, m1 = section2.element(w[:d]), section1.element(w[d:])
        left2 = left_map(E, m2)
        return np.concatenate(
            [right_map(E, m2) - left_map(E, m1), reflection(E, x, right_map(E, m1)) - left2]
        )

    solution = solve_stage(E, residual, np.concatenate([x, x]), "section product", bounded=False)
    return GroupoidElement(x, ether_eval(E, x, left_map(E, section2.element(solution[:d]))))


@dataclass(frozen=True, eq=False)
class LagrangianCurve:
    """
    A parametrized curve λ(s), s in `span`, in a two-dimensional chart. `levels` and
    `energies`, when given, describe λ as {H_j = E_j}.
    """

    curve: Callable[[float], np.ndarray]
    span: Tuple[float, float]
    periodic: bool = False
    levels: Tuple[HamiltonianSystem, ...] = ()
    energies: Tuple[float, ...] = ()
    name: str = "curve"

    def __call__(self, s: float) -> np.ndarray:
        return np.asarray(self.curve(float(s)), dtype=float)

    @property
    def period(self) -> float:
        return self.span[1] - self.span[0]

    def parameters(self, count: int) -> np.ndarray:
        return np.linspace(self.span[0], self.span[1], count, endpoint=not self.periodic)

    def tangent(self, s: float) -> np.ndarray:
        return (self(s + ARC_STEP) - self(s - ARC_STEP)) / (2.0 * ARC_STEP)

    def arc(self, start: float, end: float, segments: int) -> Polyline:
        if start == end:
            return Polyline.point(self(start))
        ss = np.linspace(start, end, segments + 1)
        vertices = np.stack([self(s) for s in ss])
        tangents = np.stack([self.tangent(s) for s in ss]) * ((end - start) / segments)
        return Polyline.from_vertex_tangents(vertices, tangents)


def circle(
    radius: float = 1.0, center: Optional[Sequence[float]] = None, name: str = "circle"
) -> LagrangianCurve:
    """Counter-clockwise circle on (-π, π], the level radius²/2 of |z - center|²/2."""
    if not radius > 0:
        raise ParameterException(f"radius must be positive, got {radius}")
    c = np.zeros(2) if center is None else as_point(center)
    energy = HamiltonianSystem(
        lambda z: 0.5 * float((z - c) @ (z - c)), lambda z: z - c, name="|z - c|^2/2"
    )
    return LagrangianCurve(
        lambda s: c + radius * np.array([math.cos(s), math.sin(s)]),
        (-math.pi, math.pi),
        periodic=True,
        levels=(energy,),
        energies=(0.5 * radius * radius,),
        name=name,
    )


@dataclass(frozen=True)
class Chord:
    """Feet a = λ(s_a), b = λ(s_b) with s_x(b) = a; the arc of λ runs from b to a."""

    a: np.ndarray
    b: np.ndarray
    s_a: float
    s_b: float
    orientation: int = 1
    degenerate: bool = False


def _require_plane_curve(E: EtherStructure) -> None:
    if E.dim != 2:
        raise ParameterException("curves are Lagrangian only in two-dimensional charts")


def _candidate_pairs(
    points: np.ndarray, images: np.ndarray, allow_diagonal: bool = False
) -> Tuple[np.ndarray, float]:
    """Cost matrix C[i, j] = |images_j - points_i| and the mean sample spacing."""
    cost = np.linalg.norm(images[None, :, :] - points[:, None, :], axis=-1)
    if not allow_diagonal:
        np.fill_diagonal(cost, np.inf)
    spacing = float(np.mean(np.linalg.norm(np.diff(points, axis=0), axis=-1)))
    return cost, spacing


def _map_samples(
    E: EtherStructure, transform: Callable[[np.ndarray], np.ndarray], points: np.ndarray
) -> np.ndarray:
    images = np.full_like(points, np.nan)
    for k, point in enumerate(points):
        try:
            images[k] = transform(point)
        except (DomainException, NumericException):
            pass
    return images


def _solve_curve_pair(
    E: EtherStructure,
    curve: LagrangianCurve,
    transform: Callable[[np.ndarray], np.ndarray],
    seed: Tuple[float, float],
    stage: str,
) -> Tuple[float, float]:
    """(u, v) with transform(λ(u)) = λ(v)."""
    solution = solve_stage(
        E,
        lambda w: transform(curve(w[0])) - curve(w[1]),
        np.array(seed, dtype=float),
        stage,
        tol=CHORD_TOLERANCE,
        bounded=False,
    )
    return float(solution[0]), float(solution[1])


def _project_onto(curve: LagrangianCurve, x: np.ndarray, s0: float) -> Optional[float]:
    try:
        result = newton_iterate(
            lambda s: np.atleast_1d((curve(s[0]) - x) @ curve.tangent(s[0])),
            np.array([s0]),
            tol=1e-14,
            max_iter=30,
        )
    except NumericException:
        return None
    return float(result.x[0])


def _same_chord(
    first: Tuple[np.ndarray, np.ndarray], second: Tuple[np.ndarray, np.ndarray]
) -> bool:
    a1, b1 = first
    a2, b2 = second
    direct = max(np.max(np.abs(a1 - a2)), np.max(np.abs(b1 - b2)))
    swapped = max(np.max(np.abs(a1 - b2)), np.max(np.abs(b1 - a2)))
    return bool(min(direct, swapped) < SAME_CHORD)


def _canonical_chord(E: EtherStructure, curve: LagrangianCurve, s_a: float, s_b: float) -> Chord:
    if curve.periodic:
        forward = (s_a - s_b) % curve.period
        if E.involutive and forward > 0.5 * curve.period:
            s_a, s_b = s_b, s_a
            forward = curve.period - forward
        s_a = s_b + forward
    elif E.involutive and s_a < s_b:
        s_a, s_b = s_b, s_a
    return Chord(curve(s_a), curve(s_b), s_a, s_b)


def chord_find(
    E: EtherStructure, curve: LagrangianCurve, x: np.ndarray, samples: int = CHORD_SAMPLES
) -> Chord:
    """
    The chord of λ with (center-)point x. Seeds come from the best pair of curve samples;
    a second, distant seed converging to a different chord raises AmbiguityException.
    """
    _require_plane_curve(E)
    x = as_point(x)
    E.domain.require(x)
    params = curve.parameters(samples)
    points = np.stack([curve(s) for s in params])

    nearest = int(np.argmin(np.linalg.norm(points - x, axis=-1)))
    projected = _project_onto(curve, x, float(params[nearest]))
    if projected is not None and float(np.max(np.abs(curve(projected) - x))) < 1e-9:
        return Chord(x.copy(), x.copy(), projected, projected, degenerate=True)

    if E.closed_forms.reflection is not None:
        images = np.asarray(E.closed_forms.reflection(x, points))
        if not E.involutive:
            images = _map_samples(E, lambda z: reflection(E, x, z), points)
        cost, spacing = _candidate_pairs(points, images)
    else:
        cost, spacing = _candidate_pairs(points, 2.0 * x - points)
    cost = np.where(np.isfinite(cost), cost, np.inf)
    order = np.argsort(cost, axis=None)
    i, j = np.unravel_index(order[0], cost.shape)
    best = float(cost[i, j])
    exact_images = E.closed_forms.reflection is not None
    if not np.isfinite(best) or (exact_images and best > NO_CHORD_SPACINGS * spacing):
        raise DomainException(f"no chord of {curve.name} through {np.round(x, 6)}")
    # λ(s_j) is b, its image λ(s_i) is a
    try:
        s_b, s_a = _solve_curve_pair(
            E, curve, lambda z: reflection(E, x, z), (params[j], params[i]), "chord"
        )
    except StageException as e:
        raise DomainException(
            f"no chord of {curve.name} through {np.round(x, 6)}: the seed left the curve"
        ) from e
    chord = _canonical_chord(E, curve, s_a, s_b)

    far = samples // 8
    threshold = max(4.0 * best, 4.0 * spacing)
    for index in order[1:]:
        k, l = np.unravel_index(index, cost.shape)
        if cost[k, l] > threshold:
            break
        distance = min(
            _index_distance(k, i, samples, curve.periodic)
            + _index_distance(l, j, samples, curve.periodic),
            _index_distance(k, j, samples, curve.periodic)
            + _index_distance(l, i, samples, curve.periodic),
        )
        if distance <= far:
            continue
        try:
            t_b, t_a = _solve_curve_pair(
                E, curve, lambda z: reflection(E, x, z), (params[l], params[k]), "second chord"
            )
        except EtherPhaseException:
            logger.debug("second chord seed did not converge")
            break
        if not _same_chord((curve(t_a), curve(t_b)), (chord.a, chord.b)):
            raise AmbiguityException(
                f"two chords of {curve.name} have mid-point {np.round(x, 6)}"
            )
        break
    return chord


def _index_distance(k: int, i: int, count: int, periodic: bool) -> int:
    gap = abs(int(k) - int(i))
    return min(gap, count - gap) if periodic else gap


def chord_phase(
    E: EtherStructure, curve: LagrangianCurve, x: np.ndarray, reverse: bool = False
) -> float:
    """
    Φ_λ(x): area of the arc of λ from b to a closed by the chord a -> b through x.
    `reverse` traverses the membrane with the feet exchanged and returns -Φ_λ(x).
    """
    chord = chord_find(E, curve, x)
    if chord.degenerate:
        return 0.0
    segments = E.settings.curve_segments
    if reverse:
        pieces = (curve.arc(chord.s_a, chord.s_b, segments), geodesic_edge(E, x, chord.b, chord.a))
    else:
        pieces = (curve.arc(chord.s_b, chord.s_a, segments), geodesic_edge(E, x, chord.a, chord.b))
    return Membrane(pieces).area(E.fixture, E.settings.quad_order)


def chord_gradient(E: EtherStructure, curve: LagrangianCurve, x: np.ndarray) -> np.ndarray:
    """dΦ_λ(x) = H_x(a)."""
    chord = chord_find(E, curve, x)
    if chord.degenerate:
        return np.zeros_like(as_point(x))
    return ether_eval(E, x, chord.a)


def chord_phase_function(E: EtherStructure, curve: LagrangianCurve) -> PhaseFunction:
    return PhaseFunction(
        lambda x: chord_phase(E, curve, x),
        lambda x: chord_gradient(E, curve, x),
        name=f"chord function of {curve.name}",
        h=E.settings.h_fd,
    )


def chord_hj_residual(E: EtherStructure, curve: LagrangianCurve, x: np.ndarray) -> float:
    """max_j |H_j(ℓ(x, dΦ_λ)) - E_j|, |H_j(r(x, dΦ_λ)) - E_j| for λ = {H_j = E_j}."""
    if not curve.levels:
        raise ParameterException(f"{curve.name} is not described as a level set")
    m = GroupoidElement(x, chord_gradient(E, curve, x))
    ends = (left_map(E, m), right_map(E, m))
    return float(
        max(abs(H(z) - e) for H, e in zip(curve.levels, curve.energies) for z in ends)
    )


def _product_pair(
    E: EtherStructure,
    curve: LagrangianCurve,
    gamma: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    stage: str,
) -> Tuple[float, float]:
    """(s_c, s_a) with s_x(γ(λ(s_c))) = λ(s_a) (s_x⁻¹ in torsion mode), from the chord at x."""
    chord = chord_find(E, curve, x)
    close = reflection if E.involutive else reflection_inverse
    if chord.degenerate:
        seed = (chord.s_a, chord.s_a)
    else:
        seed = (chord.s_a, chord.s_b)
    return _solve_curve_pair(E, curve, lambda z: close(E, x, gamma(z)), seed, stage)


def chord_flow_product(
    E: EtherStructure, curve: LagrangianCurve, sys: HamiltonianSystem, x: np.ndarray, t: float
) -> float:
    """
    Φ^t∘Φ_λ(x): trajectory c -> γ^t(c), geodesic γ^t(c) -> a′ through x, arc a′ -> c,
    minus t·H(c).
    """
    x = as_point(x)
    if t == 0:
        return chord_phase(E, curve, x)
    fix = E.fixture
    s_c, s_a = _product_pair(
        E, curve, lambda z: trajectory(sys, fix, z, t).end, x, "chord flow product"
    )
    start = curve(s_c)
    path = trajectory(sys, fix, start, t)
    pieces = (
        path,
        geodesic_edge(E, x, path.end, curve(s_a)),
        curve.arc(s_a, s_c, E.settings.curve_segments),
    )
    return Membrane(pieces).area(fix, E.settings.quad_order) - t * sys(start)


def chord_map_product(
    E: EtherStructure,
    curve: LagrangianCurve,
    gamma: SymplecticMap,
    x: np.ndarray,
    anchor: Optional[float] = None,
) -> float:
    """
    Φ^γ∘Φ_λ(x) normalized at y = mid(γ(c₀), c₀), c₀ = λ(anchor): geodesic γ(c) -> a through
    x, arc a -> c₀, geodesic c₀ -> γ(c₀) through y, γ(arc c₀ -> c).
    """
    x = as_point(x)
    anchor = 0.5 * (curve.span[0] + curve.span[1]) if anchor is None else anchor
    s_c, s_a = _product_pair(E, curve, gamma, x, "chord map product")
    c0 = curve(anchor)
    image0 = gamma(c0)
    y = midpoint(E, image0, c0)
    segments = E.settings.curve_segments
    pieces = (
        geodesic_edge(E, x, gamma(curve(s_c)), curve(s_a)),
        curve.arc(s_a, anchor, segments),
        geodesic_edge(E, y, c0, image0),
        curve.arc(anchor, s_c, segments).mapped(gamma, gamma.jacobian_at),
    )
    return Membrane(pieces).area(E.fixture, E.settings.quad_order)


def chord_product(
    E: EtherStructure,
    curve: LagrangianCurve,
    gamma: Union[SymplecticMap, HamiltonianSystem],
    x: np.ndarray,
    t: Optional[float] = None,
    anchor: Optional[float] = None,
) -> float:
    if isinstance(gamma, HamiltonianSystem):
        if t is None:
            raise ParameterException("a flow product needs the time t")
        return chord_flow_product(E, curve, gamma, x, t)
    return chord_map_product(E, curve, gamma, x, anchor)


@dataclass(frozen=True, eq=False)
class FlowSection:
    """The section generated by the dynamic phase of `system` at time t."""

    system: HamiltonianSystem
    t: float

    def section(self, E: EtherStructure) -> LagrangianSection:
        return LagrangianSection(dynamic_phase_function(E, self.system, self.t))


Extendable = Union[LagrangianSection, LagrangianCurve, FlowSection]


@dataclass(frozen=True)
class ExtensionPoint:
    """b = γ(a) = s_x(s_y(a)) and the center Z with s_Z(a) = b."""

    a: np.ndarray
    b: np.ndarray
    center: np.ndarray


def extension_point(
    E: EtherStructure, section: LagrangianSection, x: np.ndarray, y: np.ndarray
) -> ExtensionPoint:
    x, y = as_point(x), as_point(y)
    gamma = section.transform(E)
    back = reflection if E.involutive else reflection_inverse

    def residual(a: np.ndarray) -> np.ndarray:
        return back(E, y, back(E, x, gamma(a))) - a

    a = solve_stage(E, residual, y, "extension intersection")
    b = gamma(a)
    return ExtensionPoint(a, b, midpoint(E, b, a))


def _curve_extension_point(
    E: EtherStructure, curve: LagrangianCurve, x: np.ndarray, y: np.ndarray
) -> Tuple[ExtensionPoint, float, float]:
    _require_plane_curve(E)
    params = curve.parameters(CHORD_SAMPLES)
    points = np.stack([curve(s) for s in params])

    def translate(z: np.ndarray) -> np.ndarray:
        return reflection(E, x, reflection(E, y, z))

    images = _map_samples(E, translate, points)
    cost, spacing = _candidate_pairs(points, images, allow_diagonal=True)
    cost = np.where(np.isfinite(cost), cost, np.inf)
    threshold = max(4.0 * float(np.min(cost)), 4.0 * spacing)
    # cost[j, i] compares translate(λ_i) with λ_j: i is a, j is b
    rows, cols = np.nonzero(cost <= threshold)
    if not len(rows):
        raise DomainException(f"no extension pair of {curve.name} at {np.round(x, 6)}")
    centers = 0.5 * (points[rows] + points[cols])
    k = int(np.argmin(np.linalg.norm(centers - x, axis=-1)))
    s_a, s_b = _solve_curve_pair(
        E, curve, translate, (params[cols[k]], params[rows[k]]), "extension intersection"
    )
    a, b = curve(s_a), curve(s_b)
    return ExtensionPoint(a, b, midpoint(E, b, a)), s_a, s_b


def extension_phase(E: EtherStructure, data: Extendable, x: np.ndarray, y: np.ndarray) -> float:
    """
    Φ^#(x, y) = Φ(Z) + Φ_{y,x}(Z), with ∂_xΦ^# = H_x(b) and ∂_yΦ^# = -H_y(a).
    For a curve Φ is the chord function at Z, oriented so that its gradient is H_Z(b).
    """
    x, y = as_point(x), as_point(y)
    if isinstance(data, FlowSection):
        data = data.section(E)
    if isinstance(data, LagrangianSection):
        point = extension_point(E, data, x, y)
        return data.phase(point.center) + triangle_phase(E, point.center, y, x)
    point, _, _ = _curve_extension_point(E, data, x, y)
    chord = chord_find(E, data, point.center)
    value = chord_phase(E, data, point.center)
    if not chord.degenerate and np.max(np.abs(chord.a - point.b)) > np.max(
        np.abs(chord.a - point.a)
    ):
        value = -value
    return value + triangle_phase(E, point.center, y, x)


def extension_gradients(
    E: EtherStructure, data: Extendable, x: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """(H_x(b), -H_y(a))."""
    x, y = as_point(x), as_point(y)
    if isinstance(data, FlowSection):
        data = data.section(E)
    if isinstance(data, LagrangianSection):
        point = extension_point(E, data, x, y)
    else:
        point, _, _ = _curve_extension_point(E, data, x, y)
    return ether_eval(E, x, point.b), -ether_eval(E, y, point.a)


def restriction_point(E: EtherStructure, data: Extendable, x: np.ndarray) -> np.ndarray:
    """Y(x), where Φ^#(x, Y(x)) = Φ(x): the fixed mid-point x̃, or the chord foot b."""
    if isinstance(data, FlowSection):
        data = data.section(E)
    if isinstance(data, LagrangianSection):
        return fixed_midpoint(E, data.transform(E), x)
    chord = chord_find(E, data, x)
    return chord.b


def extension_action(
    E: EtherStructure,
    section: LagrangianSection,
    target: LagrangianSection,
    x: np.ndarray,
    transpose: bool = False,
) -> GroupoidElement:
    """
    The point over x of Λ^#(L) (Λ^&(L) when transposed): stationary in y of
    Φ^#(x, y) + Φ_L(y), respectively Φ^#(y, x) + Φ_L(y).
    """
    x = as_point(x)
    gamma = section.transform(E)
    x_tilde = fixed_midpoint(E, gamma, x)
    if transpose:

        def residual(y: np.ndarray) -> np.ndarray:
            point = extension_point(E, section, y, x)
            return target.phase.grad(y) + ether_eval(E, y, point.b)

        y = solve_stage(E, residual, gamma(x_tilde), "extension action")
        return GroupoidElement(x, -ether_eval(E, x, extension_point(E, section, y, x).a))

    def residual(y: np.ndarray) -> np.ndarray:
        point = extension_point(E, section, x, y)
        return target.phase.grad(y) - ether_eval(E, y, point.a)

    y = solve_stage(E, residual, x_tilde, "extension action")
    return GroupoidElement(x, ether_eval(E, x, extension_point(E, section, x, y).b))


def _momenta_phase(
    E: EtherStructure,
    momenta: Callable[[np.ndarray], np.ndarray],
    transform: Optional[SymplecticMap] = None,
) -> PhaseFunction:
    """The phase vanishing at the origin whose gradient is `momenta`."""
    origin = np.zeros(E.dim)
    return PhaseFunction(
        lambda x: gradient_line_integral(momenta, origin, x, E.settings.quad_order),
        momenta,
        base=origin,
        transform=transform,
    )


def action_section(
    E: EtherStructure,
    section: LagrangianSection,
    target: LagrangianSection,
    transpose: bool = False,
) -> LagrangianSection:
    """Λ^#(L) (or Λ^&(L)); its phase integrates the momenta from the origin."""
    return LagrangianSection(
        _momenta_phase(E, lambda x: extension_action(E, section, target, x, transpose).momentum)
    )


def product_section(
    E: EtherStructure, section2: LagrangianSection, section1: LagrangianSection
) -> LagrangianSection:
    """Λ2⊙Λ1, carrying the transform γ2∘γ1."""
    return LagrangianSection(
        _momenta_phase(
            E,
            lambda x: lagrangian_product_point(E, section2, section1, x).momentum,
            section1.transform(E).then(section2.transform(E)),
        )
    )


OPERATOR_IDENTITIES = (
    "sharp-action",
    "amp-action",
    "sharp-composition",
    "amp-composition",
    "sharp-amp-commute",
    "unit",
    "inverse",
    "permutation",
)


@dataclass
class OperatorReport:
    samples: int
    residuals: Dict[str, float] = field(default_factory=dict)
    failures: Dict[str, int] = field(default_factory=dict)
    errors: List[str] = field(default_factory=list)

    def max_residual(self) -> float:
        return max(self.residuals.values(), default=math.nan)


def _operator_residuals(
    E: EtherStructure, first: LagrangianSection, second: LagrangianSection, x: np.ndarray
) -> Dict[str, Callable[[], float]]:
    def gap(m: GroupoidElement, n: GroupoidElement) -> float:
        return float(max(np.max(np.abs(m.base - n.base)), np.max(np.abs(m.momentum - n.momentum))))

    def sharp_action() -> float:
        return gap(
            extension_action(E, first, second, x), lagrangian_product_point(E, first, second, x)
        )

    def amp_action() -> float:
        return gap(
            extension_action(E, first, second, x, transpose=True),
            lagrangian_product_point(E, second, first, x),
        )

    def sharp_composition() -> float:
        inner = action_section(E, second, first)
        return gap(
            extension_action(E, first, inner, x),
            extension_action(E, product_section(E, first, second), first, x),
        )

    def amp_composition() -> float:
        inner = action_section(E, second, first, transpose=True)
        return gap(
            extension_action(E, first, inner, x, transpose=True),
            extension_action(E, product_section(E, second, first), first, x, transpose=True),
        )

    def sharp_amp_commute() -> float:
        return gap(
            extension_action(E, first, action_section(E, second, first, transpose=True), x),
            extension_action(
                E, second, action_section(E, first, first), x, transpose=True
            ),
        )

    def unit_law() -> float:
        product = lagrangian_product_point(E, zero_section(E.dim), second, x)
        return gap(product, second.element(x))

    def inverse_law() -> float:
        m = first.element(x)
        product = groupoid_multiply(E, m, groupoid_inverse(E, m))
        return gap(product, unit(left_map(E, m)))

    def permutation_law() -> float:
        m1 = section_element_with_left(E, second, right_map(E, first.element(x)))
        m2 = first.element(x)
        lhs = groupoid_inverse(E, groupoid_multiply(E, m2, m1))
        rhs = groupoid_multiply(E, groupoid_inverse(E, m1), groupoid_inverse(E, m2))
        return gap(lhs, rhs)

    return dict(
        zip(
            OPERATOR_IDENTITIES,
            (
                sharp_action,
                amp_action,
                sharp_composition,
                amp_composition,
                sharp_amp_commute,
                unit_law,
                inverse_law,
                permutation_law,
            ),
        )
    )


def operator_calculus_check(
    E: EtherStructure,
    first: LagrangianSection,
    second: LagrangianSection,
    samples: int = 20,
    seed: int = 0,
    radius: float = 0.3,
    identities: Sequence[str] = OPERATOR_IDENTITIES,
) -> OperatorReport:
    """Pointwise checks of the extension-operator identities at random base points."""
    rng = np.random.default_rng(seed)
    report = OperatorReport(samples)
    for identity in identities:
        report.residuals[identity] = 0.0
        report.failures[identity] = 0
    for _ in range(samples):
        x = rng.uniform(-radius, radius, size=E.dim)
        checks = _operator_residuals(E, first, second, x)
        for identity in identities:
            try:
                value = checks[identity]()
            except EtherPhaseException as e:
                report.failures[identity] += 1
                report.errors.append(f"{identity} at {np.round(x, 6).tolist()}: {e}")
                continue
            report.residuals[identity] = max(report.residuals[identity], value)
    return report


TimePhase = Callable[[np.ndarray, float], float]


def hj_residual(
    E: EtherStructure,
    sys: HamiltonianSystem,
    phase: TimePhase,
    x: np.ndarray,
    t: float,
    h: Optional[float] = None,
) -> float:
    """|∂_tΦ(x, t) + H(ℓ(x, d_xΦ(x, t)))| with central differences in t and x."""
    x = as_point(x)
    h = E.settings.h_fd2 if h is None else h
    dt = (phase(x, t + h) - phase(x, t - h)) / (2.0 * h)
    dx = fd_gradient(lambda w: phase(w, t), x, h if h > DEFAULT_H_FD else DEFAULT_H_FD)
    return abs(dt + sys(left_map(E, GroupoidElement(x, dx))))
