"""
Ether (internal) Hamiltonians and everything generated by them: reflections and inversions,
Ether exponential maps, geodesics through mid-points, Ether translations and the connection.
"""
from dataclasses import dataclass, field, fields, replace
from logging import getLogger
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from etherphase.config import NumericSettings
from etherphase.exceptions import (
    DomainException,
    NumericException,
    StageException,
)
from etherphase.geometry import (
    Box,
    NewtonResult,
    Polyline,
    SymplecticFixture,
    as_point,
    bracket_matrix,
    fd_jacobian,
    gauss_legendre,
    integrate_ode,
    invert,
    newton_iterate,
    solve_linear,
)

logger = getLogger(__name__)

PointMap = Callable[[np.ndarray, np.ndarray], np.ndarray]
Hamiltonian = Callable[[np.ndarray, np.ndarray], np.ndarray]
ReflectionFamily = Callable[[np.ndarray, np.ndarray], np.ndarray]

# step of the central difference in the curve parameter used for geodesic tangents
CURVE_STEP = 1e-6


@dataclass(frozen=True)
class ClosedForms:
    """
    Closed forms a fixture may supply; they always take precedence over numerical paths.
    `reflection`, `reflection_inverse` and `exp` accept stacked second arguments (..., 2n).
    """

    reflection: Optional[PointMap] = None
    reflection_inverse: Optional[PointMap] = None
    reflection_jacobian: Optional[PointMap] = None
    exp: Optional[PointMap] = None
    log: Optional[PointMap] = None
    midpoint: Optional[PointMap] = None
    left: Optional[PointMap] = None
    connection: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def available(self) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(self) if getattr(self, f.name) is not None)


@dataclass(frozen=True, eq=False)
class EtherStructure:
    """
    The covector-valued two-point function H_x(z) on a fixture, with the reflection family
    it generates. `involutive` is false for the inversions of torsion structures, and
    `deformation` is then the size of the torsion: at generic points s_x∘s_x misses the identity
    by more than a tenth of it.
    """

    name: str
    fixture: SymplecticFixture
    hamiltonian: Hamiltonian
    involutive: bool = True
    closed_forms: ClosedForms = field(default_factory=ClosedForms)
    validity_radius: float = 0.5
    settings: NumericSettings = field(default_factory=NumericSettings)
    fd_limited: bool = False
    summary: Tuple[str, ...] = ()
    deformation: float = 0.0

    @property
    def dim(self) -> int:
        return self.fixture.dim

    @property
    def domain(self) -> Box:
        return self.fixture.domain

    def scaled(self, factor: float) -> "EtherStructure":
        hamiltonian = self.hamiltonian

        def scaled_hamiltonian(x: np.ndarray, z: np.ndarray) -> np.ndarray:
            return factor * np.asarray(hamiltonian(x, z))

        return replace(self, name=f"{self.name}*{factor:g}", hamiltonian=scaled_hamiltonian)

    def without_closed_forms(self, *names: str) -> "EtherStructure":
        names = names or self.closed_forms.available()
        return replace(self, closed_forms=replace(self.closed_forms, **{n: None for n in names}))

    def with_settings(self, settings: NumericSettings) -> "EtherStructure":
        return replace(self, settings=settings)


def iterate_stage(
    E: EtherStructure,
    F: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    stage: str,
    tol: Optional[float] = None,
    bounded: bool = True,
) -> NewtonResult:
    """
    Newton with the structure's settings; failures come back labeled by stage.
    Unknowns that are not a single chart point must pass `bounded=False`.
    """
    settings = E.settings
    try:
        result = newton_iterate(
            F,
            x0,
            tol=settings.tol_newton if tol is None else tol,
            max_iter=settings.max_iter,
            h=settings.h_fd,
            domain=E.domain if bounded else None,
        )
    except NumericException as e:
        raise StageException(str(e), stage, e.last_point) from e
    logger.debug(f"{stage}: {result.iterations} newton iterations")
    return result


def solve_stage(
    E: EtherStructure,
    F: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    stage: str,
    tol: Optional[float] = None,
    bounded: bool = True,
) -> np.ndarray:
    return iterate_stage(E, F, x0, stage, tol, bounded).x


def require_near(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> None:
    E.domain.require(x)
    E.domain.require(z)
    distance = float(np.linalg.norm(z - x))
    if distance > E.validity_radius:
        raise DomainException(
            f"|z - x| = {distance:.4g} exceeds the validity radius {E.validity_radius:g}"
        )


def ether_eval(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    x, z = as_point(x), as_point(z)
    require_near(E, x, z)
    value = np.asarray(E.hamiltonian(x, z), dtype=float)
    if not np.all(np.isfinite(value)):
        raise NumericException("non-finite Ether Hamiltonian", last_point=z)
    return value


def hamiltonian_z_jacobian(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """D[j, l] = ∂H_j/∂z^l."""
    return fd_jacobian(lambda w: E.hamiltonian(x, w), as_point(z), E.settings.h_fd)


def zero_curvature_residual(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> float:
    x, z = as_point(x), as_point(z)
    require_near(E, x, z)
    h = E.settings.h_fd
    dx = fd_jacobian(lambda y: E.hamiltonian(y, z), x, h)
    dz = fd_jacobian(lambda w: E.hamiltonian(x, w), z, h)
    # R[j, k] = ∂_j H_k - ∂_k H_j + {H_j, H_k}
    residual = dx.T - dx + bracket_matrix(E.fixture, dz, z)
    return float(np.max(np.abs(residual)))


def _reflection_velocity(
    E: EtherStructure, center: np.ndarray, s: np.ndarray, direction: np.ndarray
) -> np.ndarray:
    dz = fd_jacobian(lambda w: E.hamiltonian(center, w), s, E.settings.h_fd)
    # ∂s^m/∂x^j = Σ_l ∂_{z^l} H_j(x, s) Ψ^{lm}(s)
    return np.asarray(direction @ dz @ E.fixture.psi(s))


def reflection_by_integration(
    E: EtherStructure, x: np.ndarray, z: np.ndarray, via: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Integrates the dynamic equation of the reflections along the chart path z -> x
    (through `via` when given), starting from s_z(z) = z.
    """
    x, z = as_point(x), as_point(z)
    legs = [z, x] if via is None else [z, as_point(via), x]
    s = z.copy()
    for start, end in zip(legs[:-1], legs[1:]):
        direction = end - start

        def velocity(
            tau: float, w: np.ndarray, start: np.ndarray = start, direction: np.ndarray = direction
        ) -> np.ndarray:
            return _reflection_velocity(E, start + tau * direction, w, direction)

        s = integrate_ode(velocity, s, (0.0, 1.0), E.settings.ode_steps, E.domain).end
    return s


def reflection(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    x, z = as_point(x), as_point(z)
    require_near(E, x, z)
    if E.closed_forms.reflection is not None:
        image = np.asarray(E.closed_forms.reflection(x, z), dtype=float)
    else:
        image = reflection_by_integration(E, x, z)
    if not np.all(np.isfinite(image)):
        raise NumericException("non-finite reflection", last_point=z)
    return image


def reflect_many(E: EtherStructure, x: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(points)
    if E.closed_forms.reflection is not None:
        return np.asarray(E.closed_forms.reflection(as_point(x), points), dtype=float)
    return np.stack([reflection(E, x, z) for z in points])


def reflection_inverse(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    if E.involutive:
        return reflection(E, x, z)
    x, z = as_point(x), as_point(z)
    if E.closed_forms.reflection_inverse is not None:
        require_near(E, x, z)
        return np.asarray(E.closed_forms.reflection_inverse(x, z), dtype=float)
    return solve_stage(E, lambda w: reflection(E, x, w) - z, 2.0 * x - z, "reflection inverse")


def reflection_jacobian(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    x, z = as_point(x), as_point(z)
    if E.closed_forms.reflection_jacobian is not None:
        return np.asarray(E.closed_forms.reflection_jacobian(x, z), dtype=float)
    return fd_jacobian(lambda w: reflection(E, x, w), z, E.settings.h_fd)


def reflection_inverse_jacobian(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    if E.involutive:
        return reflection_jacobian(E, x, z)
    return fd_jacobian(lambda w: reflection_inverse(E, x, w), as_point(z), E.settings.h_fd)


def symplecticity_residual(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> float:
    J = reflection_jacobian(E, x, z)
    image = reflection(E, x, z)
    omega = E.fixture.omega
    return float(np.max(np.abs(J.T @ omega(image) @ J - omega(as_point(z)))))


def _exp_velocity(E: EtherStructure, x: np.ndarray, v: np.ndarray) -> Callable:
    def velocity(t: float, z: np.ndarray) -> np.ndarray:
        dz = fd_jacobian(lambda w: E.hamiltonian(x, w), z, E.settings.h_fd)
        return np.asarray(0.5 * E.fixture.psi(z).T @ (dz.T @ v))

    return velocity


def exp_map(E: EtherStructure, x: np.ndarray, v: np.ndarray, t: float = 1.0) -> np.ndarray:
    """Exp_x(vt): the time-one flow of the Hamiltonian ½ Σ v^j t H_x(z)_j started at x."""
    x, v = as_point(x), as_point(v)
    E.domain.require(x)
    length = abs(t) * float(np.linalg.norm(v))
    if length > E.validity_radius:
        raise DomainException(f"|tv| = {length:.4g} exceeds the validity radius")
    if length == 0.0:
        return x.copy()
    if E.closed_forms.exp is not None:
        return np.asarray(E.closed_forms.exp(x, t * v), dtype=float)
    velocity = _exp_velocity(E, x, t * v)
    return integrate_ode(velocity, x, (0.0, 1.0), E.settings.ode_steps, E.domain).end


def exp_ray(E: EtherStructure, x: np.ndarray, v: np.ndarray, segments: int) -> Polyline:
    """The curve t -> Exp_x(vt), t in [0, 1], with Hermite tangents."""
    x, v = as_point(x), as_point(v)
    if not np.any(v):
        return Polyline.point(x)
    exp_closed = E.closed_forms.exp
    if exp_closed is None:
        E.domain.require(x)
        return integrate_ode(_exp_velocity(E, x, v), x, (0.0, 1.0), segments, E.domain)
    ts = np.linspace(0.0, 1.0, segments + 1)[:, None]
    vertices = np.asarray(exp_closed(x, ts * v))
    ahead = np.asarray(exp_closed(x, (ts + CURVE_STEP) * v))
    behind = np.asarray(exp_closed(x, (ts - CURVE_STEP) * v))
    tangents = (ahead - behind) / (2.0 * CURVE_STEP * segments)
    return Polyline.from_vertex_tangents(vertices, tangents)


def log_map(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    x, z = as_point(x), as_point(z)
    require_near(E, x, z)
    if np.array_equal(x, z):
        return np.zeros_like(x)
    if E.closed_forms.log is not None:
        return np.asarray(E.closed_forms.log(x, z), dtype=float)
    dz = hamiltonian_z_jacobian(E, x, x)
    initial_velocity = 0.5 * E.fixture.psi(x).T @ dz.T
    seed = solve_linear(initial_velocity, z - x, "initial velocity", last_point=x)
    return solve_stage(E, lambda v: exp_map(E, x, v) - z, seed, "logarithm")


def midpoint(E: EtherStructure, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """The (center-)point x with s_x(b) = a."""
    a, b = as_point(a), as_point(b)
    if np.array_equal(a, b):
        return a.copy()
    if E.closed_forms.midpoint is not None:
        return np.asarray(E.closed_forms.midpoint(a, b), dtype=float)
    return solve_stage(E, lambda x: reflection(E, x, b) - a, 0.5 * (a + b), "midpoint")


def ether_geodesic(
    E: EtherStructure, x: np.ndarray, v: np.ndarray, segments: Optional[int] = None
) -> Polyline:
    """
    Exp_x(-v) -> x -> Exp_x(v) for involutive structures; torsion structures get the
    internal geodesic s_x⁻¹(Exp_x(v)) -> x -> Exp_x(v).
    """
    segments = segments or E.settings.geodesic_segments
    if not E.involutive:
        from etherphase.torsion import internal_geodesic

        return internal_geodesic(E, x, v, segments)
    x, v = as_point(x), as_point(v)
    if not np.any(v):
        return Polyline.point(x)
    half = max(1, segments // 2)
    return exp_ray(E, x, -v, half).reversed().join(exp_ray(E, x, v, half))


def geodesic_through(
    E: EtherStructure, center: np.ndarray, end: np.ndarray, segments: Optional[int] = None
) -> Polyline:
    """The geodesic with (center-)point `center` running from s_center⁻¹(end) to `end`."""
    return ether_geodesic(E, center, log_map(E, center, end), segments)


def geodesic_edge(
    E: EtherStructure, center: np.ndarray, start: np.ndarray, end: np.ndarray
) -> Polyline:
    """Membrane side from `start` to `end` through `center`, whichever way s_center runs."""
    if E.involutive:
        return geodesic_through(E, center, end)
    forward = float(np.max(np.abs(reflection(E, center, start) - end)))
    backward = float(np.max(np.abs(reflection(E, center, end) - start)))
    if forward <= backward:
        return geodesic_through(E, center, end)
    return geodesic_through(E, center, start).reversed()


def ether_translation(E: EtherStructure, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
    return reflection(E, x, reflection(E, y, z))


def exp_reflection_residual(E: EtherStructure, x: np.ndarray, v: np.ndarray) -> float:
    forward = exp_map(E, x, v)
    backward = exp_map(E, x, -np.asarray(v, dtype=float))
    swapped = np.max(np.abs(reflection(E, x, forward) - backward))
    skew = np.max(np.abs(ether_eval(E, x, forward) + ether_eval(E, x, backward)))
    return float(max(swapped, skew))


def ether_from_reflections(
    fix: SymplecticFixture,
    s_family: ReflectionFamily,
    x: np.ndarray,
    z: np.ndarray,
    h: float = 1e-5,
    order: int = 8,
) -> np.ndarray:
    """
    H_x(z)_j = ∫ ⟨∂_{x^j} s_x(s_x(z')), ω(z') dz'⟩ along the chart segment x -> z.
    `s_family(x, W)` must accept stacked points W.
    """
    x, z = as_point(x), as_point(z)
    direction = z - x
    if not np.any(direction):
        return np.zeros_like(x)
    tau, weights = gauss_legendre(order)
    nodes = x + tau[:, None] * direction
    images = np.asarray(s_family(x, nodes))
    steps = h * np.maximum(1.0, np.abs(x))
    derivatives = np.empty((x.size,) + images.shape)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = steps[j]
        derivatives[j] = (s_family(x + e, images) - s_family(x - e, images)) / (2.0 * steps[j])
    omega = np.asarray(fix.omega(nodes))
    integrand = np.einsum("jga,gab,b->jg", derivatives, omega, direction)
    return np.asarray(integrand @ weights)


def _second_differences(
    F: Callable[[np.ndarray, np.ndarray], np.ndarray],
    first: np.ndarray,
    second: np.ndarray,
    h: float,
) -> np.ndarray:
    """D[..., a, b] = ∂²F/∂first^a ∂second^b for F(first, second), 4-point stencil."""
    d = first.size
    out = None
    for a in range(d):
        ea = np.zeros(d)
        ea[a] = h
        for b in range(d):
            eb = np.zeros(d)
            eb[b] = h
            value = (
                F(first + ea, second + eb)
                - F(first + ea, second - eb)
                - F(first - ea, second + eb)
                + F(first - ea, second - eb)
            ) / (4.0 * h * h)
            if out is None:
                out = np.empty(np.shape(value) + (d, d))
            out[..., a, b] = value
    assert out is not None
    return out


def _warn_at_noise_floor(gamma: np.ndarray, x: np.ndarray, h: float) -> None:
    noise = np.finfo(float).eps * (1.0 + float(np.max(np.abs(x)))) / (h * h)
    peak = float(np.max(np.abs(gamma)))
    if 0.0 < peak < 10.0 * noise:
        logger.warning(
            f"connection symbols ({peak:.2e}) are at the finite-difference noise floor"
            f" ({noise:.2e}); treat them as zero"
        )


def connection_from_family(E: EtherStructure, x: np.ndarray) -> np.ndarray:
    """Christoffel symbols gamma[l, j, k] = Γ^l_jk at x."""
    x = as_point(x)
    if E.closed_forms.connection is not None:
        return np.asarray(E.closed_forms.connection(x), dtype=float)
    h = E.settings.h_fd2
    if E.involutive:

        def along_z(zj: np.ndarray, zk: np.ndarray) -> np.ndarray:
            return reflection(E, x, x + (zj - x) + (zk - x))

        gamma = -0.5 * _second_differences(along_z, x, x, h)
    else:
        mixed = _second_differences(lambda z, c: reflection(E, c, z), x, x, h)
        dz = reflection_jacobian(E, x, x)
        dx = fd_jacobian(lambda c: reflection(E, c, x), x, E.settings.h_fd)
        gamma = -np.einsum("lmr,mk,rj->ljk", mixed, invert(dz, "D_zs"), invert(dx, "D_xs"))
    _warn_at_noise_floor(gamma, x, h)
    return np.asarray(gamma)


def symplectic_compatibility_residual(E: EtherStructure, x: np.ndarray) -> float:
    """max |∂_n ω_kj - Γ^m_nk ω_mj - Γ^m_nj ω_km|."""
    x = as_point(x)
    d = E.dim
    gamma = connection_from_family(E, x)
    omega = E.fixture.omega(x)
    domega = fd_jacobian(lambda z: np.ravel(E.fixture.omega(z)), x, E.settings.h_fd)
    domega = np.moveaxis(domega.reshape(d, d, d), -1, 0)
    residual = (
        domega
        - np.einsum("mnk,mj->nkj", gamma, omega)
        - np.einsum("mnj,km->nkj", gamma, omega)
    )
    return float(np.max(np.abs(residual)))


def boundary_residual(E: EtherStructure, x: np.ndarray) -> float:
    """
    Diagonal boundary condition with both derivatives in z:
    ∂_l∂_m H_k - Γ^s_lm ∂_s H_k + ∂_s H_k Ψ^sr T^j_rl ω_jm, T^j_rl = Γ^j_rl - Γ^j_lr.
    For torsion-free structures this is D²H|diag = 2ωΓ.
    """
    x = as_point(x)
    gamma = connection_from_family(E, x)
    dz = hamiltonian_z_jacobian(E, x, x)

    def shifted(zl: np.ndarray, zm: np.ndarray) -> np.ndarray:
        return np.asarray(E.hamiltonian(x, x + (zl - x) + (zm - x)))

    d2 = _second_differences(shifted, x, x, E.settings.h_fd2)
    torsion = gamma - np.transpose(gamma, (0, 2, 1))
    residual = (
        d2
        - np.einsum("slm,ks->klm", gamma, dz)
        + np.einsum("ks,sr,jrl,jm->klm", dz, E.fixture.psi(x), torsion, E.fixture.omega(x))
    )
    return float(np.max(np.abs(residual)))


def diagonal_derivative_residual(E: EtherStructure, x: np.ndarray) -> float:
    """|H_x(x)| and, for involutive structures, |D_z H|diag - 2ω(x)|."""
    x = as_point(x)
    residual = float(np.max(np.abs(ether_eval(E, x, x))))
    if E.involutive:
        dz = hamiltonian_z_jacobian(E, x, x)
        residual = max(residual, float(np.max(np.abs(dz - 2.0 * E.fixture.omega(x)))))
    return residual


def sample_points(
    E: EtherStructure, rng: np.random.Generator, count: int, radius: float = 0.6
) -> np.ndarray:
    """Random points in a centered cube kept well inside the chart domain."""
    lower = np.asarray(E.domain.lower)
    upper = np.asarray(E.domain.upper)
    half = np.minimum(radius, 0.5 * (upper - lower) * 0.8)
    center = 0.5 * (upper + lower)
    return center + rng.uniform(-1.0, 1.0, size=(count, E.dim)) * half


def sample_pairs(
    E: EtherStructure, rng: np.random.Generator, count: int, spread: float = 0.3
) -> Sequence[Tuple[np.ndarray, np.ndarray]]:
    xs = sample_points(E, rng, count)
    offsets = rng.normal(size=(count, E.dim))
    offsets *= (spread * rng.uniform(0.2, 1.0, size=count) / np.linalg.norm(offsets, axis=1))[
        :, None
    ]
    return [(x, x + o) for x, o in zip(xs, offsets)]


__all__ = [
    "ClosedForms",
    "EtherStructure",
    "boundary_residual",
    "connection_from_family",
    "ether_eval",
    "ether_from_reflections",
    "ether_geodesic",
    "ether_translation",
    "exp_map",
    "log_map",
    "midpoint",
    "reflection",
    "reflection_inverse",
    "zero_curvature_residual",
]
