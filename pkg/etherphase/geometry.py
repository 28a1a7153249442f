"""
Chart-level symplectic linear algebra and the numerical plumbing every other module uses:
finite differences, Gauss–Legendre line integrals, damped Newton and fixed-step RK4.

Conventions: z = (q, p), ω = [[0, -I], [I, 0]], Ψ = ω⁻¹ and {f, g} = ∇f·Ψ∇g.
"""
import functools
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from logging import getLogger
from typing import (
    Callable,
    Dict,
    Generator,
    List,
    Optional,
    Protocol,
    Sequence,
    Tuple,
    runtime_checkable,
)

import numpy as np
import scipy.linalg
from scipy.special import roots_legendre

from etherphase.exceptions import (
    ConditioningException,
    DomainException,
    IterationLimitException,
    NumericException,
)

logger = getLogger(__name__)

ScalarField = Callable[[np.ndarray], float]
VectorField = Callable[[np.ndarray], np.ndarray]
TimeField = Callable[[float, np.ndarray], np.ndarray]

# membrane area = ORIENTATION * (θ line integral around the listed boundary)
ORIENTATION = -1.0

DEFAULT_H_FD = 1e-5
MAX_CONDITION = 1e12
MIN_STEP = 2.0**-12
STALL_FACTOR = 1e3


def standard_omega(n: int = 1) -> np.ndarray:
    eye = np.eye(n)
    zero = np.zeros((n, n))
    return np.block([[zero, -eye], [eye, zero]])


def as_point(z: Sequence[float]) -> np.ndarray:
    point = np.array(z, dtype=float)
    if point.ndim != 1:
        raise ValueError(f"expected a coordinate vector, got shape {point.shape}")
    return point


@dataclass(frozen=True, eq=False)
class Box:
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]

    @classmethod
    def cube(cls, dim: int, half_width: float) -> "Box":
        return cls((-half_width,) * dim, (half_width,) * dim)

    def contains(self, z: np.ndarray) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(
            np.all(np.isfinite(z)) and np.all(z >= self.lower) and np.all(z <= self.upper)
        )

    def require(self, z: np.ndarray, what: str = "point") -> None:
        if not self.contains(z):
            raise DomainException(f"{what} {np.round(np.asarray(z), 6)} outside chart domain")


@runtime_checkable
class SymplecticFixture(Protocol):
    """
    A single chart with a symplectic form ω, a primitive θ (dθ = ω) and the Poisson tensor
    Ψ = ω⁻¹. `omega`, `psi` and `theta` accept stacked points of shape (..., 2n).
    """

    name: str
    dim: int
    domain: Box

    def omega(self, z: np.ndarray) -> np.ndarray:
        ...

    def psi(self, z: np.ndarray) -> np.ndarray:
        ...

    def theta(self, z: np.ndarray) -> np.ndarray:
        ...


class StandardPhaseSpace:
    """R^2n with the constant form ω = dp∧dq and primitive θ = p·dq."""

    def __init__(self, n: int = 1, half_width: float = 5.0, name: str = "standard") -> None:
        if n < 1:
            raise ValueError(f"n must be positive, got {n}")
        self.name = name
        self.n = n
        self.dim = 2 * n
        self.domain = Box.cube(self.dim, half_width)
        self._omega = standard_omega(n)
        self._psi = np.linalg.inv(self._omega)

    def omega(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(self._omega, z.shape[:-1] + self._omega.shape).copy()

    def psi(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(self._psi, z.shape[:-1] + self._psi.shape).copy()

    def theta(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        out[..., : self.n] = z[..., self.n :]
        return out


def _steps(z: np.ndarray, h: float) -> np.ndarray:
    return h * np.maximum(1.0, np.abs(z))


def fd_gradient(f: ScalarField, z: np.ndarray, h: float = DEFAULT_H_FD) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    steps = _steps(z, h)
    grad = np.empty_like(z)
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = steps[j]
        grad[j] = (f(z + e) - f(z - e)) / (2.0 * steps[j])
    return grad


def fd_jacobian(F: VectorField, z: np.ndarray, h: float = DEFAULT_H_FD) -> np.ndarray:
    """Central-difference Jacobian, J[:, j] = ∂F/∂z^j."""
    z = np.asarray(z, dtype=float)
    steps = _steps(z, h)
    columns = []
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = steps[j]
        columns.append((np.atleast_1d(F(z + e)) - np.atleast_1d(F(z - e))) / (2.0 * steps[j]))
    return np.stack(columns, axis=-1)


def check_fixture(
    fix: SymplecticFixture, z: np.ndarray, h: float = DEFAULT_H_FD
) -> Dict[str, float]:
    """Residuals of the fixture invariants at z: antisymmetry, Ψω = I and dθ = ω."""
    z = as_point(z)
    omega = fix.omega(z)
    dtheta = fd_jacobian(fix.theta, z, h)
    return {
        "antisymmetry": float(np.max(np.abs(omega + omega.T))),
        "inverse": float(np.max(np.abs(fix.psi(z) @ omega - np.eye(fix.dim)))),
        "exterior-derivative": float(np.max(np.abs(dtheta.T - dtheta - omega))),
    }


def poisson_bracket(
    fix: SymplecticFixture,
    f: ScalarField,
    g: ScalarField,
    z: np.ndarray,
    h: float = DEFAULT_H_FD,
) -> float:
    z = as_point(z)
    fix.domain.require(z)
    grad_f = fd_gradient(f, z, h)
    grad_g = fd_gradient(g, z, h)
    if not (np.all(np.isfinite(grad_f)) and np.all(np.isfinite(grad_g))):
        raise NumericException("non-finite gradient in Poisson bracket", last_point=z)
    return float(grad_f @ fix.psi(z) @ grad_g)


def bracket_matrix(fix: SymplecticFixture, gradients: np.ndarray, z: np.ndarray) -> np.ndarray:
    """{F_j, F_k} for the rows of `gradients` (rows are ∇F_j)."""
    return gradients @ fix.psi(z) @ gradients.T


@functools.lru_cache(maxsize=32)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    if order < 1:
        raise ValueError(f"quadrature order must be positive, got {order}")
    nodes, weights = roots_legendre(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def gauss_legendre_integral(f: Callable[[float], np.ndarray], order: int = 8) -> np.ndarray:
    """∫_0^1 f(τ) dτ for array-valued f."""
    nodes, weights = gauss_legendre(order)
    return sum(w * np.asarray(f(float(t))) for t, w in zip(nodes, weights))


@dataclass(frozen=True, eq=False)
class Polyline:
    """
    Ordered chart points. `tangents`, when present, holds for every segment the derivatives
    at its two ends with respect to a unit segment parameter, shape (m - 1, 2, 2n); such
    segments are cubic Hermite arcs. A closed polyline gets a straight closing segment.
    """

    vertices: np.ndarray
    closed: bool = False
    tangents: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        vertices = np.atleast_2d(np.asarray(self.vertices, dtype=float))
        object.__setattr__(self, "vertices", vertices)
        if len(vertices) < 1:
            raise ValueError("polyline needs at least one vertex")
        if not np.all(np.isfinite(vertices)):
            raise NumericException("non-finite polyline vertex")
        if self.tangents is not None:
            tangents = np.asarray(self.tangents, dtype=float)
            if tangents.shape != (len(vertices) - 1, 2, vertices.shape[1]):
                raise ValueError(f"tangent array has shape {tangents.shape}")
            object.__setattr__(self, "tangents", tangents)

    @classmethod
    def from_vertex_tangents(cls, vertices: np.ndarray, tangents: np.ndarray) -> "Polyline":
        tangents = np.asarray(tangents, dtype=float)
        return cls(vertices, tangents=np.stack([tangents[:-1], tangents[1:]], axis=1))

    @classmethod
    def point(cls, z: np.ndarray) -> "Polyline":
        return cls(np.atleast_2d(z))

    @property
    def start(self) -> np.ndarray:
        return self.vertices[0]

    @property
    def end(self) -> np.ndarray:
        return self.vertices[-1]

    def _segment_tangents(self) -> np.ndarray:
        if self.tangents is not None:
            return self.tangents
        chords = np.diff(self.vertices, axis=0)
        return np.stack([chords, chords], axis=1)

    def reversed(self) -> "Polyline":
        tangents = None
        if self.tangents is not None:
            tangents = -self.tangents[::-1, ::-1, :]
        return Polyline(self.vertices[::-1].copy(), self.closed, tangents)

    def mapped(
        self, apply: VectorField, jacobian: Callable[[np.ndarray], np.ndarray]
    ) -> "Polyline":
        """Image under a map, tangents pushed forward by its Jacobian."""
        images = np.stack([apply(v) for v in self.vertices])
        jacobians = [jacobian(v) for v in self.vertices]
        tangents = self._segment_tangents()
        pushed = np.empty_like(tangents)
        for k in range(len(tangents)):
            pushed[k, 0] = jacobians[k] @ tangents[k, 0]
            pushed[k, 1] = jacobians[k + 1] @ tangents[k, 1]
        return Polyline(images, self.closed, pushed)

    def join(self, other: "Polyline") -> "Polyline":
        """Concatenate, dropping `other`'s first vertex (assumed equal to our last)."""
        vertices = np.concatenate([self.vertices, other.vertices[1:]])
        if self.tangents is None and other.tangents is None:
            return Polyline(vertices)
        parts = [t for t in (self._segment_tangents(), other._segment_tangents()) if len(t)]
        tangents = np.concatenate(parts) if parts else np.zeros((0, 2, vertices.shape[1]))
        return Polyline(vertices, tangents=tangents)

    def segments(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Start points, end points and end tangents of every segment, closure included."""
        starts, ends = self.vertices[:-1], self.vertices[1:]
        tangents = self._segment_tangents()
        if self.closed and len(self.vertices) > 1:
            chord = self.vertices[0] - self.vertices[-1]
            starts = np.concatenate([starts, self.vertices[-1:]])
            ends = np.concatenate([ends, self.vertices[:1]])
            tangents = np.concatenate([tangents, np.stack([chord, chord])[None]])
        return starts, ends, tangents


def _hermite(
    starts: np.ndarray, ends: np.ndarray, tangents: np.ndarray, tau: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    t = tau[None, :, None]
    t2, t3 = t * t, t * t * t
    p0, p1 = starts[:, None, :], ends[:, None, :]
    m0, m1 = tangents[:, None, 0, :], tangents[:, None, 1, :]
    points = (
        (2 * t3 - 3 * t2 + 1) * p0
        + (t3 - 2 * t2 + t) * m0
        + (-2 * t3 + 3 * t2) * p1
        + (t3 - t2) * m1
    )
    velocity = (
        (6 * t2 - 6 * t) * p0
        + (3 * t2 - 4 * t + 1) * m0
        + (-6 * t2 + 6 * t) * p1
        + (3 * t2 - 2 * t) * m1
    )
    return points, velocity


def line_integral(form: VectorField, path: Polyline, order: int = 8) -> float:
    """∫_path form, with `form` evaluated on stacked points (..., 2n)."""
    starts, ends, tangents = path.segments()
    if len(starts) == 0:
        return 0.0
    tau, weights = gauss_legendre(order)
    points, velocity = _hermite(starts, ends, tangents, tau)
    values = np.asarray(form(points.reshape(-1, points.shape[-1]))).reshape(points.shape)
    return float(np.einsum("kgd,kgd,g->", values, velocity, weights))


def line_integral_theta(fix: SymplecticFixture, path: Polyline, order: int = 8) -> float:
    fix.domain.require(path.vertices, "polyline vertex")
    return line_integral(fix.theta, path, order)


@dataclass(frozen=True, eq=False)
class Membrane:
    """An oriented loop made of boundary pieces listed in traversal order."""

    pieces: Tuple[Polyline, ...]
    closure_tolerance: float = 1e-6

    def boundary(self) -> Polyline:
        loop = self.pieces[0]
        for piece in self.pieces[1:]:
            gap = float(np.max(np.abs(piece.start - loop.end)))
            if gap > self.closure_tolerance:
                logger.warning(f"membrane pieces do not meet (gap {gap:.3e}), closing straight")
                loop = loop.join(Polyline(np.stack([loop.end, piece.start])))
            loop = loop.join(piece)
        gap = float(np.max(np.abs(loop.end - loop.start)))
        if gap > self.closure_tolerance:
            logger.warning(f"membrane boundary is open (gap {gap:.3e}), closing straight")
            loop = loop.join(Polyline(np.stack([loop.end, loop.start])))
        return loop

    def area(self, fix: SymplecticFixture, order: int = 8) -> float:
        return ORIENTATION * line_integral_theta(fix, self.boundary(), order)


_NEWTON_COUNTER: ContextVar[Optional[List[int]]] = ContextVar(
    "etherphase_newton_counter", default=None
)


@contextmanager
def count_iterations() -> Generator[List[int], None, None]:
    """
    Collects the Newton iterations spent inside the block (in the current context).
    """
    counter = [0]
    token = _NEWTON_COUNTER.set(counter)
    try:
        yield counter
    finally:
        _NEWTON_COUNTER.reset(token)


@dataclass(frozen=True)
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float
    condition: float


def _max_norm(r: np.ndarray) -> float:
    return float(np.max(np.abs(r))) if r.size else 0.0


def _evaluate(F: VectorField, x: np.ndarray) -> Optional[np.ndarray]:
    try:
        r = np.atleast_1d(np.asarray(F(x), dtype=float))
    except DomainException:
        return None
    return r if np.all(np.isfinite(r)) else None


def _require_conditioned(A: np.ndarray, what: str, last_point: Optional[np.ndarray]) -> float:
    if not np.all(np.isfinite(A)):
        raise NumericException(f"non-finite {what}", last_point=last_point)
    condition = float(np.linalg.cond(A))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise ConditioningException(
            f"{what} is singular or ill-conditioned (cond {condition:.3e})", last_point=last_point
        )
    return condition


def solve_linear(
    A: np.ndarray, b: np.ndarray, what: str = "matrix", last_point: Optional[np.ndarray] = None
) -> np.ndarray:
    """A⁻¹b, raising ConditioningException for a singular A."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _require_conditioned(A, what, last_point)
    try:
        return np.asarray(scipy.linalg.solve(A, b))
    except scipy.linalg.LinAlgError as e:
        raise ConditioningException(f"{what}: {e}", last_point=last_point) from e


def invert(
    A: np.ndarray, what: str = "matrix", last_point: Optional[np.ndarray] = None
) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    _require_conditioned(A, what, last_point)
    try:
        return np.asarray(scipy.linalg.inv(A))
    except scipy.linalg.LinAlgError as e:
        raise ConditioningException(f"{what}: {e}", last_point=last_point) from e


def newton_iterate(
    F: VectorField,
    x0: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 50,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    h: float = DEFAULT_H_FD,
    domain: Optional[Box] = None,
) -> NewtonResult:
    """
    Damped Newton with a halving line search on the max-norm of the residual.
    A search that stalls within STALL_FACTOR * tol of the target is accepted as converged.
    """
    x = np.atleast_1d(np.array(x0, dtype=float))
    r = _evaluate(F, x)
    if r is None:
        raise NumericException("residual is not finite at the seed", last_point=x)
    norm = _max_norm(r)
    iterations = 0
    condition = 1.0
    while norm >= tol:
        if iterations >= max_iter:
            raise IterationLimitException(
                f"no convergence after {iterations} iterations (residual {norm:.3e})",
                residual=norm,
                iterations=iterations,
                last_point=x,
            )
        J = np.atleast_2d(jacobian(x) if jacobian is not None else fd_jacobian(F, x, h))
        condition = _require_conditioned(J, "Jacobian", x)
        dx = scipy.linalg.solve(J, -r)
        step = 1.0
        while step >= MIN_STEP:
            trial = x + step * dx
            if domain is None or domain.contains(trial):
                r_trial = _evaluate(F, trial)
                if r_trial is not None and _max_norm(r_trial) < norm:
                    x, r, norm = trial, r_trial, _max_norm(r_trial)
                    break
            step /= 2.0
        else:
            if norm < STALL_FACTOR * tol:
                logger.debug(f"newton stalled at residual {norm:.3e}, accepting")
                break
            raise IterationLimitException(
                f"line search stalled (residual {norm:.3e})",
                residual=norm,
                iterations=iterations,
                last_point=x,
            )
        iterations += 1
    counter = _NEWTON_COUNTER.get()
    if counter is not None:
        counter[0] += iterations
    return NewtonResult(x, iterations, norm, condition)


def newton_solve(
    F: VectorField,
    x0: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 50,
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    h: float = DEFAULT_H_FD,
    domain: Optional[Box] = None,
) -> np.ndarray:
    return newton_iterate(F, x0, tol, max_iter, jacobian, h, domain).x


def integrate_ode(
    field: TimeField,
    x0: np.ndarray,
    span: Tuple[float, float],
    steps: int,
    domain: Optional[Box] = None,
) -> Polyline:
    """
    Classical fixed-step RK4. The returned polyline holds every node, with the field values
    at the nodes as Hermite tangents.
    """
    if steps < 1:
        raise ValueError(f"steps must be positive, got {steps}")
    t0, t1 = span
    h = (t1 - t0) / steps
    x = np.array(x0, dtype=float)
    nodes = [x]
    slopes = []
    for i in range(steps):
        t = t0 + i * h
        k1 = field(t, x)
        k2 = field(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = field(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = field(t + h, x + h * k3)
        x_next = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x_next)):
            raise NumericException(f"non-finite state at t={t + h:.6g}", last_point=x)
        if domain is not None and not domain.contains(x_next):
            raise NumericException(f"trajectory left the chart domain at t={t + h:.6g}", x)
        slopes.append(k1)
        nodes.append(x_next)
        x = x_next
    slopes.append(field(t1, x))
    return Polyline.from_vertex_tangents(np.stack(nodes), h * np.stack(slopes))
