"""
Torsion structures: a constant internal Hamiltonian H_x(z) = A(z - x) with A = 2ω + diag(b, 0)
on the plane. Its inversions s_x(z) = x + N(z - x) keep x fixed and are symplectic but are
not involutions for b ≠ 0, so every membrane is built from internal geodesics and
center-points.
"""
import math
from dataclasses import dataclass, field
from logging import getLogger
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from etherphase.config import NumericSettings
from etherphase.ether import (
    ClosedForms,
    EtherStructure,
    exp_ray,
    reflection,
    reflection_inverse,
    reflection_jacobian,
)
from etherphase.exceptions import EtherPhaseException, ParameterException
from etherphase.geometry import Polyline, StandardPhaseSpace, as_point, fd_gradient, invert
from etherphase.groupoid import hj_residual
from etherphase.phase_maps import (
    HamiltonianSystem,
    SymplecticMap,
    closedness_residual,
    dynamic_phase,
    dynamic_phase_function,
    flow_map,
    gradient_line_integral,
    harmonic_oscillator,
    normalized_phase,
    phase_function,
    phase_gradient,
    translation_map,
)
from etherphase.phase_product import phase_product, phase_product_with_map

logger = getLogger(__name__)

# |b| below this keeps A well-conditioned
MAX_DEFORMATION = 2.0


def torsion_matrices(b: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A, N, N⁻¹) for the deformation parameter b."""
    A = np.array([[b, -2.0], [2.0, 0.0]])
    N = np.array([[-1.0, 0.0], [-b, -1.0]])
    N_inverse = np.array([[-1.0, 0.0], [b, -1.0]])
    return A, N, N_inverse


def zero_curvature_condition(B: np.ndarray) -> np.ndarray:
    """Bᵀ - B + BΨBᵀ for H_x(z) = (2ω + B)(z - x) on the standard plane."""
    B = np.asarray(B, dtype=float)
    psi = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return B.T - B + B @ psi @ B.T


def make_torsion_fixture(
    b: float = 1.0, half_width: float = 5.0, settings: Optional[NumericSettings] = None
) -> EtherStructure:
    if not math.isfinite(b):
        raise ParameterException(f"b must be finite, got {b}")
    if abs(b) >= MAX_DEFORMATION:
        raise ParameterException(f"|b| must stay below {MAX_DEFORMATION:g}, got {b}")
    b = float(b)
    A, N, N_inverse = torsion_matrices(b)
    if abs(np.linalg.det(A)) < 1e-12:
        raise ParameterException(f"A is degenerate for b = {b}")
    A_inverse = np.linalg.inv(A)
    fixture = StandardPhaseSpace(1, half_width, name="R^2")
    psi = fixture.psi(np.zeros(2))
    exp_matrix = 0.5 * psi.T @ A.T
    log_matrix = np.linalg.inv(exp_matrix)
    center_matrix = np.linalg.inv(np.eye(2) - N)

    def hamiltonian(x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return (np.asarray(z) - x) @ A.T

    closed = ClosedForms(
        reflection=lambda x, z: x + (np.asarray(z) - x) @ N.T,
        reflection_inverse=lambda x, z: x + (np.asarray(z) - x) @ N_inverse.T,
        reflection_jacobian=lambda x, z: N,
        exp=lambda x, v: x + np.asarray(v) @ exp_matrix.T,
        log=lambda x, z: (np.asarray(z) - x) @ log_matrix.T,
        midpoint=lambda a, c: center_matrix @ (a - N @ c),
        left=lambda x, p: x + np.asarray(p) @ A_inverse.T,
        connection=lambda x: np.zeros((2, 2, 2)),
    )
    return EtherStructure(
        name=f"torsion_const(b={b:g})",
        fixture=fixture,
        hamiltonian=hamiltonian,
        involutive=b == 0.0,
        closed_forms=closed,
        validity_radius=math.inf,
        settings=settings or NumericSettings(),
        summary=(
            f"A = 2 omega + diag(b, 0) = {A.tolist()}",
            f"N = {N.tolist()}",
            f"N^-1 = {N_inverse.tolist()}",
            "s_x(z) = x + N (z - x)",
        ),
        deformation=abs(b),
    )


def internal_geodesic(
    E: EtherStructure, x: np.ndarray, v: np.ndarray, segments: Optional[int] = None
) -> Polyline:
    """σ⁻ ∪ σ⁺ from s_x⁻¹(Exp_x(v)) through x to Exp_x(v), with σ⁻ = s_x⁻¹(σ⁺)."""
    x, v = as_point(x), as_point(v)
    if not np.any(v):
        return Polyline.point(x)
    half = max(1, (segments or E.settings.geodesic_segments) // 2)
    forward = exp_ray(E, x, v, half)

    def inverse_jacobian(z: np.ndarray) -> np.ndarray:
        return invert(reflection_jacobian(E, x, reflection_inverse(E, x, z)), "D_zs", z)

    backward = forward.mapped(lambda z: reflection_inverse(E, x, z), inverse_jacobian)
    return backward.reversed().join(forward)


def involution_violation(E: EtherStructure, x: np.ndarray, z: np.ndarray) -> float:
    """‖s_x(s_x(z)) - z‖; large for torsion structures."""
    return float(np.max(np.abs(reflection(E, x, reflection(E, x, z)) - as_point(z))))


TORSION_IDENTITIES = (
    "gradient-membrane",
    "closedness",
    "dynamic-identity",
    "product-gradient",
    "product-with-map",
    "hamilton-jacobi",
)


@dataclass
class TorsionSuiteReport:
    structure: str
    residuals: Dict[str, float] = field(default_factory=dict)
    errors: List[str] = field(default_factory=list)
    involution_violation: float = 0.0

    def passed(self, tolerance: float) -> bool:
        return not self.errors and all(r <= tolerance for r in self.residuals.values())


def torsion_phase_suite(
    E: EtherStructure,
    points: Sequence[np.ndarray],
    gamma: Optional[SymplecticMap] = None,
    sys: Optional[HamiltonianSystem] = None,
    t: float = 0.5,
    base: Optional[np.ndarray] = None,
) -> TorsionSuiteReport:
    """
    Membrane phases with internal geodesics and center-points against the gradient
    H_x(γ(x̃)): per identity, the largest residual over `points`.
    """
    gamma = gamma or translation_map(np.array([0.1, 0.0]))
    sys = sys or harmonic_oscillator()
    y = np.zeros(E.dim) if base is None else as_point(base)
    flow = flow_map(sys, E.fixture, t)
    order = E.settings.quad_order
    inner = phase_function(E, gamma, y)
    outer = dynamic_phase_function(E, sys, t)
    composed = gamma.then(flow)

    def dynamic_at(w: np.ndarray, time: float) -> float:
        return dynamic_phase(E, sys, w, time)

    checks = {
        "gradient-membrane": lambda x: abs(
            gradient_line_integral(lambda w: phase_gradient(E, gamma, w), y, x, order)
            - normalized_phase(E, gamma, x, y)
        ),
        "closedness": lambda x: closedness_residual(
            lambda w: phase_gradient(E, gamma, w), x, E.settings.h_fd
        ),
        "dynamic-identity": lambda x: abs(
            dynamic_phase(E, sys, x, t) - dynamic_phase(E, sys, y, t)
            - normalized_phase(E, flow, x, y)
        ),
        "product-gradient": lambda x: float(
            np.max(
                np.abs(
                    fd_gradient(lambda w: phase_product(E, outer, inner, w), x, E.settings.h_fd2)
                    - phase_gradient(E, composed, x)
                )
            )
        ),
        "product-with-map": lambda x: abs(
            phase_product(E, outer, inner, x) - phase_product_with_map(E, flow, outer, inner, x)
        ),
        "hamilton-jacobi": lambda x: hj_residual(E, sys, dynamic_at, x, t),
    }
    report = TorsionSuiteReport(E.name)
    for identity in TORSION_IDENTITIES:
        report.residuals[identity] = 0.0
    for x in points:
        x = as_point(x)
        for identity in TORSION_IDENTITIES:
            try:
                value = checks[identity](x)
            except EtherPhaseException as e:
                report.errors.append(f"{identity} at {np.round(x, 6).tolist()}: {e}")
                continue
            report.residuals[identity] = max(report.residuals[identity], float(value))
        report.involution_violation = max(
            report.involution_violation, involution_violation(E, x, x + np.array([0.3, 0.2]))
        )
    if report.errors:
        logger.warning(f"{len(report.errors)} torsion checks failed on {E.name}")
    return report
