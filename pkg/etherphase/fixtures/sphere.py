"""
The unit sphere in the stereographic chart from the south pole, with its area form and the
geodesic (rotation-by-π) reflections. H is not known in closed form here: it is rebuilt
from the reflection family by quadrature.
"""
from typing import Optional

import numpy as np

from etherphase.config import NumericSettings
from etherphase.ether import ClosedForms, EtherStructure, ether_from_reflections
from etherphase.exceptions import ParameterException
from etherphase.geometry import Box, standard_omega


def embed(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    u, v = z[..., 0], z[..., 1]
    denominator = 1.0 + u * u + v * v
    return np.stack([2.0 * u, 2.0 * v, 2.0 - denominator], axis=-1) / denominator[..., None]


def project(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X[..., :2] / (1.0 + X[..., 2:3])


def embed_jacobian(z: np.ndarray) -> np.ndarray:
    """dP, shape (3, 2)."""
    u, v = float(z[0]), float(z[1])
    D = 1.0 + u * u + v * v
    return np.array(
        [
            [(2.0 * D - 4.0 * u * u) / D**2, -4.0 * u * v / D**2],
            [-4.0 * u * v / D**2, (2.0 * D - 4.0 * v * v) / D**2],
            [-4.0 * u / D**2, -4.0 * v / D**2],
        ]
    )


def _normalize(X: np.ndarray) -> np.ndarray:
    return X / np.linalg.norm(X, axis=-1, keepdims=True)


class SphereChart:
    def __init__(self, half_width: float = 1.5) -> None:
        self.name = "S^2 (stereographic chart)"
        self.dim = 2
        self.domain = Box.cube(2, half_width)
        self._omega = standard_omega(1)

    def _conformal(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return 1.0 + np.sum(z * z, axis=-1)

    def omega(self, z: np.ndarray) -> np.ndarray:
        factor = 4.0 / self._conformal(z) ** 2
        return np.asarray(factor)[..., None, None] * self._omega

    def psi(self, z: np.ndarray) -> np.ndarray:
        factor = self._conformal(z) ** 2 / 4.0
        return -np.asarray(factor)[..., None, None] * self._omega

    def theta(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        scale = 2.0 / self._conformal(z)
        return np.stack([z[..., 1], -z[..., 0]], axis=-1) * np.asarray(scale)[..., None]


def reflect(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    X = embed(x)
    Z = embed(z)
    return project(2.0 * np.sum(X * Z, axis=-1, keepdims=True) * X - Z)


def exp(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    X = embed(x)
    velocity = np.asarray(v, dtype=float) @ embed_jacobian(x).T
    speed = np.linalg.norm(velocity, axis=-1, keepdims=True)
    direction = np.divide(velocity, speed, out=np.zeros_like(velocity), where=speed > 0)
    return project(np.cos(speed) * X + np.sin(speed) * direction)


def log(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    X = embed(x)
    Z = embed(z)
    cosine = float(X @ Z)
    tangent = Z - cosine * X
    length = float(np.linalg.norm(tangent))
    if length == 0.0:
        return np.zeros(2)
    velocity = np.arctan2(length, cosine) * tangent / length
    v, *_ = np.linalg.lstsq(embed_jacobian(x), velocity, rcond=None)
    return np.asarray(v)


def midpoint(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return project(_normalize(embed(a) + embed(b)))


def levi_civita(z: np.ndarray) -> np.ndarray:
    """Γ^k_ij of the metric 4/(1 + r²)² δ, as gamma[k, i, j]."""
    z = np.asarray(z, dtype=float)
    dlog = -2.0 * z / (1.0 + z @ z)
    eye = np.eye(2)
    return (
        np.einsum("ki,j->kij", eye, dlog)
        + np.einsum("kj,i->kij", eye, dlog)
        - np.einsum("ij,k->kij", eye, dlog)
    )


def hamiltonian_oracle(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """H_x(z)_j = -2 (P(x) × ∂_j P(x)) · P(z)."""
    X = embed(x)
    dP = embed_jacobian(x)
    return np.array([-2.0 * np.cross(X, dP[:, j]) @ embed(z) for j in range(2)])


def sphere_chart(
    half_width: float = 1.5,
    validity_radius: float = 1.0,
    settings: Optional[NumericSettings] = None,
) -> EtherStructure:
    if not 0 < validity_radius <= half_width:
        raise ParameterException(f"validity radius {validity_radius} outside (0, {half_width}]")
    settings = settings or NumericSettings()
    fixture = SphereChart(half_width)

    def hamiltonian(x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return ether_from_reflections(
            fixture, reflect, x, z, h=settings.h_fd, order=settings.quad_order
        )

    closed = ClosedForms(
        reflection=reflect,
        reflection_inverse=reflect,
        exp=exp,
        log=log,
        midpoint=midpoint,
        connection=levi_civita,
    )
    return EtherStructure(
        name="sphere_chart",
        fixture=fixture,
        hamiltonian=hamiltonian,
        closed_forms=closed,
        validity_radius=validity_radius,
        settings=settings,
        fd_limited=True,
        summary=(
            "P(u, v) = (2u, 2v, 1 - r^2) / (1 + r^2)",
            "omega = 4 / (1 + r^2)^2 dp^dq, theta = 2 (p dq - q dp) / (1 + r^2)",
            "s_x: rotation by pi about P(x)",
            "H: rebuilt from the reflections by Gauss-Legendre quadrature",
        ),
    )
