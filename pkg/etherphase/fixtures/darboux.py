"""
The Euclidean structure pulled back by the symplectic shear φ(q, p) = (q, p + ε q²).
Every quantity has an exact oracle by conjugation with φ.
"""
import math
from typing import Optional

import numpy as np

from etherphase.config import NumericSettings
from etherphase.ether import ClosedForms, EtherStructure
from etherphase.exceptions import ParameterException
from etherphase.geometry import StandardPhaseSpace


class Shear:
    def __init__(self, n: int, epsilon: float) -> None:
        self.n = n
        self.epsilon = epsilon

    def apply(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = z.copy()
        out[..., self.n :] += self.epsilon * z[..., : self.n] ** 2
        return out

    def inverse(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        out = w.copy()
        out[..., self.n :] -= self.epsilon * w[..., : self.n] ** 2
        return out

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        n = self.n
        J = np.eye(2 * n)
        J[n:, :n] = 2.0 * self.epsilon * np.diag(np.asarray(z, dtype=float)[:n])
        return J


def darboux_pullback(
    epsilon: float = 0.3,
    n: int = 1,
    half_width: float = 3.0,
    settings: Optional[NumericSettings] = None,
) -> EtherStructure:
    if not math.isfinite(epsilon):
        raise ParameterException(f"epsilon must be finite, got {epsilon}")
    if int(n) != n or n < 1:
        raise ParameterException(f"n must be a positive integer, got {n}")
    n = int(n)
    phi = Shear(n, epsilon)
    fixture = StandardPhaseSpace(n, half_width, name=f"R^{2 * n} (sheared chart)")
    omega = fixture.omega(np.zeros(2 * n))
    psi = fixture.psi(np.zeros(2 * n))

    def hamiltonian(x: np.ndarray, z: np.ndarray) -> np.ndarray:
        flat = 2.0 * (phi.apply(z) - phi.apply(x)) @ omega.T
        return flat @ phi.jacobian(x)

    def exp(x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return phi.inverse(phi.apply(x) + np.asarray(v) @ phi.jacobian(x).T)

    def left(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        covector = np.linalg.solve(phi.jacobian(x).T, p)
        return phi.inverse(phi.apply(x) + 0.5 * psi @ covector)

    closed = ClosedForms(
        reflection=lambda x, z: phi.inverse(2.0 * phi.apply(x) - phi.apply(z)),
        reflection_inverse=lambda x, z: phi.inverse(2.0 * phi.apply(x) - phi.apply(z)),
        exp=exp,
        log=lambda x, z: np.linalg.solve(phi.jacobian(x), phi.apply(z) - phi.apply(x)),
        midpoint=lambda a, b: phi.inverse(0.5 * (phi.apply(a) + phi.apply(b))),
        left=left,
    )
    return EtherStructure(
        name="darboux_pullback",
        fixture=fixture,
        hamiltonian=hamiltonian,
        closed_forms=closed,
        validity_radius=math.inf,
        settings=settings or NumericSettings(),
        summary=(
            f"phi(q, p) = (q, p + {epsilon:g} q^2)",
            "H_x(z) = Dphi(x)^T 2 omega (phi(z) - phi(x))",
            "s_x(z) = phi^-1(2 phi(x) - phi(z))",
            "connection: finite differences of the reflection family",
        ),
    )
