import math
from typing import Optional

import numpy as np

from etherphase.config import NumericSettings
from etherphase.ether import ClosedForms, EtherStructure
from etherphase.exceptions import ParameterException
from etherphase.geometry import StandardPhaseSpace


def euclid_weyl(
    n: int = 1, half_width: float = 5.0, settings: Optional[NumericSettings] = None
) -> EtherStructure:
    """The Weyl structure of R^2n: H_x(z) = 2ω(z - x), s_x(z) = 2x - z."""
    if int(n) != n or n < 1:
        raise ParameterException(f"n must be a positive integer, got {n}")
    n = int(n)
    fixture = StandardPhaseSpace(n, half_width, name=f"R^{2 * n}")
    omega = fixture.omega(np.zeros(2 * n))
    psi = fixture.psi(np.zeros(2 * n))
    dim = 2 * n

    def hamiltonian(x: np.ndarray, z: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(z) - x) @ omega.T

    closed = ClosedForms(
        reflection=lambda x, z: 2.0 * x - np.asarray(z),
        reflection_inverse=lambda x, z: 2.0 * x - np.asarray(z),
        reflection_jacobian=lambda x, z: -np.eye(dim),
        exp=lambda x, v: x + np.asarray(v),
        log=lambda x, z: np.asarray(z) - x,
        midpoint=lambda a, b: 0.5 * (a + b),
        left=lambda x, p: x + 0.5 * np.asarray(p) @ psi.T,
        connection=lambda x: np.zeros((dim, dim, dim)),
    )
    return EtherStructure(
        name="euclid_weyl_2n",
        fixture=fixture,
        hamiltonian=hamiltonian,
        closed_forms=closed,
        validity_radius=math.inf,
        settings=settings or NumericSettings(),
        summary=(
            "H_x(z) = 2 omega (z - x)",
            "s_x(z) = 2x - z",
            "Exp_x(v) = x + v, midpoint(a, b) = (a + b) / 2",
            "left(x, p) = x + Psi p / 2",
        ),
    )
