from etherphase.fixtures.base import (
    describe_fixture,
    fixture_names,
    load_fixture,
    register_fixture,
)
from etherphase.fixtures.darboux import darboux_pullback
from etherphase.fixtures.euclid import euclid_weyl
from etherphase.fixtures.sphere import sphere_chart
from etherphase.torsion import make_torsion_fixture

register_fixture("euclid_weyl_2n", euclid_weyl, "Weyl structure of R^2n, closed forms throughout")
register_fixture(
    "darboux_pullback", darboux_pullback, "Euclidean structure through (q, p) -> (q, p + eps q^2)"
)
register_fixture("sphere_chart", sphere_chart, "stereographic chart of the round sphere")
register_fixture("torsion_const", make_torsion_fixture, "constant internal Hamiltonian A(z - x)")

__all__ = [
    "darboux_pullback",
    "describe_fixture",
    "euclid_weyl",
    "fixture_names",
    "load_fixture",
    "make_torsion_fixture",
    "register_fixture",
    "sphere_chart",
]
