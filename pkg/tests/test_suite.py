from dataclasses import replace

import numpy as np
import pytest

from etherphase.exceptions import InvalidConfigException
from etherphase.fixtures import load_fixture
from etherphase.registry import CHECKS
from etherphase.suite import (
    CATALOGUE,
    euclid_plane,
    oscillator,
    sample_map,
    select_checks,
    verify_structure,
)
from etherphase.utils import CheckStatus

ORACLES = [
    "eq2.4-fixed-point",
    "eq4.2-oscillator",
    "thm6.1iv-triangle-euclid",
    "eq8.2-chord-circle",
]


@pytest.fixture(scope="module")
def euclid():
    return load_fixture("euclid_weyl_2n")


class TestCatalogue:
    def test_ids_are_unique(self):
        ids = [check.identity for check in CATALOGUE]
        assert len(ids) == len(set(ids))

    def test_registered(self):
        for check in CATALOGUE:
            assert CHECKS.get(check.identity) is check

    def test_oracles_only_on_euclid_plane(self, euclid):
        assert euclid_plane(euclid)
        assert not euclid_plane(load_fixture("euclid_weyl_2n", {"n": 2}))
        assert not euclid_plane(load_fixture("darboux_pullback"))


class TestSelectChecks:
    def test_catalogue_order(self, euclid):
        chosen = select_checks(euclid, list(reversed(ORACLES)))
        assert [check.identity for check in chosen] == ORACLES

    def test_unknown_identity(self, euclid):
        with pytest.raises(InvalidConfigException):
            select_checks(euclid, ["eq99.9-missing"])

    def test_involutive_checks_skip_torsion(self):
        ids = {check.identity for check in select_checks(load_fixture("torsion_const"))}
        assert "eq2.5-involution" in ids
        assert "lem10.4-membranes" in ids
        assert "eq2.3-skew" not in ids
        assert "eq8.2-chord-circle" not in ids

    def test_torsion_checks_skip_involutive(self, euclid):
        ids = {check.identity for check in select_checks(euclid)}
        assert "eq2.3-skew" in ids
        assert not any(identity.startswith("lem10") for identity in ids)


class TestVerifyStructure:
    def test_oracles_pass(self, euclid):
        report = verify_structure(euclid, identities=ORACLES)
        assert [record.identity for record in report.records] == ORACLES
        assert report.passed
        assert report.exit_code == 0

    def test_corrupted_structure_fails(self, euclid):
        report = verify_structure(euclid.scaled(1.1), identities=["eq2.1-zero-curvature"])
        (record,) = report.records
        assert record.status is CheckStatus.FAIL
        assert record.max_residual > 0.1
        assert report.exit_code == 1

    def test_involution_fails_as_expected_with_torsion(self):
        report = verify_structure(load_fixture("torsion_const"), identities=["eq2.5-involution"])
        assert report.records[0].status is CheckStatus.EXPECTED_FAIL
        assert report.passed

    def test_untwisted_torsion_is_an_involution(self):
        E = load_fixture("torsion_const", {"b": 0.0})
        assert E.involutive
        report = verify_structure(E, identities=["eq2.5-involution"])
        assert report.records[0].status is CheckStatus.PASS
        assert report.passed

    def test_violation_threshold_scales_with_deformation(self):
        E = load_fixture("torsion_const", {"b": 1e-7})
        (record,) = verify_structure(E, identities=["eq2.5-involution"]).records
        assert record.tolerance == pytest.approx(1e-8)
        assert record.status is CheckStatus.EXPECTED_FAIL

    def test_weakened_torsion_passes_unexpectedly(self):
        E = replace(load_fixture("torsion_const", {"b": 1e-3}), deformation=1.0)
        (record,) = verify_structure(E, identities=["eq2.5-involution"]).records
        assert record.max_residual < 0.1
        assert record.status is CheckStatus.UNEXPECTED_PASS

    def test_threads_do_not_change_results(self, euclid):
        ids = ["eq2.1-zero-curvature", "eq2.3-skew", "thm3.2ii-cocycle"]
        serial = verify_structure(euclid, seed=3, identities=ids)
        threaded = verify_structure(euclid, seed=3, identities=ids, threads=3)
        assert [r.max_residual for r in serial.records] == [
            r.max_residual for r in threaded.records
        ]

    def test_multiplier_and_tolerance(self, euclid):
        report = verify_structure(
            euclid, identities=["eq2.4-fixed-point"], multiplier=0.1, tolerance=1e-3
        )
        assert report.records[0].samples == 10
        assert report.records[0].tolerance == 1e-3

    def test_logs_failures(self, euclid, caplog):
        verify_structure(euclid.scaled(1.1), identities=["eq2.1-zero-curvature"])
        assert "eq2.1-zero-curvature: fail" in caplog.text


class TestSampling:
    def test_sample_map_is_symplectic(self, euclid):
        gamma = sample_map(euclid, np.random.default_rng(0))
        assert gamma.symplecticity_residual(euclid.fixture, np.array([0.1, 0.2])) < 1e-10

    def test_sample_map_on_sphere_is_a_flow(self):
        E = load_fixture("sphere_chart")
        gamma = sample_map(E, np.random.default_rng(0), 0.1)
        assert gamma.symplecticity_residual(E.fixture, np.array([0.1, 0.0])) < 1e-5

    def test_isotropic_oscillator(self):
        E = load_fixture("euclid_weyl_2n", {"n": 2})
        system = oscillator(E)
        z = np.array([1.0, 0.0, 0.0, 1.0])
        assert system(z) == pytest.approx(1.0)
        assert np.allclose(system.grad(z), z)
