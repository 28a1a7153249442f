import pytest

from etherphase.registry import CHECKS, FIXTURES, FixtureEntry, Registry


class TestRegistry:
    @pytest.fixture
    def registry(self):
        return Registry("thing")

    def test_register(self, registry):
        registry.register("a", 1)
        assert "a" in registry
        assert registry.get("a") == 1

    def test_register_duplicate_name_is_ignored(self, registry, caplog):
        registry.register("a", 1)
        registry.register("a", 2)
        assert registry.get("a") == 1
        assert "already registered" in caplog.text

    def test_unregister(self, registry):
        registry.register("a", 1)
        registry.unregister("a")
        assert "a" not in registry
        assert registry.get("a") is None

    def test_unregister_unknown_warns(self, registry, caplog):
        registry.unregister("missing")
        assert "no thing found" in caplog.text

    def test_names_are_sorted(self, registry):
        for name in ("c", "a", "b"):
            registry.register(name, name)
        assert registry.names() == ["a", "b", "c"]

    def test_collect(self, registry):
        registry.register("a", 1)
        registry.register("b", 2)
        assert dict(registry.collect()) == {"a": 1, "b": 2}


def test_fixture_entries():
    import etherphase.fixtures  # noqa: F401

    entry = FIXTURES.get("euclid_weyl_2n")
    assert isinstance(entry, FixtureEntry)
    assert entry.summary


def test_identity_checks_registered():
    import etherphase.suite  # noqa: F401

    assert "eq2.3-skew" in CHECKS
    assert "lem10.4-membranes" in CHECKS
