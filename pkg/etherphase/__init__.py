from etherphase.fixtures import describe_fixture, fixture_names, load_fixture

__version__ = "0.1.0"

__all__ = ["describe_fixture", "fixture_names", "load_fixture"]
