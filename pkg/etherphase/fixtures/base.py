"""
Fixture loading. A fixture factory takes the numeric settings plus keyword parameters and
returns an `EtherStructure`; factories are looked up in `FIXTURES`.
"""
import importlib
import inspect
import os
from typing import Any, Callable, List, Mapping, Optional

import numpy as np

from etherphase.config import DEFAULT_FIXTURE, FIXTURE_ENV_VAR, NumericSettings
from etherphase.ether import EtherStructure
from etherphase.exceptions import InvalidFixtureException, ParameterException
from etherphase.registry import FIXTURES, FixtureEntry

FACTORY_ENV_VAR = "ETHERPHASE_FIXTURE_FACTORY"

FixtureFactory = Callable[..., EtherStructure]


def register_fixture(name: str, factory: FixtureFactory, summary: str = "") -> None:
    FIXTURES.register(name, FixtureEntry(name, factory, summary))


def _import_fixture_factory(full_import_path: str) -> FixtureFactory:
    try:
        module_path, factory_name = full_import_path.rsplit(".", 1)
    except ValueError:  # Empty string or not full path to the factory
        raise InvalidFixtureException(
            "Fixture factory could not be imported. Full import path needs to be provided, e.g. "
            "my_package.my_module.my_factory"
        )
    try:
        module = importlib.import_module(module_path)
    except ImportError as e:
        raise InvalidFixtureException(f"Module '{module_path}' could not be imported: {e}")
    try:
        factory: FixtureFactory = getattr(module, factory_name)
    except AttributeError:
        raise InvalidFixtureException(
            f"Factory '{factory_name}' could not be found in module '{module_path}'"
        )
    if not callable(factory):
        raise InvalidFixtureException(f"'{factory_name}' is not callable")
    return factory


def _register_env_factory() -> None:
    if FACTORY_ENV_VAR not in os.environ:
        return
    path = os.environ[FACTORY_ENV_VAR]
    name = path.rsplit(".", 1)[-1]
    if name not in FIXTURES:
        register_fixture(name, _import_fixture_factory(path), f"user factory {path}")


def fixture_names() -> List[str]:
    _register_env_factory()
    return FIXTURES.names()


def load_fixture(
    name: Optional[str] = None,
    params: Optional[Mapping[str, Any]] = None,
    settings: Optional[NumericSettings] = None,
) -> EtherStructure:
    if name is None:  # Environment, then default
        name = os.environ.get(FIXTURE_ENV_VAR, DEFAULT_FIXTURE)
    _register_env_factory()
    entry = FIXTURES.get(name)
    if entry is None:
        raise InvalidFixtureException(
            f"unknown fixture '{name}'; available: {', '.join(FIXTURES.names())}"
        )
    params = dict(params or {})
    accepted = inspect.signature(entry.factory).parameters
    if not any(p.kind is inspect.Parameter.VAR_KEYWORD for p in accepted.values()):
        unknown = set(params) - set(accepted) - {"settings"}
        if unknown:
            raise ParameterException(f"fixture '{name}' has no parameters {sorted(unknown)}")
    structure = entry.factory(settings=settings or NumericSettings(), **params)
    if not isinstance(structure, EtherStructure):
        raise InvalidFixtureException(f"factory for '{name}' did not return an EtherStructure")
    return structure


def _matrix_text(matrix: np.ndarray) -> str:
    rows = ["[" + ", ".join(f"{v:g}" for v in row) + "]" for row in np.atleast_2d(matrix)]
    return "[" + ", ".join(rows) + "]"


def describe_fixture(
    name: str,
    params: Optional[Mapping[str, Any]] = None,
    settings: Optional[NumericSettings] = None,
) -> str:
    E = load_fixture(name, params, settings)
    origin = np.zeros(E.dim)
    closed = E.closed_forms.available()
    lines = [
        f"fixture: {name}",
        f"structure: {E.name}",
        f"dimension: {E.dim}",
        f"domain: {E.domain.lower} .. {E.domain.upper}",
        f"validity radius: {E.validity_radius:g}",
        f"involutive: {str(E.involutive).lower()}",
        f"omega(0): {_matrix_text(E.fixture.omega(origin))}",
        "hamiltonian field: X_H = Psi^T grad H (flows of q^2 + p^2 turn counter-clockwise)",
        "membrane orientation: area = -(theta integral around the listed boundary)",
        f"closed forms: {', '.join(closed) if closed else 'none'}",
    ]
    lines.extend(E.summary)
    return "\n".join(lines) + "\n"
