"""
Run configuration.

Every setting resolves as explicit argument > environment variable > default, so
`etherphase verify --fixture euclid_weyl_2n` runs without any file.
"""
import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from etherphase.exceptions import InvalidConfigException
from etherphase.utils import Experiment, OutputFormat

CONFIG_ENV_VAR = "ETHERPHASE_CONFIG"
THREADS_ENV_VAR = "ETHERPHASE_THREADS"
FIXTURE_ENV_VAR = "ETHERPHASE_FIXTURE"

DEFAULT_FIXTURE = "euclid_weyl_2n"

TOP_LEVEL_KEYS = {
    "fixture",
    "tolerances",
    "experiment",
    "grid",
    "seed",
    "output",
    "corrupt",
    "time",
    "checks",
    "samples",
    "threads",
    "params",
}

# keys each compute experiment reads from `params`
EXPERIMENT_PARAMS: Dict[Experiment, Tuple[str, ...]] = {
    Experiment.VERIFY: (),
    Experiment.PHASE: (),
    Experiment.PRODUCT: ("y", "z", "c1", "c2"),
    Experiment.CHORD: ("radius", "center"),
    Experiment.GROUPOID: ("p0",),
    Experiment.TORSION: ("shift", "y0"),
    Experiment.HJ: (),
}


@dataclass(frozen=True)
class NumericSettings:
    tol_newton: float = 1e-10
    h_fd: float = 1e-5
    h_fd2: float = 1e-3
    quad_order: int = 8
    ode_steps: int = 64
    max_iter: int = 50
    geodesic_segments: int = 16
    curve_segments: int = 64

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise InvalidConfigException(f"tolerance '{f.name}' must be positive, got {value}")


@dataclass(frozen=True)
class GridSpec:
    q: Tuple[float, float, int] = (-0.9, 0.9, 21)
    p: Tuple[float, float, int] = (-0.9, 0.9, 21)

    def __post_init__(self) -> None:
        for axis in (self.q, self.p):
            low, high, count = axis
            if not (math.isfinite(low) and math.isfinite(high) and low <= high):
                raise InvalidConfigException(f"invalid grid range {axis}")
            if int(count) != count or count < 1:
                raise InvalidConfigException(f"grid resolution must be a positive integer: {axis}")

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parses `qmin:qmax:n,pmin:pmax:n`."""
        try:
            q_text, p_text = text.split(",")
            q = [float(v) for v in q_text.split(":")]
            p = [float(v) for v in p_text.split(":")]
            if len(q) != 3 or len(p) != 3:
                raise ValueError("each axis needs min:max:n")
        except ValueError as e:
            raise InvalidConfigException(f"invalid grid '{text}': {e}")
        return cls((q[0], q[1], int(q[2])), (p[0], p[1], int(p[2])))

    def points(self, dim: int = 2) -> np.ndarray:
        """Grid points in the first (q, p) plane of a 2n-dimensional chart, q-major order."""
        qs = np.linspace(self.q[0], self.q[1], int(self.q[2]))
        ps = np.linspace(self.p[0], self.p[1], int(self.p[2]))
        points = np.zeros((len(qs) * len(ps), dim))
        points[:, 0] = np.repeat(qs, len(ps))
        points[:, dim // 2] = np.tile(ps, len(qs))
        return points


@dataclass(frozen=True)
class RunConfig:
    fixture: str = DEFAULT_FIXTURE
    fixture_params: Mapping[str, Any] = field(default_factory=dict)
    settings: NumericSettings = field(default_factory=NumericSettings)
    tol_identity: Optional[float] = None
    experiment: Experiment = Experiment.VERIFY
    grid: GridSpec = field(default_factory=GridSpec)
    seed: int = 0
    output_path: Optional[str] = None
    output_format: OutputFormat = OutputFormat.CSV
    corrupt: Optional[float] = None
    time: float = 0.5
    checks: Tuple[str, ...] = ()
    samples: float = 1.0
    threads: int = 1
    params: Mapping[str, Any] = field(default_factory=dict)


def _reject_unknown(section: str, document: Mapping[str, Any], allowed: Any) -> None:
    unknown = set(document) - set(allowed)
    if unknown:
        raise InvalidConfigException(f"unknown keys in {section}: {sorted(unknown)}")


def _parse_corrupt(value: Any) -> Optional[float]:
    if value is None:
        return None
    parts = str(value).split()
    if len(parts) != 2 or parts[0] != "scale_H":
        raise InvalidConfigException(f"corrupt must look like 'scale_H 1.1', got '{value}'")
    try:
        return float(parts[1])
    except ValueError:
        raise InvalidConfigException(f"invalid corruption factor '{parts[1]}'")


def _parse_grid(value: Any) -> GridSpec:
    if isinstance(value, str):
        return GridSpec.parse(value)
    if isinstance(value, Mapping):
        _reject_unknown("grid", value, ("q", "p"))
        try:
            q = value.get("q", GridSpec.q)
            p = value.get("p", GridSpec.p)
            return GridSpec(
                (float(q[0]), float(q[1]), int(q[2])), (float(p[0]), float(p[1]), int(p[2]))
            )
        except (TypeError, IndexError, ValueError) as e:
            raise InvalidConfigException(f"invalid grid {value}: {e}")
    raise InvalidConfigException(f"invalid grid {value!r}")


def _parse_tolerances(value: Mapping[str, Any]) -> Tuple[NumericSettings, Optional[float]]:
    allowed = {f.name for f in fields(NumericSettings)} | {"tol_identity"}
    _reject_unknown("tolerances", value, allowed)
    values = dict(value)
    tol_identity = values.pop("tol_identity", None)
    if tol_identity is not None and not (
        isinstance(tol_identity, (int, float)) and tol_identity > 0
    ):
        raise InvalidConfigException(f"tol_identity must be positive, got {tol_identity}")
    try:
        settings = NumericSettings(**values)
    except TypeError as e:
        raise InvalidConfigException(f"{e.__class__}: {e}")
    return settings, tol_identity


def _threads_cap() -> Optional[int]:
    if THREADS_ENV_VAR not in os.environ:
        return None
    raw = os.environ[THREADS_ENV_VAR]
    try:
        cap = int(raw)
    except ValueError:
        raise InvalidConfigException(f"{THREADS_ENV_VAR} must be an integer, got '{raw}'")
    if cap < 1:
        raise InvalidConfigException(f"{THREADS_ENV_VAR} must be positive, got {cap}")
    return cap


def parse_config(document: Mapping[str, Any]) -> RunConfig:
    if not isinstance(document, Mapping):
        raise InvalidConfigException("configuration must be a JSON object")
    _reject_unknown("configuration", document, TOP_LEVEL_KEYS)
    options: Dict[str, Any] = {}

    fixture = document.get("fixture")
    if isinstance(fixture, str):
        options["fixture"] = fixture
    elif isinstance(fixture, Mapping):
        _reject_unknown("fixture", fixture, ("name", "params"))
        if "name" in fixture:
            options["fixture"] = str(fixture["name"])
        options["fixture_params"] = dict(fixture.get("params", {}))
    elif fixture is not None:
        raise InvalidConfigException(f"invalid fixture entry {fixture!r}")

    if "tolerances" in document:
        options["settings"], options["tol_identity"] = _parse_tolerances(document["tolerances"])
    if "experiment" in document:
        try:
            options["experiment"] = Experiment(document["experiment"])
        except ValueError:
            raise InvalidConfigException(f"unknown experiment '{document['experiment']}'")
    if "grid" in document:
        options["grid"] = _parse_grid(document["grid"])
    if "output" in document:
        output = document["output"]
        _reject_unknown("output", output, ("path", "format"))
        options["output_path"] = output.get("path")
        if "format" in output:
            try:
                options["output_format"] = OutputFormat(output["format"])
            except ValueError:
                raise InvalidConfigException(f"unknown output format '{output['format']}'")
    if "corrupt" in document:
        options["corrupt"] = _parse_corrupt(document["corrupt"])
    for key, kind in (("seed", int), ("time", float), ("samples", float), ("threads", int)):
        if key in document:
            try:
                options[key] = kind(document[key])
            except (TypeError, ValueError):
                raise InvalidConfigException(f"invalid {key} {document[key]!r}")
    if "checks" in document:
        options["checks"] = tuple(str(c) for c in document["checks"])
    if "params" in document:
        if not isinstance(document["params"], Mapping):
            raise InvalidConfigException("params must be an object")
        options["params"] = dict(document["params"])
        if "experiment" in options:
            allowed = EXPERIMENT_PARAMS[options["experiment"]]
        else:
            allowed = {key for keys in EXPERIMENT_PARAMS.values() for key in keys}
        _reject_unknown("params", options["params"], allowed)

    config = RunConfig(**options)
    if config.samples <= 0 or config.threads < 1:
        raise InvalidConfigException("samples and threads must be positive")
    return config


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path) as f:
            document: Dict[str, Any] = json.loads(f.read())
    except Exception as e:
        raise InvalidConfigException(f"{e.__class__}: {e}")
    return document


def load_config(
    config_path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    document: Dict[str, Any] = {}
    if config_path is not None:  # Explicit
        document = read_config_file(config_path)
    elif CONFIG_ENV_VAR in os.environ:  # Environment
        document = read_config_file(os.environ[CONFIG_ENV_VAR])
    if "fixture" not in document and FIXTURE_ENV_VAR in os.environ:
        document["fixture"] = os.environ[FIXTURE_ENV_VAR]

    config = parse_config(document)
    if overrides:
        config = apply_overrides(config, overrides)
    if config.experiment is not Experiment.VERIFY:
        _reject_unknown("params", config.params, EXPERIMENT_PARAMS[config.experiment])

    cap = _threads_cap()
    if cap is not None and config.threads > cap:
        config = replace(config, threads=cap)
    return config


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Command-line flags take priority over the file."""
    values = {key: value for key, value in overrides.items() if value is not None}
    if "grid" in values and isinstance(values["grid"], str):
        values["grid"] = GridSpec.parse(values["grid"])
    if "output_format" in values and not isinstance(values["output_format"], OutputFormat):
        values["output_format"] = OutputFormat(values["output_format"])
    if "experiment" in values and not isinstance(values["experiment"], Experiment):
        values["experiment"] = Experiment(values["experiment"])
    try:
        return replace(config, **values)
    except TypeError as e:
        raise InvalidConfigException(f"{e.__class__}: {e}")
