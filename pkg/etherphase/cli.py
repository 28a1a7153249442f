"""
Command-line driver.

    etherphase verify [--fixture NAME] [--config PATH] [--seed N] [--out PATH] [--format csv|jsonl]
    etherphase compute --experiment phase|product|chord|groupoid|torsion|hj [--grid ...]
    etherphase describe [NAME]

Exit codes: 0 all identities pass, 1 an identity failed, 2 configuration error.
"""
import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from logging import getLogger
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from etherphase.checks import CheckReport, timed
from etherphase.config import RunConfig, load_config
from etherphase.ether import EtherStructure
from etherphase.exceptions import (
    AmbiguityException,
    ComposabilityException,
    ConditioningException,
    DomainException,
    EtherPhaseException,
    InvalidConfigException,
    InvalidFixtureException,
    IterationLimitException,
    NumericException,
    ParameterException,
    StageException,
)
from etherphase.exposition import Table, render, report_table, write_output
from etherphase.fixtures import describe_fixture, fixture_names, load_fixture
from etherphase.geometry import as_point, count_iterations
from etherphase.groupoid import (
    GroupoidElement,
    chord_phase,
    circle,
    hj_residual,
    left_map,
    right_map,
)
from etherphase.phase_maps import (
    dynamic_phase,
    harmonic_oscillator,
    linear_phase,
    normalized_phase,
    translation_map,
)
from etherphase.phase_product import phase_product, triangle_phase
from etherphase.suite import CATALOGUE, oscillator, verify_structure
from etherphase.utils import Experiment, OutputFormat

logger = getLogger(__name__)

EXIT_OK = 0
EXIT_IDENTITY_FAILURE = 1
EXIT_CONFIG_ERROR = 2

CONFIG_ERRORS = (InvalidConfigException, InvalidFixtureException, ParameterException)

# most specific first
REASON_CODES: Tuple[Tuple[type, str], ...] = (
    (AmbiguityException, "ambiguous"),
    (ComposabilityException, "not-composable"),
    (StageException, "stage-failed"),
    (IterationLimitException, "no-convergence"),
    (ConditioningException, "ill-conditioned"),
    (DomainException, "outside-domain"),
    (NumericException, "non-finite"),
    (EtherPhaseException, "error"),
)


def reason_code(error: EtherPhaseException) -> str:
    for kind, code in REASON_CODES:
        if isinstance(error, kind):
            return code
    return "error"


def build_structure(config: RunConfig) -> EtherStructure:
    E = load_fixture(config.fixture, config.fixture_params, config.settings)
    if config.corrupt is not None:
        logger.warning(f"corrupting {E.name}: H scaled by {config.corrupt:g}")
        E = E.scaled(config.corrupt)
    return E


def run_verify(config: RunConfig) -> CheckReport:
    E = build_structure(config)
    logger.info(f"verifying {E.name} with seed {config.seed}")
    return verify_structure(
        E,
        seed=config.seed,
        identities=config.checks,
        multiplier=config.samples,
        tolerance=config.tol_identity,
        threads=config.threads,
    )


# compute experiments

PointValues = Callable[[np.ndarray], Dict[str, float]]


@dataclass(frozen=True)
class ComputeExperiment:
    columns: Tuple[str, ...]
    description: str
    build: Callable[[EtherStructure, RunConfig], PointValues]


def _param_point(
    params: Mapping[str, Any], key: str, default: Sequence[float], dim: int
) -> np.ndarray:
    value = params.get(key, default)
    try:
        point = as_point(value)
    except (TypeError, ValueError):
        raise InvalidConfigException(f"params.{key} must be a list of numbers, got {value!r}")
    if point.size == 2 and dim > 2:
        full = np.zeros(dim)
        full[0], full[dim // 2] = point
        point = full
    if point.size != dim:
        raise InvalidConfigException(f"params.{key} needs {dim} coordinates, got {point.size}")
    return point


def _phase(E: EtherStructure, config: RunConfig) -> PointValues:
    system = oscillator(E)
    return lambda x: {"phase": dynamic_phase(E, system, x, config.time)}


def _product(E: EtherStructure, config: RunConfig) -> PointValues:
    params = config.params
    y = _param_point(params, "y", (1.0, 0.0), E.dim)
    z = _param_point(params, "z", (0.0, 1.0), E.dim)
    phi1 = linear_phase(_param_point(params, "c1", (0.1, 0.0), E.dim))
    phi2 = linear_phase(_param_point(params, "c2", (0.0, 0.1), E.dim))

    def values(x: np.ndarray) -> Dict[str, float]:
        return {
            "triangle": triangle_phase(E, x, y, z),
            "product": phase_product(E, phi2, phi1, x),
        }

    return values


def _chord(E: EtherStructure, config: RunConfig) -> PointValues:
    radius = float(config.params.get("radius", 1.0))
    if not radius > 0:
        raise InvalidConfigException(f"params.radius must be positive, got {radius}")
    curve = circle(radius, _param_point(config.params, "center", (0.0, 0.0), E.dim))
    return lambda x: {"chord": chord_phase(E, curve, x)}


def _groupoid(E: EtherStructure, config: RunConfig) -> PointValues:
    p0 = _param_point(config.params, "p0", (0.1, 0.0), E.dim)

    def values(x: np.ndarray) -> Dict[str, float]:
        m = GroupoidElement(x, p0)
        left, right = left_map(E, m), right_map(E, m)
        row = {f"left_{i}": float(v) for i, v in enumerate(left)}
        row.update({f"right_{i}": float(v) for i, v in enumerate(right)})
        return row

    return values


def _torsion(E: EtherStructure, config: RunConfig) -> PointValues:
    gamma = translation_map(_param_point(config.params, "shift", (0.1, 0.0), E.dim))
    y0 = _param_point(config.params, "y0", (0.0, 0.0), E.dim)
    return lambda x: {"phase": normalized_phase(E, gamma, x, y0)}


def _hj(E: EtherStructure, config: RunConfig) -> PointValues:
    system = harmonic_oscillator() if E.dim == 2 else oscillator(E)

    def phase(w: np.ndarray, s: float) -> float:
        return dynamic_phase(E, system, w, s)

    return lambda x: {"hj_residual": hj_residual(E, system, phase, x, config.time)}


def _groupoid_columns(dim: int) -> Tuple[str, ...]:
    return tuple(f"left_{i}" for i in range(dim)) + tuple(f"right_{i}" for i in range(dim))


EXPERIMENTS: Dict[Experiment, ComputeExperiment] = {
    Experiment.PHASE: ComputeExperiment(
        ("phase",), "dynamic phase of the oscillator at time `time`", _phase
    ),
    Experiment.PRODUCT: ComputeExperiment(
        ("triangle", "product"),
        "triangle phase with params y, z; product of linear phases c2∘c1",
        _product,
    ),
    Experiment.CHORD: ComputeExperiment(
        ("chord",), "chord phase of the circle (params radius, center)", _chord
    ),
    Experiment.GROUPOID: ComputeExperiment((), "left and right images of (x, p0)", _groupoid),
    Experiment.TORSION: ComputeExperiment(
        ("phase",), "normalized phase of the translation by params.shift relative to y0", _torsion
    ),
    Experiment.HJ: ComputeExperiment(
        ("hj_residual",), "Hamilton–Jacobi residual of the dynamic phase at time `time`", _hj
    ),
}


def _evaluate_point(values: PointValues, x: np.ndarray) -> Dict[str, Any]:
    with count_iterations() as iterations:
        try:
            row: Dict[str, Any] = dict(values(x))
        except EtherPhaseException as e:
            logger.debug(f"point {np.round(x, 6).tolist()} failed: {e}")
            return {"iterations": iterations[0], "status": "nan", "reason": reason_code(e)}
    if not all(math.isfinite(v) for v in row.values()):
        return {"iterations": iterations[0], "status": "nan", "reason": "non-finite"}
    row.update(iterations=iterations[0], status="ok", reason="")
    return row


def run_compute(config: RunConfig) -> Table:
    if config.experiment is Experiment.VERIFY:
        raise InvalidConfigException("compute needs an experiment other than 'verify'")
    E = build_structure(config)
    experiment = EXPERIMENTS[config.experiment]
    points = config.grid.points(E.dim)
    for x in (points[0], points[-1]):
        if not E.domain.contains(x):
            raise InvalidConfigException(f"grid point {x.tolist()} outside the domain of {E.name}")
    values = experiment.build(E, config)
    value_columns = experiment.columns or _groupoid_columns(E.dim)
    table = Table(
        ("q", "p", *value_columns, "iterations", "status", "reason"),
        comments=(
            f"experiment {config.experiment}: {experiment.description}",
            f"fixture {E.name}, time {config.time:g}",
            "q, p: grid point in the first (q, p) plane; iterations: Newton iterations spent",
            "status: ok | nan; reason: why a point has no value (ambiguous, no-convergence, ...)",
        ),
    )
    # each work item owns its point; rows are assembled in grid order
    with ThreadPoolExecutor(max_workers=max(1, config.threads)) as executor:
        rows = list(executor.map(lambda x: _evaluate_point(values, x), points))
    half = E.dim // 2
    failed = 0
    for x, row in zip(points, rows):
        if row["status"] != "ok":
            failed += 1
            row.update({column: math.nan for column in value_columns})
        table.append({"q": float(x[0]), "p": float(x[half]), **row})
    if failed:
        logger.warning(f"{failed} of {len(rows)} grid points have no value")
    return table


def describe(name: Optional[str] = None) -> str:
    if name is None:
        lines = ["fixtures:", *(f"  {n}" for n in fixture_names()), "identities:"]
        lines.extend(f"  {check.identity}: {check.description}" for check in CATALOGUE)
        return "\n".join(lines) + "\n"
    return describe_fixture(name)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="etherphase", description="Phase functions of symplectic Ether structures"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--fixture", help="fixture name (default: $ETHERPHASE_FIXTURE)")
        sub.add_argument("--config", help="JSON configuration file (default: $ETHERPHASE_CONFIG)")
        sub.add_argument("--out", help="output path, stdout when omitted")
        sub.add_argument("--format", choices=[f.value for f in OutputFormat])
        sub.add_argument("--seed", type=int)
        sub.add_argument("--threads", type=int)

    verify = commands.add_parser("verify", help="run the identity suite")
    common(verify)
    verify.add_argument("--check", action="append", dest="checks", help="identity id to run")

    compute = commands.add_parser("compute", help="evaluate a quantity on a grid")
    common(compute)
    compute.add_argument(
        "--experiment", choices=[e.value for e in Experiment if e is not Experiment.VERIFY]
    )
    compute.add_argument("--grid", help="qmin:qmax:n,pmin:pmax:n")
    compute.add_argument("--time", type=float)

    describe_parser = commands.add_parser("describe", help="fixture metadata and identity ids")
    describe_parser.add_argument("name", nargs="?")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {
        "fixture": args.fixture,
        "output_path": args.out,
        "output_format": args.format,
        "seed": args.seed,
        "threads": args.threads,
    }
    if args.command == "verify":
        overrides["checks"] = tuple(args.checks) if args.checks else None
    else:
        overrides.update(experiment=args.experiment, grid=args.grid, time=args.time)
    return overrides


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        if args.command == "describe":
            write_output(describe(args.name))
            return EXIT_OK
        config = load_config(args.config, _overrides(args))
        if args.command == "verify":
            with timed() as elapsed:
                report = run_verify(config)
            write_output(
                render(report_table(report), config.output_format), config.output_path
            )
            failed = report.failed()
            logger.info(
                f"{len(report.records) - len(failed)} of {len(report.records)} identities passed"
                f" in {elapsed[0]:.1f}s"
            )
            for record in failed:
                detail = record.message or f"max residual {record.max_residual:.3e}"
                logger.error(f"{record.identity} {record.status}: {detail}")
            return report.exit_code
        table = run_compute(config)
        write_output(render(table, config.output_format), config.output_path)
        return EXIT_OK
    except CONFIG_ERRORS as e:
        logger.error(str(e))
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
