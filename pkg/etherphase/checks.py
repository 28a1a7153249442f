"""
Machine-checkable identities. An `IdentityCheck` turns one identity into a residual sampled
at random configurations; running it against a structure produces a `CheckRecord`, and a
`CheckReport` collects the records of a whole verification run.
"""
import math
import re
import time
import zlib
from contextlib import contextmanager
from dataclasses import dataclass, field
from logging import getLogger
from typing import Callable, Generator, Iterable, List, Optional

import numpy as np

from etherphase.ether import EtherStructure
from etherphase.exceptions import EtherPhaseException
from etherphase.registry import CHECKS, Registry
from etherphase.utils import CheckStatus

logger = getLogger(__name__)

identity_re = re.compile(r"[a-z0-9][a-z0-9.]*(-[a-z0-9.]+)+")

# residual of one sampled configuration
CheckRunner = Callable[[EtherStructure, np.random.Generator], float]
Predicate = Callable[[EtherStructure], bool]


def always(E: EtherStructure) -> bool:
    return True


def never(E: EtherStructure) -> bool:
    return False


@contextmanager
def timed() -> Generator[List[float], None, None]:
    """Yields a list that holds the elapsed wall time once the block exits."""
    elapsed: List[float] = []
    start = time.perf_counter()
    try:
        yield elapsed
    finally:
        elapsed.append(time.perf_counter() - start)


@dataclass
class CheckRecord:
    identity: str
    fixture: str
    samples: int
    max_residual: float
    tolerance: float
    status: CheckStatus
    failures: int = 0
    message: str = ""
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return self.status.ok


@dataclass(frozen=True)
class IdentityCheck:
    """
    `runner` returns the residual of one random configuration. `relaxed_tolerance` replaces
    `tolerance` on finite-difference limited structures. When `expected_violation` holds the
    identity must fail; passing is then reported as unexpected. `violation_threshold`, when set,
    is the smallest residual that counts as the expected failure.
    """

    identity: str
    description: str
    runner: CheckRunner
    tolerance: float
    samples: int = 20
    relaxed_tolerance: Optional[float] = None
    applies: Predicate = always
    expected_violation: Predicate = never
    violation_threshold: Optional[Callable[[EtherStructure], float]] = None

    def __post_init__(self) -> None:
        if identity_re.fullmatch(self.identity) is None:
            raise ValueError(f"Invalid identity id: {self.identity}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance of {self.identity} must be positive")

    def tolerance_for(self, E: EtherStructure, override: Optional[float] = None) -> float:
        if override is not None:
            return override
        if E.fd_limited and self.relaxed_tolerance is not None:
            return self.relaxed_tolerance
        return self.tolerance

    def sample_count(self, multiplier: float = 1.0) -> int:
        return max(1, math.ceil(self.samples * multiplier))

    def run(
        self,
        E: EtherStructure,
        seed: int = 0,
        multiplier: float = 1.0,
        tolerance: Optional[float] = None,
    ) -> CheckRecord:
        # one stream per identity: results do not depend on which other checks run
        rng = np.random.default_rng([seed, zlib.crc32(self.identity.encode())])
        count = self.sample_count(multiplier)
        tol = self.tolerance_for(E, tolerance)
        if self.violation_threshold is not None and self.expected_violation(E):
            tol = max(tol, self.violation_threshold(E))
        worst = 0.0
        failures = 0
        message = ""
        with timed() as elapsed:
            for _ in range(count):
                try:
                    residual = float(self.runner(E, rng))
                except EtherPhaseException as e:
                    failures += 1
                    message = message or f"{type(e).__name__}: {e}"
                    logger.debug(f"{self.identity} on {E.name}: {e}")
                    continue
                if not math.isfinite(residual):
                    failures += 1
                    message = message or "non-finite residual"
                    continue
                worst = max(worst, residual)
        status = self._status(E, worst, tol, failures)
        return CheckRecord(
            self.identity, E.name, count, worst, tol, status, failures, message, elapsed[0]
        )

    def _status(self, E: EtherStructure, worst: float, tol: float, failures: int) -> CheckStatus:
        if self.expected_violation(E):
            if failures or worst > tol:
                return CheckStatus.EXPECTED_FAIL
            return CheckStatus.UNEXPECTED_PASS
        if failures:
            return CheckStatus.ERROR
        return CheckStatus.PASS if worst < tol else CheckStatus.FAIL


def register_check(check: IdentityCheck, registry: Registry = CHECKS) -> IdentityCheck:
    registry.register(check.identity, check)
    return check


@dataclass
class CheckReport:
    fixture: str
    seed: int
    records: List[CheckRecord] = field(default_factory=list)

    def extend(self, records: Iterable[CheckRecord]) -> None:
        self.records.extend(records)

    @property
    def passed(self) -> bool:
        return all(record.passed for record in self.records)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def failed(self) -> List[CheckRecord]:
        return [record for record in self.records if not record.passed]
