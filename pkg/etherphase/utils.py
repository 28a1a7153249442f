from enum import Enum


class Experiment(str, Enum):
    VERIFY = "verify"
    PHASE = "phase"
    PRODUCT = "product"
    CHORD = "chord"
    GROUPOID = "groupoid"
    TORSION = "torsion"
    HJ = "hj"

    def __str__(self) -> str:
        return self.value


class OutputFormat(str, Enum):
    CSV = "csv"
    JSONL = "jsonl"

    def __str__(self) -> str:
        return self.value


class CheckStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    EXPECTED_FAIL = "expected-fail"
    UNEXPECTED_PASS = "unexpected-pass"
    ERROR = "error"

    def __str__(self) -> str:
        return self.value

    @property
    def ok(self) -> bool:
        return self in (CheckStatus.PASS, CheckStatus.EXPECTED_FAIL)
