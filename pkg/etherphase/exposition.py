"""
Report rendering: CSV with `#`-prefixed header lines, or JSON lines with sorted keys.
"""
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

from etherphase.checks import CheckReport
from etherphase.exceptions import InvalidConfigException
from etherphase.utils import OutputFormat

LINE_SEPARATOR = "\n"
FIELD_SEPARATOR = ","
NAN_MARKER = "nan"
FIELD_CHARACTERS_TO_ESCAPE = {
    '"': '""',  # " -> ""
    "\n": "\\n",  # newline -> \n (escaped)
}
COMMENT_CHARACTERS_TO_ESCAPE = {
    "\n": "\\n",
}

Row = Mapping[str, Any]

REPORT_COLUMNS = (
    "identity",
    "fixture",
    "status",
    "samples",
    "max_residual",
    "tolerance",
    "failures",
    "message",
    "wall_time",
)

REPORT_DOCUMENTATION = (
    "identity: id of the checked identity (see etherphase describe)",
    "status: pass | fail | expected-fail | unexpected-pass | error",
    "max_residual: largest residual over the samples; tolerance: pass threshold",
    "failures: samples whose solver raised or returned non-finite values",
    "wall_time: seconds, the only field that varies between identical runs",
)


@dataclass
class Table:
    columns: Sequence[str]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    comments: Sequence[str] = ()

    def append(self, row: Row) -> None:
        unknown = set(row) - set(self.columns)
        if unknown:
            raise ValueError(f"unknown columns {sorted(unknown)}")
        self.rows.append(dict(row))


def _escape(value: str, table: Mapping[str, str]) -> str:
    for original, replacement in table.items():
        value = value.replace(original, replacement)
    return value


def format_value(value: Any) -> str:
    """CSV text of one field; floats keep full precision so reruns are byte-identical."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else NAN_MARKER
    text = str(value)
    if any(c in text for c in (FIELD_SEPARATOR, '"', "\n")):
        return f'"{_escape(text, FIELD_CHARACTERS_TO_ESCAPE)}"'
    return text


def generate_csv(table: Table) -> str:
    lines = [f"# {_escape(comment, COMMENT_CHARACTERS_TO_ESCAPE)}" for comment in table.comments]
    lines.append(FIELD_SEPARATOR.join(table.columns))
    for row in table.rows:
        lines.append(FIELD_SEPARATOR.join(format_value(row.get(c)) for c in table.columns))
    return LINE_SEPARATOR.join(lines) + LINE_SEPARATOR


def _json_value(value: Any) -> Any:
    # JSON has no NaN; failed points carry null plus a reason
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    if hasattr(value, "tolist"):
        return _json_value(value.tolist())
    if hasattr(value, "value") and isinstance(value.value, str):
        return value.value
    return value


def generate_jsonl(table: Table) -> str:
    lines = (
        json.dumps({c: _json_value(row.get(c)) for c in table.columns}, sort_keys=True)
        for row in table.rows
    )
    return "".join(line + LINE_SEPARATOR for line in lines)


def render(table: Table, output_format: OutputFormat = OutputFormat.CSV) -> str:
    if output_format is OutputFormat.JSONL:
        return generate_jsonl(table)
    return generate_csv(table)


def report_table(report: CheckReport, comments: Iterable[str] = ()) -> Table:
    header = [f"fixture {report.fixture}, seed {report.seed}", *REPORT_DOCUMENTATION, *comments]
    table = Table(REPORT_COLUMNS, comments=header)
    for record in report.records:
        table.append(
            {
                "identity": record.identity,
                "fixture": record.fixture,
                "status": str(record.status),
                "samples": record.samples,
                "max_residual": record.max_residual,
                "tolerance": record.tolerance,
                "failures": record.failures,
                "message": record.message,
                "wall_time": record.wall_time,
            }
        )
    return table


def write_output(text: str, path: Optional[str] = None) -> None:
    """Writes to `path`, or to stdout when no path is given."""
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    except OSError as e:
        raise InvalidConfigException(f"cannot write {path}: {e}")
