"""Run reports: per-check results, CSV tables and the JSON summary."""

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from curvelab.exceptions import CurveLabError

logger = logging.getLogger(__name__)

CHECK_COLUMNS = ("name", "status", "value", "tolerance", "expected_fail")


@dataclass
class CheckResult:
    name: str
    status: str
    value: float
    tolerance: float
    runtime: float = 0.0
    expected_fail: bool = False
    detail: str = ""

    @property
    def counts_as_failure(self) -> bool:
        return self.status == "fail" and not self.expected_fail


@dataclass
class RunReport:
    command: str
    scenario: dict[str, Any]
    checks: list[CheckResult] = field(default_factory=list)
    artifacts: list[str] = field(default_factory=list)
    expected_fail: frozenset[str] = frozenset()

    def add(
        self,
        name: str,
        value: float,
        tolerance: float,
        passed: bool,
        runtime: float = 0.0,
        detail: str = "",
    ) -> CheckResult:
        if any(c.name == name for c in self.checks):
            raise ValueError(f"Check {name} recorded twice")
        xfail = name in self.expected_fail
        status = "pass" if passed else "fail"
        if xfail and passed:
            logger.warning("Check %s passed although it is expected to fail", name)
        result = CheckResult(name, status, float(value), float(tolerance), runtime, xfail, detail)
        level = logging.INFO if passed or xfail else logging.ERROR
        logger.log(level, "%-28s %s value=%.3e tol=%.1e", name, status, value, tolerance)
        self.checks.append(result)
        return result

    def skip(self, name: str, detail: str = "") -> CheckResult:
        result = CheckResult(name, "skip", math.nan, math.nan, 0.0, name in self.expected_fail, detail)
        self.checks.append(result)
        return result

    def run(
        self,
        name: str,
        fn: Callable[[], tuple[float, bool]],
        tolerance: float,
    ) -> CheckResult:
        """Time ``fn`` and record its (value, passed); library errors count as failures."""
        start = time.perf_counter()
        try:
            value, passed = fn()
        except CurveLabError as e:
            logger.error("Check %s raised", name, exc_info=name not in self.expected_fail)
            return self.add(name, math.nan, tolerance, False, time.perf_counter() - start, str(e))
        return self.add(name, value, tolerance, passed, time.perf_counter() - start)

    @property
    def exit_code(self) -> int:
        return 1 if any(c.counts_as_failure for c in self.checks) else 0

    def summary(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "scenario": self.scenario,
            "checks": [asdict(c) for c in self.checks],
            "artifacts": self.artifacts,
            "exit_code": self.exit_code,
        }

    def write(self, out_dir: Path) -> None:
        out_dir.mkdir(parents=True, exist_ok=True)
        rows = [{k: getattr(c, k) for k in CHECK_COLUMNS} for c in self.checks]
        self.artifacts.append(str(write_csv(out_dir / "checks.csv", CHECK_COLUMNS, rows)))
        summary_path = out_dir / "summary.json"
        self.artifacts.append(str(summary_path))
        with open(summary_path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, default=_json_default)


def _json_default(value: Any) -> Any:
    if isinstance(value, (set, frozenset, tuple)):
        return list(value)
    return str(value)


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict[str, Any]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])
    logger.debug("Wrote %s (%d rows)", path, len(rows))
    return path
