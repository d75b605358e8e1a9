"""Published per-class tables: loading and verdict replay.

The shipped fixtures are transcriptions of group-wise TPR tables for five
interventions (two groups: male = index 0, female = index 1). Replaying one feeds its
before/after columns through the satisfaction rules and diffs the computed verdicts
against the table's own base/advanced marks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..metrics import ComparisonReport, EvalResult, compare

FIXTURE_COLUMNS = ("class", "tpr_m_orig", "tpr_m_deb", "tpr_f_orig", "tpr_f_deb", "gap_orig", "gap_deb", "base", "advanced")
SHIPPED = ("eo", "decoupled", "cda", "inlp", "cda_inlp")
GROUPS = ("male", "female")


@dataclass(frozen=True)
class PublishedRow:
    class_name: str
    tpr_m_orig: float
    tpr_m_deb: float
    tpr_f_orig: float
    tpr_f_deb: float
    gap_orig: float
    gap_deb: float
    base: bool
    advanced: bool


@dataclass(frozen=True)
class PublishedTable:
    method: str
    rows: tuple[PublishedRow, ...]

    @property
    def class_names(self) -> tuple[str, ...]:
        return tuple(r.class_name for r in self.rows)


def _parse_bool(text: str, where: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no", ""):
        return False
    raise DataError(f"{where}: expected a boolean, got {text!r}")


def load_fixture(path: str | Path, method: str | None = None) -> PublishedTable:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such fixture")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty fixture")
        missing = set(FIXTURE_COLUMNS) - set(reader.fieldnames)
        if missing:
            raise DataError(f"{path}: missing column(s) {sorted(missing)}")
        rows = []
        for rec in reader:
            where = f"{path}:{reader.line_num}"
            vals = {}
            for col in FIXTURE_COLUMNS[1:7]:
                cell = (rec.get(col) or "").strip()
                if not cell:
                    raise DataError(f"{where}: missing cell {col!r}")
                try:
                    vals[col] = float(cell)
                except ValueError:
                    raise DataError(f"{where}: {col}={cell!r} is not a number") from None
            if vals["gap_orig"] < 0 or vals["gap_deb"] < 0:
                raise DataError(f"{where}: published gaps are unsigned")
            name = (rec.get("class") or "").strip()
            if not name:
                raise DataError(f"{where}: missing class name")
            rows.append(
                PublishedRow(
                    name,
                    **vals,
                    base=_parse_bool(rec.get("base") or "", where),
                    advanced=_parse_bool(rec.get("advanced") or "", where),
                )
            )
    if not rows:
        raise DataError(f"{path}: fixture has no rows")
    return PublishedTable(method or path.stem, tuple(rows))


def shipped_fixture_path(name: str) -> Path:
    if name not in SHIPPED:
        raise DataError(f"unknown fixture {name!r}; shipped fixtures: {', '.join(SHIPPED)}")
    return Path(str(resources.files("gapfair") / "data" / "fixtures" / f"{name}.csv"))


def shipped_fixture(name: str) -> PublishedTable:
    return load_fixture(shipped_fixture_path(name), name)


def table_results(table: PublishedTable) -> tuple[EvalResult, EvalResult]:
    """Before/after results; unsigned table gaps get the sign of male minus female TPR."""
    rows = table.rows
    before_tpr = np.array([[r.tpr_m_orig, r.tpr_f_orig] for r in rows])
    after_tpr = np.array([[r.tpr_m_deb, r.tpr_f_deb] for r in rows])

    def signed(gaps, tpr):
        return np.where(tpr[:, 0] >= tpr[:, 1], 1.0, -1.0) * np.asarray(gaps)

    before = EvalResult.from_rates(before_tpr, table.class_names, GROUPS, gap=signed([r.gap_orig for r in rows], before_tpr))
    after = EvalResult.from_rates(after_tpr, table.class_names, GROUPS, gap=signed([r.gap_deb for r in rows], after_tpr))
    return before, after


@dataclass(frozen=True)
class VerdictDiff:
    class_name: str
    field: str
    published: bool
    computed: bool

    def __str__(self) -> str:
        return f"{self.class_name}: {self.field} published={self.published} computed={self.computed}"


@dataclass(frozen=True, eq=False)
class ReplayResult:
    table: PublishedTable
    report: ComparisonReport
    diffs: tuple[VerdictDiff, ...]

    @property
    def gap_rms_before(self) -> float:
        return self.report.before.gap_rms

    @property
    def gap_rms_after(self) -> float:
        return self.report.after.gap_rms

    @property
    def matches(self) -> bool:
        return not self.diffs


def replay_published_table(
    table: PublishedTable, epsilon_gap: float = 0.0, epsilon_harm: float = 0.0, populations=None
) -> ReplayResult:
    before, after = table_results(table)
    report = compare(before, after, populations, epsilon_gap, epsilon_harm, method=table.method)
    diffs = []
    for row, v in zip(table.rows, report.verdicts):
        if v.base != row.base:
            diffs.append(VerdictDiff(row.class_name, "base", row.base, v.base))
        if v.advanced != row.advanced:
            diffs.append(VerdictDiff(row.class_name, "advanced", row.advanced, v.advanced))
    return ReplayResult(table, report, tuple(diffs))
