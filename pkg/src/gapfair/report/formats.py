"""Serialize comparison reports and run aggregates to json, csv, markdown and svg.

JSON is the canonical form. The CSV is a two-column ``path,value`` flattening of the
JSON tree: ``path`` is the JSON list of keys/indices leading to a leaf and ``value`` the
JSON-encoded leaf, so json -> csv -> json is value-identical for any key.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Mapping

from ..errors import DataError
from ..metrics import ComparisonReport
from ..stats import RunAggregate
from .svg import change_bars

FORMATS = {"json": "json", "csv": "csv", "markdown": "md", "svg_bars": "svg"}

Aggregates = Mapping[str, RunAggregate]


# -- canonical dict form ---------------------------------------------------------------------


def to_document(obj: ComparisonReport | Aggregates, method: str | None = None) -> dict[str, Any]:
    if isinstance(obj, ComparisonReport):
        return {"kind": "comparison", **obj.to_dict()}
    return {
        "kind": "aggregates",
        "method": method or "debiased",
        "metrics": {k: agg.to_dict() for k, agg in obj.items()},
    }


def from_document(doc: dict[str, Any]) -> ComparisonReport | dict[str, RunAggregate]:
    kind = doc.get("kind")
    if kind == "comparison":
        return ComparisonReport.from_dict(doc)
    if kind == "aggregates":
        return {k: RunAggregate.from_dict(v) for k, v in doc["metrics"].items()}
    raise DataError(f"unrecognized report document kind {kind!r}")


def dumps_json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


# -- csv flattening -------------------------------------------------------------------------


def _flatten(node: Any, path: list, out: list[tuple[str, str]]) -> None:
    if isinstance(node, dict) and node:
        for k in sorted(node):
            _flatten(node[k], path + [k], out)
    elif isinstance(node, list) and node:
        for i, v in enumerate(node):
            _flatten(v, path + [i], out)
    else:
        out.append((json.dumps(path), json.dumps(node, allow_nan=False)))


def _insert(root: dict, path: list, value: Any) -> None:
    node: Any = root
    for key, nxt in zip(path, path[1:] + [None]):
        child = value if nxt is None else ([] if isinstance(nxt, int) else {})
        if isinstance(node, list):
            while len(node) <= key:
                node.append(None)
            if node[key] is None:
                node[key] = child
            node = node[key]
        else:
            node = node.setdefault(key, child)


def to_csv(doc: dict[str, Any]) -> str:
    rows: list[tuple[str, str]] = []
    _flatten(doc, [], rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("path", "value"))
    w.writerows(rows)
    return buf.getvalue()


def from_csv(text: str) -> dict[str, Any]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != ["path", "value"]:
        raise DataError("report CSV must start with a 'path,value' header")
    root: dict[str, Any] = {}
    for path, value in reader:
        try:
            keys, parsed = json.loads(path), json.loads(value)
        except json.JSONDecodeError as exc:
            raise DataError(f"report CSV line {reader.line_num}: {exc.msg}") from None
        if not keys:
            raise DataError(f"report CSV line {reader.line_num}: empty path")
        _insert(root, keys, parsed)
    return root


# -- markdown -------------------------------------------------------------------------------


def _n(v: float | None, digits: int = 2) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    return f"{v:.{digits}f}"


def _pct(v: float | None) -> str:
    return "n/a" if v is None else f"{100 * v:.0f}%"


def comparison_markdown(report: ComparisonReport) -> str:
    """Per-class table in the published per-class layout: base-satisfied classes are underlined,
    advanced ones carry a star."""
    groups = report.before.group_names
    head = ["Class"]
    for g in groups:
        head += [f"TPR {g} orig", f"TPR {g} deb"]
    head += ["GAP orig", "GAP deb", "ΔGAP", "Protected"]
    lines = [f"# {report.method}", "", "| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    names = report.class_names
    for i in sorted(range(len(names)), key=lambda k: names[k]):
        v = report.verdicts[i]
        label = names[i]
        if v.base:
            label = f"<u>{label}</u>"
        if v.advanced:
            label += "*"
        cells = [label]
        for j in range(len(groups)):
            cells += [_n(report.before.tpr[i, j]), _n(report.after.tpr[i, j])]
        gb, ga = abs(report.before.gap[i]), abs(report.after.gap[i])
        prot = groups[v.protected_group] if v.defined else "n/a"
        if v.protected_tie:
            prot += " (tie)"
        cells += [_n(gb), _n(ga), _n(report.delta_gap[i]), prot]
        lines.append("| " + " | ".join(cells) + " |")
    s = report.summary()
    lines += [
        "",
        f"- classes compared: {s['classes_compared']} (excluded for missing support: {s['classes_excluded']})",
        f"- base satisfaction: {s['base_count']} ({_pct(s['unweighted_base_rate'])} unweighted, "
        f"{_pct(s['weighted_base_rate'])} weighted)",
        f"- advanced satisfaction: {s['advanced_count']} ({_pct(s['unweighted_advanced_rate'])} unweighted, "
        f"{_pct(s['weighted_advanced_rate'])} weighted)",
        f"- worsened GAP: {s['worsened_count']}/{s['classes_compared']} ({_pct(s['worsened_gap_fraction'])})",
        f"- GAP RMS: {_n(s['gap_rms_before'])} -> {_n(s['gap_rms_after'])}",
        f"- accuracy: {_n(s['accuracy_before'])} -> {_n(s['accuracy_after'])}",
    ]
    return "\n".join(lines) + "\n"


def _headline_metrics(aggs: Aggregates) -> list[tuple[str, str]]:
    rows = [("accuracy", "Accuracy"), ("gap_rms", "GAP^RMS")]
    rows += [(k, f"TPR_{k[4:]}") for k in aggs if k.startswith("tpr_")]
    return [(k, label) for k, label in rows if k in aggs]


def _delta_cell(agg: RunAggregate) -> str:
    value = _n(agg.mean)
    if agg.significant:
        value = f"<u>{value}</u>"
    d = agg.delta
    if d is None or math.isnan(d):
        return value
    arrow = "↓" if d < 0 else "↑" if d > 0 else "→"
    return f"{value} {arrow}{abs(d):.2f}"


def headline_markdown(methods: Mapping[str, Aggregates]) -> str:
    """Overall-performance table: metric rows, an Original column taken from the baseline
    runs, then one column per method with the change and significance underline."""
    if not methods:
        raise DataError("no methods to tabulate")
    first = next(iter(methods.values()))
    metrics = _headline_metrics(first)
    lines = [
        "| | Original | " + " | ".join(methods) + " |",
        "|---|---|" + "---|" * len(methods),
    ]
    for key, label in metrics:
        base = first[key].baseline_mean
        cells = [label, _n(base if base is not None else first[key].mean)]
        for aggs in methods.values():
            cells.append(_delta_cell(aggs[key]) if key in aggs else "n/a")
        lines.append("| " + " | ".join(cells) + " |")
    lines += ["", "Means over seeded runs; underlined values differ from the original at p < 0.05 (Welch t-test)."]
    return "\n".join(lines) + "\n"


def aggregates_markdown(aggs: Aggregates, method: str = "debiased") -> str:
    lines = [headline_markdown({method: aggs}), "| metric | mean | std | baseline | Δ | t | p |", "|---|---|---|---|---|---|---|"]
    for key in sorted(aggs):
        a = aggs[key]
        lines.append(
            f"| {key} | {_n(a.mean)} | {_n(a.std)} | {_n(a.baseline_mean)} | {_n(a.delta)} | "
            f"{_n(a.t, 3)} | {_n(a.p, 4)} |"
        )
    return "\n".join(lines) + "\n"


# -- emit -----------------------------------------------------------------------------------


def render(obj: ComparisonReport | Aggregates, fmt: str, method: str | None = None) -> str:
    if fmt not in FORMATS:
        raise DataError(f"unknown output format {fmt!r}; expected one of {sorted(FORMATS)}")
    if fmt == "json":
        return dumps_json(to_document(obj, method))
    if fmt == "csv":
        return to_csv(to_document(obj, method))
    if isinstance(obj, ComparisonReport):
        return comparison_markdown(obj) if fmt == "markdown" else change_bars(obj)
    if fmt == "markdown":
        return aggregates_markdown(obj, method or "debiased")
    raise DataError("svg_bars output needs a comparison report")


def emit(obj: ComparisonReport | Aggregates, fmt: str, path: str | Path, method: str | None = None) -> Path:
    """Render ``obj`` and write it to ``path``; identical input gives byte-identical files."""
    text = render(obj, fmt, method)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from None
    return path


def emit_all(obj: ComparisonReport | Aggregates, directory: str | Path, stem: str, method: str | None = None) -> list[Path]:
    formats = ["json", "csv", "markdown"] + (["svg_bars"] if isinstance(obj, ComparisonReport) else [])
    return [emit(obj, f, Path(directory) / f"{stem}.{FORMATS[f]}", method) for f in formats]


def load_document(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from None
    if path.suffix == ".csv":
        return from_csv(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON ({exc.msg})") from None
