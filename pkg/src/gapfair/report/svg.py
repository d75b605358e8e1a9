"""Hand-written SVG bar charts of per-class changes (no plotting dependency)."""

from __future__ import annotations

import numpy as np

from ..metrics import ComparisonReport

IMPROVE = "#1f4e9c"
NEUTRAL = "#b8b8b8"
AXIS = "#444444"
TEXT = "#222222"

ROW_H = 16
BAR_H = 11
LABEL_W = 150
PANEL_W = 260
PANEL_GAP = 30
TOP = 46
BOTTOM = 24


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def change_bars(report: ComparisonReport, title: str | None = None) -> str:
    """One panel per group (TPR change, higher is better) plus one for the absolute GAP change
    (lower is better). Each class gets a horizontal bar; improvements are drawn in blue.
    """
    names = report.class_names
    order = sorted(range(len(names)), key=lambda i: names[i])
    dtpr = report.delta_tpr
    dgap = report.delta_gap
    panels = [(f"TPR {g}", dtpr[:, j], +1) for j, g in enumerate(report.before.group_names)]
    panels.append(("GAP", dgap, -1))

    width = LABEL_W + len(panels) * (PANEL_W + PANEL_GAP)
    height = TOP + ROW_H * len(order) + BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="Helvetica, Arial, sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13" fill="{TEXT}">'
        f"{_esc(title or f'Change after {report.method}')}</text>",
    ]
    for k, i in enumerate(order):
        y = TOP + k * ROW_H + BAR_H - 1
        out.append(f'<text x="{LABEL_W - 6}" y="{y}" text-anchor="end" fill="{TEXT}">{_esc(names[i])}</text>')

    for p, (label, values, good_sign) in enumerate(panels):
        x0 = LABEL_W + p * (PANEL_W + PANEL_GAP)
        finite = np.abs(values[np.isfinite(values)])
        scale = float(finite.max()) if finite.size and finite.max() > 0 else 1.0
        half = PANEL_W / 2
        cx = x0 + half
        kind = "gap" if good_sign < 0 else "tpr"
        out.append(f'<text x="{cx:.1f}" y="{TOP - 12}" text-anchor="middle" fill="{TEXT}">{_esc(label)} change</text>')
        out.append(
            f'<line x1="{cx:.1f}" y1="{TOP - 4}" x2="{cx:.1f}" y2="{TOP + ROW_H * len(order)}" stroke="{AXIS}"/>'
        )
        for k, i in enumerate(order):
            v = float(values[i])
            y = TOP + k * ROW_H
            if not np.isfinite(v):
                out.append(
                    f'<text x="{cx + 4:.1f}" y="{y + BAR_H - 1}" fill="{NEUTRAL}" '
                    f'data-class="{_esc(names[i])}">n/a</text>'
                )
                continue
            improved = v * good_sign > 0
            length = abs(v) / scale * (half - 4)
            x = cx if v >= 0 else cx - length
            status = "improve" if improved else "worsen" if v != 0 else "flat"
            out.append(
                f'<rect class="bar {kind} {status}" x="{x:.2f}" y="{y}" width="{length:.2f}" height="{BAR_H}" '
                f'fill="{IMPROVE if improved else NEUTRAL}" data-class="{_esc(names[i])}" '
                f'data-panel="{_esc(label)}" data-delta="{_fmt(v)}"/>'
            )
        out.append(
            f'<text x="{x0 + 2}" y="{height - 8}" fill="{AXIS}">-{_fmt(scale)}</text>'
            f'<text x="{x0 + PANEL_W - 2}" y="{height - 8}" text-anchor="end" fill="{AXIS}">+{_fmt(scale)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
