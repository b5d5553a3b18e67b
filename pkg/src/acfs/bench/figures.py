"""Static SVG figures written directly (no plotting dependency)."""

import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..stats import summarize
from .experiment import read_results

WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=70, right=20, top=40, bottom=60)


def box_stats(values):
    """Median/quartiles (shared with :func:`summarize`) plus 1.5 IQR whiskers and outliers."""
    v = np.sort(np.asarray(values, dtype=float))
    s = summarize(v)
    lo_fence, hi_fence = s.q25 - 1.5 * s.iqr, s.q75 + 1.5 * s.iqr
    inside = v[(v >= lo_fence) & (v <= hi_fence)]
    return {"median": s.median, "q25": s.q25, "q75": s.q75,
            "whisker_lo": float(inside.min()), "whisker_hi": float(inside.max()),
            "outliers": [float(x) for x in v[(v < lo_fence) | (v > hi_fence)]]}


def log_ticks(lo, hi):
    """Tick values for a log axis covering ``[lo, hi]``, strictly increasing."""
    if lo <= 0 or hi <= 0:
        raise ValueError("log axis needs positive values")
    ticks = []
    for e in range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1):
        for m in (1, 2, 5):
            t = m * 10.0**e
            if lo <= t <= hi:
                ticks.append(t)
    if len(ticks) < 2:
        ticks = sorted({lo, hi})
    return ticks


class _LogAxis:
    def __init__(self, lo, hi):
        pad = 0.05 * (math.log10(hi) - math.log10(lo) or 1.0)
        self.a, self.b = math.log10(lo) - pad, math.log10(hi) + pad
        self.top, self.bottom = MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def __call__(self, v):
        frac = (math.log10(v) - self.a) / (self.b - self.a)
        return self.bottom - frac * (self.bottom - self.top)


def _frame(title, ylabel, axis, ticks):
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
           f'<text x="16" y="{HEIGHT / 2}" transform="rotate(-90 16 {HEIGHT / 2})" '
           f'text-anchor="middle">{escape(ylabel)}</text>',
           f'<line x1="{MARGIN["left"]}" y1="{axis.top}" x2="{MARGIN["left"]}" y2="{axis.bottom}" '
           'stroke="black"/>']
    for t in ticks:
        y = axis(t)
        out.append(f'<line x1="{MARGIN["left"] - 5}" y1="{y:.2f}" x2="{WIDTH - MARGIN["right"]}" '
                   f'y2="{y:.2f}" stroke="#ddd"/>')
        out.append(f'<text class="tick" x="{MARGIN["left"] - 8}" y="{y + 4:.2f}" '
                   f'text-anchor="end">{t:g}</text>')
    return out


def boxplot_svg(groups, title, ylabel="oracle J (log scale)"):
    """SVG text of one boxplot panel; ``groups`` maps label -> values."""
    labels = list(groups)
    stats = [box_stats(groups[k]) for k in labels]
    allv = np.concatenate([np.asarray(groups[k], dtype=float) for k in labels])
    lo, hi = float(allv.min()), float(allv.max())
    if lo == hi:
        lo, hi = lo / 1.1, hi * 1.1
    axis = _LogAxis(lo, hi)
    out = _frame(title, ylabel, axis, log_ticks(lo, hi))
    slot = (WIDTH - MARGIN["left"] - MARGIN["right"]) / max(len(labels), 1)
    for i, (label, s) in enumerate(zip(labels, stats)):
        cx = MARGIN["left"] + slot * (i + 0.5)
        w = slot * 0.5
        out.append(f'<line x1="{cx:.2f}" y1="{axis(s["whisker_lo"]):.2f}" x2="{cx:.2f}" '
                   f'y2="{axis(s["whisker_hi"]):.2f}" stroke="black"/>')
        out.append(f'<rect class="box" x="{cx - w / 2:.2f}" y="{axis(s["q75"]):.2f}" width="{w:.2f}" '
                   f'height="{axis(s["q25"]) - axis(s["q75"]):.2f}" fill="#9ecae1" stroke="black" '
                   f'data-q25="{s["q25"]!r}" data-median="{s["median"]!r}" data-q75="{s["q75"]!r}"/>')
        out.append(f'<line x1="{cx - w / 2:.2f}" y1="{axis(s["median"]):.2f}" x2="{cx + w / 2:.2f}" '
                   f'y2="{axis(s["median"]):.2f}" stroke="black" stroke-width="2"/>')
        for o in s["outliers"]:
            out.append(f'<circle cx="{cx:.2f}" cy="{axis(o):.2f}" r="2.5" fill="none" stroke="black"/>')
        out.append(f'<text x="{cx:.2f}" y="{HEIGHT - MARGIN["bottom"] + 18}" '
                   f'text-anchor="middle">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def interval_svg(points, title, ylabel="oracle J (log scale)"):
    """Median dots with inter-quartile bars; ``points`` is a list of (label, q25, median, q75)."""
    lo = min(p[1] for p in points)
    hi = max(p[3] for p in points)
    if lo == hi:
        lo, hi = lo / 1.1, hi * 1.1
    axis = _LogAxis(lo, hi)
    out = _frame(title, ylabel, axis, log_ticks(lo, hi))
    slot = (WIDTH - MARGIN["left"] - MARGIN["right"]) / len(points)
    for i, (label, q25, med, q75) in enumerate(points):
        cx = MARGIN["left"] + slot * (i + 0.5)
        out.append(f'<line x1="{cx:.2f}" y1="{axis(q25):.2f}" x2="{cx:.2f}" y2="{axis(q75):.2f}" '
                   'stroke="black" stroke-width="2"/>')
        out.append(f'<circle cx="{cx:.2f}" cy="{axis(med):.2f}" r="4" fill="#3182bd"/>')
        out.append(f'<text x="{cx:.2f}" y="{HEIGHT - MARGIN["bottom"] + 18}" '
                   f'text-anchor="middle">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_figures(results_path, out_dir, sensitivity=None):
    """One boxplot per (dgp, lambda) plus sensitivity panels; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    blocks = {}
    for r in read_results(results_path):
        if r["status"] == "ok" and r["J"] > 0:
            blocks.setdefault((r["dgp"], r["lambda"]), {}).setdefault(r["method"], []).append(r["J"])
    for (dgp, lam), groups in sorted(blocks.items()):
        path = out_dir / f"box_{dgp.lower()}_lambda{lam:.2f}.svg"
        path.write_text(boxplot_svg(groups, f"{dgp}, lambda = {lam:.2f}"))
        written.append(path)
    if sensitivity:
        by_param = {}
        for row in sensitivity:
            by_param.setdefault(row["parameter"], []).append(
                (row["value"], row["J_q25"], row["J_med"], row["J_q75"]))
        for name, pts in by_param.items():
            path = out_dir / f"sensitivity_{name}.svg"
            path.write_text(interval_svg(pts, f"sensitivity: {name}"))
            written.append(path)
    return written
