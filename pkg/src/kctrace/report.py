"""Experiment report assembly and emission.

A report bundles result rows with the config snapshot and provenance (seeds
and input-file hashes) needed to reproduce it. Emission writes report.json,
tables.csv, one static SVG chart per sweep-style experiment, and a PCA
scatter CSV for embedding visualization. All outputs are byte-stable for
identical report contents.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .numerics import pca_2d

_CSV_COLUMNS = ("experiment", "variant", "fold", "fraction", "auc")

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class EvalReport:
    name: str
    rows: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    pca_points: list[dict] = field(default_factory=list)

    def summaries(self) -> list[dict]:
        """Mean and population std over repeat keys (fold / seed)."""
        groups: dict[tuple, list[float]] = {}
        for row in self.rows:
            key = (
                row.get("experiment"),
                row.get("variant"),
                row.get("arch"),
                row.get("mode"),
                row.get("fraction"),
            )
            groups.setdefault(key, []).append(float(row["auc"]))
        out = []
        for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
            vals = np.array(groups[key])
            experiment, variant, arch, mode, fraction = key
            out.append(
                {
                    "experiment": experiment,
                    "variant": variant,
                    "arch": arch,
                    "mode": mode,
                    "fraction": fraction,
                    "mean_auc": float(vals.mean()),
                    "std_auc": float(vals.std()),
                    "n_runs": int(vals.size),
                }
            )
        return out

    def to_json(self) -> str:
        doc = {
            "version": 1,
            "name": self.name,
            "config": self.config,
            "provenance": self.provenance,
            "rows": self.rows,
            "summaries": self.summaries(),
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def add_pca_points(
    report: EvalReport,
    vectors: dict[int, np.ndarray],
    labels: dict[int, str] | None = None,
    seed: int = 0,
) -> None:
    """Attach 2-D projections of an embedding table for scatter emission."""
    ids = sorted(vectors)
    if len(ids) < 2:
        return
    coords = pca_2d(np.stack([vectors[i] for i in ids]), seed=seed)
    report.pca_points = [
        {
            "id": qid,
            "x": float(coords[i, 0]),
            "y": float(coords[i, 1]),
            "label": (labels or {}).get(qid, ""),
        }
        for i, qid in enumerate(ids)
    ]


# ---------------------------------------------------------------------------
# SVG rendering (hand-rolled so outputs stay byte-identical across runs)
# ---------------------------------------------------------------------------

def _svg_header(width: int, height: int, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]


def render_line_chart(
    title: str,
    series: list[tuple[str, list[tuple[float, float]]]],
    x_label: str = "fraction",
    y_label: str = "auc",
) -> str:
    if not series or all(not pts for _, pts in series):
        raise InputError("cannot render an empty chart")
    width, height = 640, 400
    left, right, top, bottom = 70, 20, 40, 50
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def px(x: float) -> float:
        return left + (x - x_lo) / (x_hi - x_lo) * (width - left - right)

    def py(y: float) -> float:
        return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom)

    parts = _svg_header(width, height, title)
    parts.append(
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" '
        f'y2="{height - bottom}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        yv = y_lo + frac * (y_hi - y_lo)
        parts.append(
            f'<text x="{px(xv):.1f}" y="{height - bottom + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{xv:.3g}</text>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{py(yv):.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{yv:.3g}</text>'
        )
    parts.append(
        f'<text x="{(left + width - right) // 2}" y="{height - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>'
    )
    parts.append(
        f'<text x="16" y="{(top + height - bottom) // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(top + height - bottom) // 2})">{y_label}</text>'
    )
    for i, (label, pts) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = sorted(pts)
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>'
        )
        for x, y in pts:
            parts.append(
                f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{width - right - 6}" y="{top + 16 * (i + 1)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="12" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_bar_chart(title: str, bars: list[tuple[str, float]], y_label: str = "auc") -> str:
    if not bars:
        raise InputError("cannot render an empty chart")
    width, height = 640, 400
    left, right, top, bottom = 70, 20, 40, 60
    y_hi = max(v for _, v in bars)
    y_lo = min(0.0, min(v for _, v in bars))
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    span = width - left - right
    slot = span / len(bars)

    def py(y: float) -> float:
        return height - bottom - (y - y_lo) / (y_hi - y_lo) * (height - top - bottom)

    parts = _svg_header(width, height, title)
    parts.append(
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" '
        f'y2="{height - bottom}" stroke="black"/>'
    )
    for i, (label, value) in enumerate(bars):
        x = left + i * slot + 0.15 * slot
        w = 0.7 * slot
        y = py(value)
        h = (height - bottom) - y
        color = _PALETTE[i % len(_PALETTE)]
        parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{x + w / 2:.2f}" y="{height - bottom + 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
        parts.append(
            f'<text x="{x + w / 2:.2f}" y="{y - 4:.2f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="10">{value:.3f}</text>'
        )
    parts.append(
        f'<text x="16" y="{(top + height - bottom) // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {(top + height - bottom) // 2})">{y_label}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: EvalReport, out_dir: str) -> list[str]:
    """Write report.json, tables.csv, per-sweep SVGs, and pca_scatter.csv."""
    if not report.rows:
        raise InputError("refusing to emit an empty report")
    os.makedirs(out_dir, exist_ok=True)
    written: list[str] = []

    path = os.path.join(out_dir, "report.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    written.append(path)

    path = os.path.join(out_dir, "tables.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(_CSV_COLUMNS) + "\n")
        for row in report.rows:
            fh.write(",".join(_csv_cell(row.get(col)) for col in _CSV_COLUMNS) + "\n")
    written.append(path)

    # one line chart per experiment that varies a fraction
    sweeps: dict[str, dict[str, list[tuple[float, float]]]] = {}
    for summary in report.summaries():
        if summary["fraction"] is None:
            continue
        exp = summary["experiment"]
        label_bits = [b for b in (summary["arch"], summary["mode"], summary["variant"]) if b]
        label = "/".join(label_bits) if label_bits else exp
        sweeps.setdefault(exp, {}).setdefault(label, []).append(
            (float(summary["fraction"]), summary["mean_auc"])
        )
    for exp in sorted(sweeps):
        series = [(label, pts) for label, pts in sorted(sweeps[exp].items())]
        path = os.path.join(out_dir, f"{exp}.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render_line_chart(f"{report.name}: {exp}", series))
        written.append(path)

    ablation = [
        (s["variant"], s["mean_auc"])
        for s in report.summaries()
        if s["experiment"] == "ablation" and s["variant"]
    ]
    if ablation:
        path = os.path.join(out_dir, "ablation.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render_bar_chart(f"{report.name}: ablation", ablation))
        written.append(path)

    if report.pca_points:
        path = os.path.join(out_dir, "pca_scatter.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("id,x,y,label\n")
            for pt in report.pca_points:
                fh.write(
                    f"{pt['id']},{repr(pt['x'])},{repr(pt['y'])},{pt['label']}\n"
                )
        written.append(path)
    return written
