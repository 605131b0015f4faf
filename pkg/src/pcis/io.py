"""Result files: per-state CSV, metadata sidecar, grid CSV, simulation CSV and SVG heatmaps."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .results import PcisResult
from .sim import SimReport


def result_rows(result: PcisResult) -> list[tuple[str, float, int]]:
    members = set(result.states)
    return [(str(x), float(result.probabilities.get(x, 0.0)), int(x in members)) for x in result.candidates]


def write_result_csv(result: PcisResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state_id", "probability", "in_set"])
        for x, p, inside in result_rows(result):
            w.writerow([x, repr(p), inside])


def result_metadata(result: PcisResult, **more) -> dict:
    meta = {
        "epsilon": result.epsilon,
        "N": result.horizon_label,
        "iterations": result.iterations,
        "method": result.method,
        "certified": result.certified,
        "label": "certified" if result.certified else "uncertified",
        "tau_delta": result.tau_delta,
        "trace": list(result.trace),
        "thresholds": [float(t) for t in result.thresholds],
        "set_size": len(result.states),
        "candidates": len(result.candidates),
        "converged": result.converged,
        "diagnostics": list(result.diagnostics),
    }
    meta.update(more)
    return meta


def write_json(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_grid_csv(result: PcisResult, path: str | Path) -> None:
    """One row per cell: bounds, representative, probability and membership."""
    ab = result.extra["abstraction"]
    g = ab.state_grid
    members = set(result.states)
    dims = range(g.dim)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", *[f"lower_{d}" for d in dims], *[f"upper_{d}" for d in dims],
                    *[f"rep_{d}" for d in dims], "probability", "in_set"])
        centers = g.centers
        for i, x in enumerate(ab.cell_states):
            w.writerow([x, *map(repr, g.lower[i].tolist()), *map(repr, g.upper[i].tolist()),
                        *map(repr, centers[i].tolist()), repr(float(result.probabilities.get(x, 0.0))),
                        int(x in members)])


def write_sim_csv(report: SimReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["state", "computed_p", "empirical_p", "ci_halfwidth", "verdict"])
        for r in report.rows:
            w.writerow([r.state, repr(r.computed_p), repr(r.empirical_p), repr(r.ci_halfwidth), r.verdict])


# Perceptual ramp (dark purple -> teal -> yellow) sampled at three stops.
_RAMP = ((0.0, (68, 1, 84)), (0.5, (33, 145, 140)), (1.0, (253, 231, 37)))


def color(p: float) -> str:
    p = min(max(float(p), 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_RAMP, _RAMP[1:]):
        if p <= t1:
            s = (p - t0) / (t1 - t0)
            rgb = [round(a + s * (b - a)) for a, b in zip(c0, c1)]
            return "#{:02x}{:02x}{:02x}".format(*rgb)
    return "#{:02x}{:02x}{:02x}".format(*_RAMP[-1][1])


def heatmap_svg(result: PcisResult, width: int = 480) -> str:
    """Cells filled by probability; cells kept in the set get a dark outline.

    Only 1-D and 2-D grids are drawn.
    """
    ab = result.extra["abstraction"]
    g = ab.state_grid
    if g.dim > 2:
        raise ValueError("heatmaps are drawn for 1-D and 2-D state spaces only")
    lo = g.lower.min(axis=0)
    hi = g.upper.max(axis=0)
    span = hi - lo
    height = 60 if g.dim == 1 else int(round(width * span[1] / span[0]))
    pad = 30
    members = set(result.states)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width + 2 * pad}" height="{height + 2 * pad + 20}">',
        f'<title>{escape(f"epsilon={result.epsilon:g} N={result.horizon_label} {result.method}")}</title>',
    ]
    for i, x in enumerate(ab.cell_states):
        x0 = pad + (g.lower[i, 0] - lo[0]) / span[0] * width
        x1 = pad + (g.upper[i, 0] - lo[0]) / span[0] * width
        if g.dim == 1:
            y0, y1 = pad, pad + height
        else:
            # SVG y grows downwards
            y0 = pad + (hi[1] - g.upper[i, 1]) / span[1] * height
            y1 = pad + (hi[1] - g.lower[i, 1]) / span[1] * height
        p = result.probabilities.get(x, 0.0)
        stroke = ' stroke="#000" stroke-width="0.6"' if x in members else ""
        parts.append(f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{x1 - x0:.3f}" height="{y1 - y0:.3f}" '
                     f'fill="{color(p)}"{stroke}><title>{x}: {p:.6g}</title></rect>')
    parts.append(f'<text x="{pad}" y="{height + 2 * pad + 10}" font-size="12">'
                 f'{lo[0]:g} .. {hi[0]:g}; fill: probability 0 (dark) to 1 (bright); outlined: in set</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
