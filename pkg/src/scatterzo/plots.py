"""Dependency-free SVG figures with CSV siblings.

Each figure has one panel per class.  Time runs ``1..d`` as in the signal
generators.  The CSV next to each SVG holds exactly
the plotted numbers, so any external tool can redraw it.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from . import synthgen
from .mlr import MlrModel

PANEL_W, PANEL_H, MARGIN = 360, 220, 36
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


class _Panel:
    """Maps data coordinates to one panel's pixel box."""

    def __init__(self, x0, y0, xlim, ylim):
        self.x0, self.y0 = x0, y0
        self.xlim = xlim
        lo, hi = ylim
        if hi - lo < 1e-12:
            lo, hi = lo - 1, hi + 1
        self.ylim = (lo, hi)

    def px(self, x):
        a, b = self.xlim
        return self.x0 + MARGIN + (np.asarray(x, float) - a) / (b - a) * (PANEL_W - 2 * MARGIN)

    def py(self, y):
        lo, hi = self.ylim
        return self.y0 + PANEL_H - MARGIN - (np.asarray(y, float) - lo) / (hi - lo) * (PANEL_H - 2 * MARGIN)


def _polyline(panel, x, y, color, width=1.0, dash=None):
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(panel.px(x), panel.py(y)))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline class="series" fill="none" stroke="{color}" stroke-width="{width}"'
            f'{extra} points="{pts}"/>')


def _frame(panel, title):
    x, y = panel.x0 + MARGIN, panel.y0 + MARGIN
    w, h = PANEL_W - 2 * MARGIN, PANEL_H - 2 * MARGIN
    lo, hi = panel.ylim
    parts = [f'<rect x="{x}" y="{y}" width="{w}" height="{h}" fill="none" stroke="#888"/>',
             f'<text x="{x}" y="{y - 8}" font-size="12">{escape(title)}</text>',
             f'<text x="{x - 4}" y="{y + 4}" font-size="9" text-anchor="end">{hi:.3g}</text>',
             f'<text x="{x - 4}" y="{y + h}" font-size="9" text-anchor="end">{lo:.3g}</text>']
    if lo < 0 < hi:
        zy = float(panel.py(0.0))
        parts.append(f'<line x1="{x}" x2="{x + w}" y1="{zy:.2f}" y2="{zy:.2f}" stroke="#ccc"/>')
    return parts


def _svg(body, n_panels):
    width, height = PANEL_W * n_panels, PANEL_H
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            + "\n".join(body) + "\n</svg>\n")


def _ylim(*arrays):
    values = np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(1)
    return float(min(values.min(), 0.0)), float(max(values.max(), 0.0))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _class_titles(dataset_name, K):
    names = {"cbf": synthgen.CBF_CLASSES, "triangle": synthgen.TRIANGLE_CLASSES}.get(dataset_name)
    return [f"class {k + 1}" + (f" ({names[k]})" if names else "") for k in range(K)]


def plot_samples(dataset, out_svg, per_class=5, dataset_name=None):
    """First ``per_class`` waveforms of each class."""
    K = dataset.n_classes
    titles = _class_titles(dataset_name, K)
    body, rows = [], []
    t = np.arange(1, dataset.length + 1)
    chosen = [dataset.signals[dataset.labels == k + 1][:per_class] for k in range(K)]
    ylim = _ylim(*chosen)
    for k, sigs in enumerate(chosen):
        panel = _Panel(k * PANEL_W, 0, (1, dataset.length), ylim)
        body += _frame(panel, titles[k])
        for i, s in enumerate(sigs):
            body.append(_polyline(panel, t, s, COLORS[i % len(COLORS)], 0.8))
            rows += [[k + 1, i, j, repr(float(v))] for j, v in zip(t, s)]
    Path(out_svg).write_text(_svg(body, K))
    _write_csv(Path(out_svg).with_suffix(".csv"), ["class", "sample", "t", "value"], rows)


def plot_betas(model, out_svg, dataset_name=None):
    """Stem plot of each class's coefficient vector; all-zero vectors draw no markers."""
    K, p = model.betas.shape
    titles = _class_titles(dataset_name, K)
    ylim = _ylim(model.betas)
    body, rows = [], []
    for k in range(K):
        panel = _Panel(k * PANEL_W, 0, (0, max(p - 1, 1)), ylim)
        body += _frame(panel, f"{titles[k]}: {np.count_nonzero(model.betas[k])} nonzero")
        zero_y = float(panel.py(0.0))
        for j in np.flatnonzero(model.betas[k]):
            x, y = float(panel.px(j)), float(panel.py(model.betas[k, j]))
            body.append(f'<line class="stem" x1="{x:.2f}" x2="{x:.2f}" y1="{zero_y:.2f}" '
                        f'y2="{y:.2f}" stroke="{COLORS[k % len(COLORS)]}"/>')
            body.append(f'<circle class="marker" cx="{x:.2f}" cy="{y:.2f}" r="2" '
                        f'fill="{COLORS[k % len(COLORS)]}"/>')
        rows += [[k + 1, j, repr(float(v))] for j, v in enumerate(model.betas[k])]
    Path(out_svg).write_text(_svg(body, K))
    _write_csv(Path(out_svg).with_suffix(".csv"), ["class", "index", "beta"], rows)


def plot_extracted(extracted, out_svg, dataset_name=None):
    """Extracted signal per class, max-normalized.

    For the triangle problem each panel also carries the three dashed
    triangle outlines with apices at 43, 64 and 85.
    """
    extracted = np.atleast_2d(extracted)
    K, d = extracted.shape
    peaks = np.max(np.abs(extracted), axis=1, keepdims=True)
    normed = np.divide(extracted, peaks, out=np.zeros_like(extracted), where=peaks > 0)
    titles = _class_titles(dataset_name, K)
    overlays = synthgen.triangle_basis(d) if dataset_name == "triangle" else None
    ylim = (-1.05, 1.05)
    t = np.arange(1, d + 1)
    body, rows = [], []
    for k in range(K):
        panel = _Panel(k * PANEL_W, 0, (1, d), ylim)
        body += _frame(panel, titles[k])
        if overlays is not None:
            for i, h in enumerate(overlays):
                body.append(_polyline(panel, t, h / h.max(), "#999", 0.8, dash="3,2")
                            .replace('class="series"', f'class="overlay h{i + 1}"'))
        body.append(_polyline(panel, t, normed[k], COLORS[k % len(COLORS)], 1.4))
        rows += [[k + 1, j + 1, repr(float(extracted[k, j])), repr(float(normed[k, j]))]
                 for j in range(d)]
    Path(out_svg).write_text(_svg(body, K))
    _write_csv(Path(out_svg).with_suffix(".csv"), ["class", "t", "x", "x_normalized"], rows)


def write_plots(artifact_dir, out_dir, dataset_name=None):
    """Draw the three standard figures from a run directory; returns the SVG paths."""
    artifact_dir, out_dir = Path(artifact_dir), Path(out_dir)
    needed = ["train.csv", "model.json", "extracted.csv"]
    missing = [n for n in needed if not (artifact_dir / n).exists()]
    if missing:
        raise FileNotFoundError(f"missing artifacts in {artifact_dir}: {', '.join(missing)}")
    out_dir.mkdir(parents=True, exist_ok=True)
    train = synthgen.load_dataset(artifact_dir / "train.csv")
    model = MlrModel.from_dict(json.loads((artifact_dir / "model.json").read_text()))
    extracted = synthgen.load_dataset(artifact_dir / "extracted.csv")
    paths = [out_dir / "samples.svg", out_dir / "betas.svg", out_dir / "extracted.svg"]
    plot_samples(train, paths[0], dataset_name=dataset_name)
    plot_betas(model, paths[1], dataset_name=dataset_name)
    plot_extracted(extracted.signals[np.argsort(extracted.labels, kind="stable")], paths[2],
                   dataset_name=dataset_name)
    return paths
