"""Seeded generators for the Cylinder-Bell-Funnel and triangular-waveform datasets.

Formulas are written with 1-based time indices ``i = 1..128``; the stored
arrays are 0-based, so sample ``i`` lives at array position ``i - 1``.

All randomness comes from ``numpy.random.Generator`` with the PCG64 bit
generator (``numpy.random.default_rng(seed)``).  Output is bit-for-bit
reproducible for a fixed numpy version; ports to other languages should only
expect statistical agreement.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SIGNAL_LENGTH = 128
CBF_CLASSES = ("cylinder", "bell", "funnel")
TRIANGLE_CLASSES = ("class1", "class2", "class3")
GENERATORS = ("cbf", "triangle")

# class c mixes triangles (first, second) with weights (u, 1 - u)
TRIANGLE_PAIRS = ((0, 1), (0, 2), (1, 2))
TRIANGLE_APICES = (43, 64, 85)


class MalformedDatasetError(ValueError):
    """Raised when a dataset file violates the CSV schema or dataset invariants."""


@dataclass
class LabeledDataset:
    """``N`` signals of equal length ``d`` with integer labels in ``1..K``."""

    signals: np.ndarray
    labels: np.ndarray
    n_classes: int
    seed: int | None = None
    generator_id: str | None = None
    class_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.signals = np.asarray(self.signals, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.signals.ndim != 2:
            raise ValueError("signals must be a 2-D array (N, d)")
        if self.signals.shape[1] < 2:
            raise ValueError("signal length must be at least 2")
        if self.labels.shape != (self.signals.shape[0],):
            raise ValueError("labels and signals must have equal count")
        if self.labels.size and (self.labels.min() < 1 or self.labels.max() > self.n_classes):
            raise ValueError(f"labels must lie in 1..{self.n_classes}")
        if not np.all(np.isfinite(self.signals)):
            raise ValueError("signals must be finite")

    @property
    def n_signals(self) -> int:
        return self.signals.shape[0]

    @property
    def length(self) -> int:
        return self.signals.shape[1]

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(self.signals[index], self.labels[index], self.n_classes,
                              self.seed, self.generator_id, self.class_names)


def _check_n(n_per_class):
    if int(n_per_class) != n_per_class or n_per_class < 1:
        raise ValueError(f"n_per_class must be a positive integer, got {n_per_class!r}")
    return int(n_per_class)


def _time_index(d=SIGNAL_LENGTH):
    return np.arange(1, d + 1, dtype=float)


def cbf_signal(label, a, b, eta=0.0, noise=None, d=SIGNAL_LENGTH):
    """Single CBF waveform for fixed onset ``a`` and end ``b`` (1-based, inclusive).

    With ``eta=0`` and ``noise=None`` this is the noiseless prototype.
    """
    i = _time_index(d)
    support = ((i >= a) & (i <= b)).astype(float)
    amp = 6.0 + eta
    if label == 1:
        x = amp * support
    elif label == 2:
        x = amp * support * (i - a) / (b - a)
    elif label == 3:
        x = amp * support * (b - i) / (b - a)
    else:
        raise ValueError(f"CBF label must be 1, 2 or 3, got {label!r}")
    if noise is not None:
        x = x + noise
    return x


def triangle_basis(d=SIGNAL_LENGTH):
    """The three fixed triangles ``h_1, h_2, h_3`` as rows of a ``(3, d)`` array."""
    i = _time_index(d)
    return np.stack([np.maximum(6.0 - np.abs(i - c) / 7.0, 0.0) for c in TRIANGLE_APICES])


def triangle_signal(label, u, noise=None, d=SIGNAL_LENGTH):
    """Class ``label`` waveform ``u*h_p + (1-u)*h_q (+ noise)``."""
    if label not in (1, 2, 3):
        raise ValueError(f"triangle label must be 1, 2 or 3, got {label!r}")
    h = triangle_basis(d)
    first, second = TRIANGLE_PAIRS[label - 1]
    x = u * h[first] + (1.0 - u) * h[second]
    if noise is not None:
        x = x + noise
    return x


def gen_cbf(n_per_class, seed):
    """Generate ``3 * n_per_class`` CBF signals of length 128.

    Labels are blocked: 1 (cylinder), then 2 (bell), then 3 (funnel).  Per
    signal the draws are ``a ~ U{16..32}``, ``b - a ~ U{32..96}``, ``eta ~ N(0,1)``
    and ``eps ~ N(0, I_128)``, in that order.
    """
    n = _check_n(n_per_class)
    rng = np.random.default_rng(seed)
    signals = np.empty((3 * n, SIGNAL_LENGTH))
    labels = np.repeat(np.arange(1, 4), n)
    for row, label in enumerate(labels):
        a = int(rng.integers(16, 32, endpoint=True))
        b = a + int(rng.integers(32, 96, endpoint=True))
        eta = rng.standard_normal()
        eps = rng.standard_normal(SIGNAL_LENGTH)
        signals[row] = cbf_signal(label, a, b, eta, eps)
    return LabeledDataset(signals, labels, 3, seed, "cbf", CBF_CLASSES)


def gen_triangle(n_per_class, seed):
    """Generate ``3 * n_per_class`` triangular-waveform signals of length 128.

    Per signal the draws are ``u ~ U(0,1)`` then ``eps ~ N(0, I_128)``.
    """
    n = _check_n(n_per_class)
    rng = np.random.default_rng(seed)
    h = triangle_basis()
    signals = np.empty((3 * n, SIGNAL_LENGTH))
    labels = np.repeat(np.arange(1, 4), n)
    for row, label in enumerate(labels):
        u = rng.uniform()
        eps = rng.standard_normal(SIGNAL_LENGTH)
        first, second = TRIANGLE_PAIRS[label - 1]
        signals[row] = u * h[first] + (1.0 - u) * h[second] + eps
    return LabeledDataset(signals, labels, 3, seed, "triangle", TRIANGLE_CLASSES)


def generate(generator_id, n_per_class, seed):
    if generator_id == "cbf":
        return gen_cbf(n_per_class, seed)
    if generator_id == "triangle":
        return gen_triangle(n_per_class, seed)
    raise ValueError(f"unknown generator {generator_id!r}; expected one of {GENERATORS}")


def prototypes(generator_id, d=SIGNAL_LENGTH):
    """Noiseless class prototypes, one row per class.

    CBF uses ``(a, b) = (24, 88)`` (the means of the onset/length draws);
    the triangle problem uses ``u = 1/2``.
    """
    if generator_id == "cbf":
        return np.stack([cbf_signal(k, 24, 88, d=d) for k in (1, 2, 3)])
    if generator_id == "triangle":
        return np.stack([triangle_signal(k, 0.5, d=d) for k in (1, 2, 3)])
    raise ValueError(f"unknown generator {generator_id!r}")


def save_dataset(dataset, path):
    """Write ``dataset`` as CSV: header ``label,s0,...,s{d-1}``, one row per signal.

    Values use 17 significant digits, enough to round-trip a double exactly.
    """
    d = dataset.length
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"s{j}" for j in range(d)])
        for label, row in zip(dataset.labels, dataset.signals):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def read_labeled_csv(path, prefix, n_classes=3):
    """Parse a ``label,<prefix>0,...`` CSV into ``(labels, values)``.

    Errors name the offending row (1-based, header is row 1) and field.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise MalformedDatasetError(f"{path}: empty file")
    header = rows[0]
    width = len(header) - 1
    expected = ["label"] + [f"{prefix}{j}" for j in range(width)]
    if width < 1 or header != expected:
        raise MalformedDatasetError(
            f"{path}: row 1: header must be 'label,{prefix}0,...,{prefix}{{n-1}}'")
    labels = np.empty(len(rows) - 1, dtype=int)
    values = np.empty((len(rows) - 1, width))
    for r, row in enumerate(rows[1:]):
        lineno = r + 2
        if len(row) != width + 1:
            raise MalformedDatasetError(
                f"{path}: row {lineno}: expected {width + 1} fields, got {len(row)}")
        try:
            label = int(row[0])
        except ValueError:
            raise MalformedDatasetError(
                f"{path}: row {lineno}, field 'label': not an integer: {row[0]!r}") from None
        if not 1 <= label <= n_classes:
            raise MalformedDatasetError(
                f"{path}: row {lineno}, field 'label': {label} outside 1..{n_classes}")
        labels[r] = label
        for j, text in enumerate(row[1:]):
            try:
                v = float(text)
            except ValueError:
                v = np.nan
            if not np.isfinite(v):
                raise MalformedDatasetError(
                    f"{path}: row {lineno}, field '{prefix}{j}': bad value {text!r}")
            values[r, j] = v
    return labels, values


def load_dataset(path, n_classes=3, generator_id=None, seed=None):
    """Read a dataset written by :func:`save_dataset`."""
    labels, signals = read_labeled_csv(path, "s", n_classes)
    if signals.shape[1] < 2:
        raise MalformedDatasetError(f"{path}: signals must have at least 2 samples")
    names = {"cbf": CBF_CLASSES, "triangle": TRIANGLE_CLASSES}.get(generator_id, ())
    return LabeledDataset(signals, labels, n_classes, seed, generator_id, names)
