"""End-to-end experiment: data, scattering, Lasso-MLR, extraction, evaluation.

Every stage reads its inputs from and writes its outputs to one directory.
``manifest.json`` in that directory records the config hash and a SHA-256 per
artifact; stages refuse inputs whose hash does not match.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mlr, synthgen, zoopt
from .scattering import (FilterBank, ScatteringConfig, build_filter_bank, scatter_batch,
                         scatter_signals)

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
LOCALIZATION_WIDTH = 48
LOCALIZATION_MASS = 0.8
CYLINDER_MIN_SHARE = 0.25
EXTRACTION_MIN_PROB = 0.9


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


class StageError(RuntimeError):
    """A pipeline stage failed or found bad inputs (CLI exit code 3)."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class DeSettings:
    """DE settings as stored in a config file.

    Box bounds are derived from the training set (``bounds_factor`` times the
    largest absolute DCT coefficient per slot), so they are not listed here.
    """

    pop_size: int | None = None
    F: float = 0.8
    CR: float = 0.9
    max_evals: int = 200_000
    init: str = "pink"
    init_scale: float = 1.0
    bounds_factor: float = 10.0
    stall_generations: int = 50
    stall_tol: float = 1e-8

    def __post_init__(self):
        if self.bounds_factor <= 0:
            raise ValueError("bounds_factor must be positive")
        self.de_config(0, 1.0)

    def de_config(self, seed, bounds):
        return zoopt.DeConfig(self.pop_size, self.F, self.CR, self.max_evals, seed, self.init,
                              bounds, self.init_scale, self.stall_generations, self.stall_tol)


@dataclass
class ExperimentConfig:
    dataset: str = "cbf"
    n_train_per_class: int = 100
    n_test_per_class: int = 1000
    scattering: ScatteringConfig = field(default_factory=ScatteringConfig)
    fit: mlr.FitConfig = field(default_factory=mlr.FitConfig)
    de: DeSettings = field(default_factory=DeSettings)
    mu: float = 0.01
    nu: float = 0.01
    output_dir: str = "runs/experiment"
    master_seed: int = 0

    def __post_init__(self):
        if self.dataset not in synthgen.GENERATORS:
            raise ValueError(f"dataset must be one of {synthgen.GENERATORS}")
        for name in ("n_train_per_class", "n_test_per_class"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.mu < 0 or self.nu < 0:
            raise ValueError("mu and nu must be non-negative")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ValueError("master_seed must be a non-negative integer")
        if self.scattering.d != synthgen.SIGNAL_LENGTH:
            raise ValueError(f"scattering.d must be {synthgen.SIGNAL_LENGTH}")

    # seeds for each random stage, derived from the master seed
    @property
    def train_seed(self):
        return self.master_seed

    @property
    def test_seed(self):
        return self.master_seed + 1

    @property
    def fit_seed(self):
        return self.master_seed + 2

    @property
    def de_seed(self):
        return 1000 * (self.master_seed + 3)

    def to_dict(self):
        return dataclasses.asdict(self)

    def hash(self):
        """SHA-256 of the config with ``output_dir`` removed."""
        data = self.to_dict()
        data.pop("output_dir")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()


_NESTED = {"scattering": ScatteringConfig, "fit": mlr.FitConfig, "de": DeSettings}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field")
    kwargs = {}
    for key, value in data.items():
        if cls is ExperimentConfig and key in _NESTED:
            value = _build(_NESTED[key], value, f"{where}.{key}")
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        field_hint = next((k for k in kwargs if k in str(exc)), None)
        loc = f"{where}.{field_hint}" if field_hint else where
        raise ConfigError(f"{loc}: {exc}") from None


def config_from_dict(data):
    return _build(ExperimentConfig, data, "config")


def load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)


def shipped_config(name):
    """One of the bundled configs: ``"cbf"`` or ``"triangle"``."""
    from importlib.resources import files
    return config_from_dict(json.loads(files("scatterzo").joinpath(f"configs/{name}.json").read_text()))


# --- artifact bookkeeping -------------------------------------------------

def sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class Workspace:
    """Output directory plus its manifest of artifact hashes."""

    MANIFEST = "manifest.json"

    def __init__(self, config, out=None):
        self.config = config
        self.root = Path(out or config.output_dir)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / self.MANIFEST
        if self.manifest_path.exists():
            self.manifest = json.loads(self.manifest_path.read_text())
            if self.manifest.get("config_hash") != config.hash():
                logger.info("config changed; starting a fresh manifest in %s", self.root)
                self.manifest = self._fresh()
        else:
            self.manifest = self._fresh()

    def _fresh(self):
        return {"config_hash": self.config.hash(), "artifacts": {}, "timing_seconds": {}}

    def path(self, name):
        return self.root / name

    def record(self, *names):
        for name in names:
            self.manifest["artifacts"][name] = sha256_file(self.path(name))
        self._save()

    def record_time(self, stage, seconds):
        self.manifest["timing_seconds"][stage] = seconds
        self._save()

    def _save(self):
        self.manifest_path.write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")

    def require(self, stage, *names):
        """Check that each input exists and matches its recorded hash."""
        for name in names:
            p = self.path(name)
            if not p.exists():
                raise StageError(stage, f"missing input {p}; run the producing stage first")
            expected = self.manifest["artifacts"].get(name)
            if expected is None:
                raise StageError(stage, f"{name} was not produced under this config "
                                        f"(hash {self.config.hash()[:12]})")
            actual = sha256_file(p)
            if actual != expected:
                raise StageError(stage, f"hash mismatch for {name}: manifest {expected[:12]}, "
                                        f"file {actual[:12]}; refusing to use a modified artifact")


def _write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _read_json(path):
    return json.loads(Path(path).read_text())


def save_features(features, labels, path):
    """Feature CSV with header ``label,f0,...,f{p-1}``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"f{j}" for j in range(features.shape[1])])
        for label, row in zip(labels, features):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def load_features(path, n_classes=3):
    labels, features = synthgen.read_labeled_csv(path, "f", n_classes)
    return features, labels


# --- stages ----------------------------------------------------------------

def _timed(stage):
    def wrap(fn):
        def run(ws):
            start = time.perf_counter()
            try:
                result = fn(ws)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc
            ws.record_time(stage, round(time.perf_counter() - start, 3))
            return result
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


@_timed("gen")
def stage_gen(ws):
    """Write ``train.csv`` and ``test.csv``."""
    c = ws.config
    train = synthgen.generate(c.dataset, c.n_train_per_class, c.train_seed)
    test = synthgen.generate(c.dataset, c.n_test_per_class, c.test_seed)
    synthgen.save_dataset(train, ws.path("train.csv"))
    synthgen.save_dataset(test, ws.path("test.csv"))
    ws.record("train.csv", "test.csv")


def _load_split(ws, name):
    return synthgen.load_dataset(ws.path(name), generator_id=ws.config.dataset)


@_timed("scatter")
def stage_scatter(ws):
    """Write ``filterbank.json`` and the two feature CSVs."""
    ws.require("scatter", "train.csv", "test.csv")
    bank = build_filter_bank(ws.config.scattering)
    ws.path("filterbank.json").write_text(bank.to_json())
    for split in ("train", "test"):
        ds = _load_split(ws, f"{split}.csv")
        save_features(scatter_batch(ds, bank), ds.labels, ws.path(f"features_{split}.csv"))
    ws.record("filterbank.json", "features_train.csv", "features_test.csv")


@_timed("train")
def stage_train(ws):
    """Fit the Lasso-MLR model on the training features; write ``model.json``."""
    ws.require("train", "features_train.csv")
    features, labels = load_features(ws.path("features_train.csv"))
    fit_config = dataclasses.replace(ws.config.fit, seed=ws.config.fit_seed)
    model = mlr.fit(features, labels, fit_config, n_classes=3)
    model.scattering_config = ws.config.scattering.to_dict()
    data = model.to_dict()
    data["path"] = model.path
    data["kkt_residual"] = mlr.kkt_check(model, features, labels)
    data["train_accuracy"] = mlr.accuracy(model, features, labels)
    _write_json(ws.path("model.json"), data)
    ws.record("model.json")


def _load_bank_and_model(ws, stage):
    ws.require(stage, "filterbank.json", "model.json")
    bank = FilterBank.from_json(ws.path("filterbank.json").read_text())
    model = mlr.MlrModel.from_dict(_read_json(ws.path("model.json")))
    return bank, model


def zorun_name(k):
    return f"zorun_class{k}.json"


@_timed("extract")
def stage_extract(ws):
    """One DE run per class; writes ``zorun_class{k}.json`` and ``extracted.csv``."""
    bank, model = _load_bank_and_model(ws, "extract")
    ws.require("extract", "train.csv")
    train = _load_split(ws, "train.csv")
    c = ws.config
    bounds = zoopt.dct_bounds(train.signals, c.de.bounds_factor)
    config = c.de.de_config(c.de_seed, bounds)
    runs = zoopt.extract_all_classes(model, bank, config, c.mu, c.nu)
    names = []
    for run in runs:
        data = run.to_dict()
        data["probabilities"] = run.probabilities().tolist()
        data["spec"] = {"model": "model.json", "model_sha256": ws.manifest["artifacts"]["model.json"],
                        "filterbank": "filterbank.json",
                        "filterbank_sha256": ws.manifest["artifacts"]["filterbank.json"]}
        name = zorun_name(run.target_class)
        _write_json(ws.path(name), data)
        names.append(name)
    extracted = synthgen.LabeledDataset(np.stack([r.best_x for r in runs]),
                                        np.arange(1, model.n_classes + 1), model.n_classes)
    synthgen.save_dataset(extracted, ws.path("extracted.csv"))
    ws.record(*names, "extracted.csv")


def two_window_concentration(x, width=LOCALIZATION_WIDTH):
    """Best pair of disjoint ``width``-sample windows by joint L1 mass.

    Returns ``(joint_share, smaller_share)`` as fractions of ``sum |x|``.
    """
    a = np.abs(np.asarray(x, dtype=float))
    total = a.sum()
    if total == 0 or 2 * width > a.size:
        return 0.0, 0.0
    w = np.convolve(a, np.ones(width), mode="valid") / total
    best = (0.0, 0.0)
    for i in range(w.size):
        later = w[i + width:]
        if later.size == 0:
            break
        j = int(np.argmax(later))
        joint = w[i] + later[j]
        if joint > best[0]:
            best = (float(joint), float(min(w[i], later[j])))
    return best


def localization_metrics(dataset, runs_x):
    """Window-mass diagnostics for the extracted signals (CBF interpretation)."""
    out = {"window_width": LOCALIZATION_WIDTH, "threshold": LOCALIZATION_MASS, "per_class": []}
    for k, x in enumerate(runs_x, start=1):
        single = zoopt.mass_concentration(x, LOCALIZATION_WIDTH)
        joint, smaller = two_window_concentration(x)
        out["per_class"].append({"class": k, "single_window_mass": single,
                                 "two_window_mass": joint, "two_window_min_share": smaller})
    if dataset == "cbf":
        cyl, bell, funnel = out["per_class"]
        out["bell_pass"] = bell["single_window_mass"] >= LOCALIZATION_MASS
        out["funnel_pass"] = funnel["single_window_mass"] >= LOCALIZATION_MASS
        out["cylinder_pass"] = (cyl["two_window_mass"] >= LOCALIZATION_MASS
                                and cyl["two_window_min_share"] >= CYLINDER_MIN_SHARE)
        out["pass"] = bool(out["bell_pass"] and out["funnel_pass"] and out["cylinder_pass"])
    return out


@_timed("eval")
def stage_eval(ws):
    """Score the model and the extracted signals; write ``report.json``/``report.txt``."""
    bank, model = _load_bank_and_model(ws, "eval")
    names = [zorun_name(k) for k in range(1, model.n_classes + 1)]
    ws.require("eval", "features_test.csv", "test.csv", *names)
    features, labels = load_features(ws.path("features_test.csv"))
    model_data = _read_json(ws.path("model.json"))
    runs = [_read_json(ws.path(n)) for n in names]
    extracted = [np.asarray(r["best_x"]) for r in runs]
    probs = [mlr.predict_proba(model, scatter_signals(x, bank)) for x in extracted]
    test = _load_split(ws, "test.csv")
    c = ws.config
    tol = c.fit.tol
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "dataset": c.dataset,
        "config_hash": c.hash(),
        "n_train": 3 * c.n_train_per_class,
        "n_test": 3 * c.n_test_per_class,
        "n_features": model.n_features,
        "test_accuracy": mlr.accuracy(model, features, labels),
        "train_accuracy": model_data["train_accuracy"],
        "lambda": model.lam,
        "beta_nonzero": model.nonzero_counts().tolist(),
        "kkt_residual": model_data["kkt_residual"],
        "kkt_tolerance": 10 * tol,
        "kkt_pass": model_data["kkt_residual"] <= 10 * tol,
        "best_objective": [r["best_value"] for r in runs],
        "evals_used": [r["evals_used"] for r in runs],
        "extracted_probabilities": [p.tolist() for p in probs],
        "extracted_target_probability": [float(p[k]) for k, p in enumerate(probs)],
        "extracted_argmax": [int(np.argmax(p)) + 1 for p in probs],
        "history_monotone": [bool(np.all(np.diff(r["history"]) <= 0)) for r in runs],
        "template_accuracy": zoopt.template_classify(np.stack(extracted), test),
        "localization": localization_metrics(c.dataset, extracted),
        "mu": c.mu,
        "nu": c.nu,
        "notes": [f"test set uses {c.n_test_per_class} signals per class"],
    }
    report["extraction_pass"] = bool(
        all(a == k for k, a in enumerate(report["extracted_argmax"], start=1))
        and min(report["extracted_target_probability"]) >= EXTRACTION_MIN_PROB)
    # timings come last and are excluded from determinism comparisons
    report["timing_seconds"] = dict(ws.manifest["timing_seconds"])
    _write_json(ws.path("report.json"), report)
    ws.path("report.txt").write_text(format_report(report))
    ws.record("report.json", "report.txt")
    return report


def format_report(report):
    loc = report["localization"]
    lines = [
        f"dataset             {report['dataset']}",
        f"config hash         {report['config_hash'][:16]}",
        f"train / test        {report['n_train']} / {report['n_test']}",
        f"features            {report['n_features']}",
        f"test accuracy       {report['test_accuracy']:.4f}",
        f"lambda              {report['lambda']:.6g}",
        f"nonzero betas       {report['beta_nonzero']}",
        f"KKT residual        {report['kkt_residual']:.3g} (limit {report['kkt_tolerance']:.3g})",
        f"mu, nu              {report['mu']}, {report['nu']}",
        "",
        "class  objective  p_target  argmax  1-window  2-window",
    ]
    for k in range(len(report["best_objective"])):
        pc = loc["per_class"][k]
        lines.append(f"{k + 1:5d}  {report['best_objective'][k]:9.4f}  "
                     f"{report['extracted_target_probability'][k]:8.4f}  "
                     f"{report['extracted_argmax'][k]:6d}  {pc['single_window_mass']:8.3f}  "
                     f"{pc['two_window_mass']:8.3f}")
    lines.append("")
    lines.append(f"extraction self-consistency  {'PASS' if report['extraction_pass'] else 'FAIL'}")
    if "pass" in loc:
        lines.append(f"feature localization         {'PASS' if loc['pass'] else 'FAIL'}")
    lines.append(f"template accuracy            {report['template_accuracy']:.4f}")
    lines.append("")
    lines.append("wall clock (s)  " + ", ".join(f"{k} {v:.1f}"
                                                for k, v in report["timing_seconds"].items()))
    return "\n".join(lines) + "\n"


STAGES = {"gen": stage_gen, "scatter": stage_scatter, "train": stage_train,
          "extract": stage_extract, "eval": stage_eval}


def run_experiment(config, out=None, plots=True):
    """Run every stage in order and return the report dict."""
    ws = Workspace(config, out)
    for name in ("gen", "scatter", "train", "extract"):
        STAGES[name](ws)
    report = stage_eval(ws)
    if plots:
        from .plots import write_plots
        write_plots(ws.root, ws.path("plots"), config.dataset)
    return report


def deterministic_fields(report):
    """The report without wall-clock timings."""
    return {k: v for k, v in report.items() if k != "timing_seconds"}
