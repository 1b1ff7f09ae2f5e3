"""Acceptance criteria 1-10, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary ends
with one PASS/FAIL line per criterion.  The two full experiments take a few
minutes each.
"""
import dataclasses
import json
import time

import numpy as np
import pytest

from conftest import record_criterion
from oracles import scatter_full
from scatterzo import experiment, mlr, zoopt
from scatterzo.scattering import ScatteringConfig, build_filter_bank, scatter2, scatter_signals
from scatterzo.synthgen import gen_cbf

pytestmark = pytest.mark.slow


def _run(name, out):
    config = dataclasses.replace(experiment.shipped_config(name), output_dir=str(out))
    start = time.perf_counter()
    report = experiment.run_experiment(config)
    return config, report, time.perf_counter() - start


@pytest.fixture(scope="module")
def cbf_run(tmp_path_factory):
    return _run("cbf", tmp_path_factory.mktemp("cbf"))


@pytest.fixture(scope="module")
def triangle_run(tmp_path_factory):
    return _run("triangle", tmp_path_factory.mktemp("triangle"))


def test_1_shape_and_runtime():
    bank = build_filter_bank(ScatteringConfig())
    signals = gen_cbf(100, seed=7).signals
    scatter_signals(signals[:10], bank)  # warm-up
    start = time.perf_counter()
    out = scatter_signals(signals, bank)
    per_signal = (time.perf_counter() - start) / len(signals)
    single = scatter2(signals[0], bank)
    ok = out.shape == (300, 1078) and single.shape == (1078,) and per_signal < 0.05
    record_criterion(1, ok, f"{single.size} coefficients, {1e3 * per_signal:.2f} ms/signal")
    assert ok


def test_2_cbf_accuracy(cbf_run):
    config, report, seconds = cbf_run
    ok = report["n_test"] == 3000 and report["test_accuracy"] >= 0.95 and seconds < 600
    record_criterion(2, ok, f"accuracy {report['test_accuracy']:.4f} on {report['n_test']}, "
                            f"{seconds:.0f} s")
    assert ok


def test_3_triangle_accuracy(triangle_run):
    config, report, seconds = triangle_run
    ok = (config.n_test_per_class == 1000 and 0.80 <= report["test_accuracy"] <= 0.95
          and seconds < 600)
    record_criterion(3, ok, f"accuracy {report['test_accuracy']:.4f}, {seconds:.0f} s")
    assert ok


@pytest.mark.parametrize("which", ["cbf", "triangle"])
def test_4_extraction_self_consistency(which, cbf_run, triangle_run):
    _, report, _ = {"cbf": cbf_run, "triangle": triangle_run}[which]
    p = report["extracted_target_probability"]
    argmax = report["extracted_argmax"]
    ok = argmax == [1, 2, 3] and min(p) >= 0.9
    record_criterion(4, ok, f"{which}: p_k {np.round(p, 3).tolist()}, argmax {argmax}")
    assert ok


def test_5_cbf_localization(cbf_run):
    _, report, _ = cbf_run
    loc = report["localization"]
    cyl, bell, funnel = loc["per_class"]
    ok = bool(loc["pass"])
    record_criterion(5, ok, f"bell {bell['single_window_mass']:.2f}, funnel "
                            f"{funnel['single_window_mass']:.2f}, cylinder two-window "
                            f"{cyl['two_window_mass']:.2f} (min share {cyl['two_window_min_share']:.2f})")
    assert ok


def test_6_integer_rate_oracle():
    config = ScatteringConfig(d=32, n_filters_1=4, n_filters_2=3, r1=1, r2=2, ra=4, J=1)
    bank = build_filter_bank(config)
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(50):
        x = rng.standard_normal(32)
        fast, ref = scatter2(x, bank), scatter_full(x, bank)
        worst = max(worst, np.max(np.abs(fast - ref)) / np.max(np.abs(ref)))
    ok = worst <= 1e-8
    record_criterion(6, ok, f"max relative deviation {worst:.2e} over 50 signals")
    assert ok


def _fd_gradient_error(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((15, 4))
    y = rng.integers(1, 4, 15)
    a, B = rng.standard_normal(3), rng.standard_normal((3, 4))
    _, ga, gB = mlr.nll_and_grad(a, B, X, y)
    h, worst = 1e-6, 0.0
    for idx in np.ndindex(B.shape):
        up, down = B.copy(), B.copy()
        up[idx] += h
        down[idx] -= h
        fd = (mlr.nll_and_grad(a, up, X, y)[0] - mlr.nll_and_grad(a, down, X, y)[0]) / (2 * h)
        worst = max(worst, abs(fd - gB[idx]) / max(abs(gB[idx]), 1e-3))
    return worst


def test_7_lasso_kkt_and_gradient(cbf_run, triangle_run):
    kkt = {name: run[1]["kkt_residual"] for name, run in
           (("cbf", cbf_run), ("triangle", triangle_run))}
    limit = 10 * experiment.shipped_config("cbf").fit.tol
    fd = max(_fd_gradient_error(s) for s in range(5))
    ok = all(v <= limit for v in kkt.values()) and fd <= 1e-5
    record_criterion(7, ok, f"KKT residual cbf {kkt['cbf']:.2e}, triangle {kkt['triangle']:.2e} "
                            f"(limit {limit:g}); FD gradient rel err {fd:.1e}")
    assert ok


def test_8_de_sanity(cbf_run, triangle_run):
    config = zoopt.DeConfig(pop_size=40, max_evals=20_000, seed=0)
    start = np.random.default_rng(1).uniform(-5, 5, (40, 8))
    res = zoopt.differential_evolution(lambda X: np.sum(X ** 2, axis=1),
                                       -5 * np.ones(8), 5 * np.ones(8), start, config)
    monotone = all(cbf_run[1]["history_monotone"]) and all(triangle_run[1]["history_monotone"])
    ok = res.best_value < 1e-6 and res.evals_used <= 20_000 and monotone \
        and np.all(np.diff(res.history) <= 0)
    record_criterion(8, ok, f"sphere best {res.best_value:.1e} in {res.evals_used} evals; "
                            f"all histories non-increasing: {monotone}")
    assert ok


def test_9_numerics():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((20, 128))
    c = zoopt.dct_forward(x)
    dct_err = max(np.max(np.abs(zoopt.dct_inverse(c) - x)),
                  np.max(np.abs(np.linalg.norm(c, axis=1) - np.linalg.norm(x, axis=1))))
    model = mlr.MlrModel(rng.standard_normal(3) * 50, rng.standard_normal((3, 10)) * 50, 0.0,
                         np.zeros(10), np.ones(10))
    P = mlr.predict_proba(model, rng.standard_normal((200, 10)) * 10)
    simplex_err = np.max(np.abs(P.sum(axis=1) - 1))
    in_range = bool(np.all((P >= 0) & (P <= 1)))
    d = 1024
    power = np.zeros(d // 2 + 1)
    for _ in range(200):
        power += np.abs(np.fft.rfft(zoopt.pink_noise(d, rng))) ** 2
    f = np.arange(1, d // 2)
    slope = np.polyfit(np.log(f), np.log(power[1:d // 2]), 1)[0]
    ok = dct_err <= 1e-10 and simplex_err <= 1e-12 and in_range and abs(slope + 1) <= 0.3
    record_criterion(9, ok, f"DCT {dct_err:.1e}, simplex {simplex_err:.1e}, pink slope {slope:.3f}")
    assert ok


def test_10_determinism(cbf_run, tmp_path):
    config, report, _ = cbf_run
    again = experiment.run_experiment(dataclasses.replace(config, output_dir=str(tmp_path)),
                                      plots=False)
    first, second = experiment.deterministic_fields(report), experiment.deterministic_fields(again)
    differing = sorted(k for k in first if first[k] != second.get(k))
    ok = not differing and json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
    record_criterion(10, ok, "cbf report numeric fields identical on rerun" if ok
                     else f"fields differ: {differing}")
    assert ok


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-v"]))
