import numpy as np
import pytest

from scatterzo import synthgen
from scatterzo.synthgen import (
    MalformedDatasetError, cbf_signal, gen_cbf, gen_triangle, load_dataset,
    save_dataset, triangle_basis, triangle_signal,
)


@pytest.mark.parametrize("gen", [gen_cbf, gen_triangle])
def test_shapes_and_label_balance(gen):
    ds = gen(7, seed=3)
    assert ds.signals.shape == (21, 128)
    assert np.array_equal(np.bincount(ds.labels), [0, 7, 7, 7])
    assert np.array_equal(ds.labels[:7], np.ones(7))


@pytest.mark.parametrize("gen", [gen_cbf, gen_triangle])
def test_reproducible_bitwise(gen):
    a, b = gen(5, seed=11), gen(5, seed=11)
    assert a.signals.tobytes() == b.signals.tobytes()
    assert not np.array_equal(a.signals, gen(5, seed=12).signals)


@pytest.mark.parametrize("gen", [gen_cbf, gen_triangle])
def test_rejects_bad_count(gen):
    with pytest.raises(ValueError):
        gen(0, seed=1)


def test_noiseless_cylinder():
    x = cbf_signal(1, 16, 48)
    i = np.arange(1, 129)
    inside = (i >= 16) & (i <= 48)
    assert np.all(x[inside] == 6.0)
    assert np.all(x[~inside] == 0.0)


def test_noiseless_bell_and_funnel_endpoints():
    bell = cbf_signal(2, 16, 48)
    funnel = cbf_signal(3, 16, 48)
    # stored index = i - 1
    assert bell[48 - 1] == 6.0 and bell[16 - 1] == 0.0
    assert funnel[16 - 1] == 6.0 and funnel[48 - 1] == 0.0


@pytest.mark.parametrize("label", [1, 2, 3])
@pytest.mark.parametrize("a,b", [(16, 48), (32, 128), (20, 100)])
def test_cbf_support(label, a, b):
    x = cbf_signal(label, a, b)
    i = np.arange(1, 129)
    assert np.all(x[(i < a) | (i > b)] == 0.0)


def test_cbf_cylinder_plateau_monte_carlo():
    # mean of c(i) over [a, b] is 6 + eta + mean(eps); averages to 6
    means = []
    for seed in range(10_000):
        rng = np.random.default_rng(seed)
        a = int(rng.integers(16, 32, endpoint=True))
        b = a + int(rng.integers(32, 96, endpoint=True))
        x = cbf_signal(1, a, b, rng.standard_normal(), rng.standard_normal(128))
        means.append(x[a - 1:b].mean())
    assert abs(np.mean(means) - 6.0) < 0.1


def test_cbf_draw_ranges():
    ds = gen_cbf(300, seed=5)
    cyl = ds.signals[ds.labels == 1]
    # the first sample is never in the support (a >= 16)
    assert np.allclose(cyl[:, :15].mean(), 0.0, atol=0.05)


def test_triangle_apices_and_support():
    h = triangle_basis()
    assert h[0, 43 - 1] == 6.0
    assert h[1, 64 - 1] == 6.0
    assert h[2, 85 - 1] == 6.0
    assert h[0, 1 - 1] == 0.0
    assert np.array_equal(h[1, 21:], h[0, :-21])


def test_triangle_endpoint_is_first_basis():
    h = triangle_basis()
    assert np.array_equal(triangle_signal(1, 1.0), h[0])
    assert np.array_equal(triangle_signal(3, 0.0), h[2])


@pytest.mark.parametrize("label", [1, 2, 3])
def test_triangle_noiseless_max_bound(label):
    h = triangle_basis()
    pair = synthgen.TRIANGLE_PAIRS[label - 1]
    for u in np.linspace(0, 1, 21):
        x = triangle_signal(label, u)
        # convex combination can never exceed the larger of the two maxima
        assert x.max() <= np.maximum(h[pair[0]], h[pair[1]]).max() + 1e-12
        assert x.min() >= 0.0


def test_dataset_roundtrip(tmp_path):
    ds = gen_cbf(5, seed=7)
    path = tmp_path / "cbf.csv"
    save_dataset(ds, path)
    header = path.read_text().splitlines()[0]
    assert header == "label," + ",".join(f"s{j}" for j in range(128))
    back = load_dataset(path)
    assert np.array_equal(back.signals, ds.signals)
    assert np.array_equal(back.labels, ds.labels)


def test_load_rejects_out_of_range_label(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("label,s0,s1\n1,0.5,0.25\n4,0.0,1.0\n")
    with pytest.raises(MalformedDatasetError, match="row 3"):
        load_dataset(path, n_classes=3)


def test_load_rejects_ragged_rows(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("label,s0,s1,s2\n1,0.5,0.25,1\n2,0.0,1.0\n")
    with pytest.raises(MalformedDatasetError, match="row 3"):
        load_dataset(path)


def test_load_rejects_non_numeric(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text("label,s0,s1\n1,0.5,abc\n")
    with pytest.raises(MalformedDatasetError, match="s1"):
        load_dataset(path)
