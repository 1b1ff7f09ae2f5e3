import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import circular_convolve, conv_subsample, filter_taps, scatter_full, scatter_path
from scatterzo.scattering import (
    FilterBank, ScatteringConfig, ScatteringConfigError, build_filter_bank,
    center_frequencies, circ_conv_subsample, coefficient_index, scatter2, scatter2_fft,
    scatter_batch, scatter_signals, unflatten,
)
from scatterzo.synthgen import gen_cbf

PAPER = ScatteringConfig(d=128, n_filters_1=14, n_filters_2=11, r1=1.5, r2=1.5, ra=8)
SMALL_INT = ScatteringConfig(d=32, n_filters_1=4, n_filters_2=3, r1=2, r2=2, ra=2, J=1)
SMALL_FRAC = ScatteringConfig(d=32, n_filters_1=3, n_filters_2=2, r1=1.5, r2=1.5, ra=2, J=1)


@pytest.fixture(scope="module")
def bank():
    return build_filter_bank(PAPER)


def test_paper_shapes(bank):
    assert bank.layer1.shape == (14, 128)
    assert bank.layer2.shape == (11, 85)
    assert bank.lowpass.shape == (56,)
    assert PAPER.t_out == 7
    assert PAPER.n_coefficients == 1078


def test_bandpass_and_lowpass_dc(bank):
    assert np.all(np.abs(bank.layer1[:, 0]) < 1e-10)
    assert np.all(np.abs(bank.layer2[:, 0]) < 1e-10)
    assert bank.lowpass[0] > 0


@pytest.mark.parametrize("layer", [1, 2])
def test_littlewood_paley(bank, layer):
    lp = bank.littlewood_paley(layer)
    n = PAPER.d if layer == 1 else PAPER.len1
    assert lp.max() <= 1 + 1e-6
    omega = np.abs(2 * np.pi * np.fft.fftfreq(n))
    xi = center_frequencies(n, 14 if layer == 1 else 11, PAPER.xi_max_frac, PAPER.min_cycles)
    band = (omega >= xi.min()) & (omega <= xi.max())
    assert band.sum() > 0
    assert lp[band].min() >= 0.5


def test_config_rejects_empty_output():
    with pytest.raises(ScatteringConfigError):
        ScatteringConfig(d=16, r1=2, r2=2, ra=8)
    with pytest.raises(ScatteringConfigError):
        ScatteringConfig(r1=0.5)


def test_identity_filter():
    x = np.random.default_rng(0).standard_normal(64)
    np.testing.assert_allclose(circ_conv_subsample(x, np.ones(64), 1), x, atol=1e-10)


@pytest.mark.parametrize("n,r,m", [(128, 1.5, 85), (85, 1.5, 56), (56, 8, 7), (32, 2, 16)])
def test_output_lengths(n, r, m):
    assert circ_conv_subsample(np.ones(n), np.ones(n), r).shape == (m,)


def test_length_mismatch():
    with pytest.raises(ValueError):
        circ_conv_subsample(np.ones(10), np.ones(9), 1)


def test_sinusoid_gain(bank):
    n = 128
    k0 = 9
    i = np.arange(n)
    x = np.cos(2 * np.pi * k0 * i / n + 0.3)
    psi = bank.layer1[5]
    y_direct = circular_convolve(x, filter_taps(psi)).real
    y = circ_conv_subsample(x, psi, 1)
    np.testing.assert_allclose(y, y_direct, atol=1e-10)
    # a real even filter scales a cosine by its response at that bin
    np.testing.assert_allclose(y, psi[k0] * x, atol=1e-10)


@pytest.mark.parametrize("r", [1, 1.5, 2, 3, 2.5])
def test_conv_subsample_matches_oracle(r):
    rng = np.random.default_rng(int(r * 10))
    n = 30
    x = rng.standard_normal(n)
    filt = np.exp(-0.5 * (2 * np.fft.fftfreq(n) * 4) ** 2) * (1 + 0.1 * np.cos(np.arange(n)))
    filt = 0.5 * (filt + np.roll(filt[::-1], 1))  # real and even
    np.testing.assert_allclose(circ_conv_subsample(x, filt, r), conv_subsample(x, filt, r),
                               rtol=1e-10, atol=1e-12)


def test_coefficient_count(bank):
    x = gen_cbf(1, seed=0).signals[0]
    s = scatter2(x, bank)
    assert s.shape == (1078,)
    assert np.all(s >= 0)


def test_zero_signal(bank):
    assert np.all(scatter2(np.zeros(128), bank) == 0)


def test_sign_invariance_exact(bank):
    x = np.random.default_rng(3).standard_normal(128)
    assert np.array_equal(scatter2(x, bank), scatter2(-x, bank))


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=0.0, max_value=1e3), st.integers(0, 2**32 - 1))
def test_positive_homogeneity(a, seed):
    bank = build_filter_bank(SMALL_FRAC)
    x = np.random.default_rng(seed).standard_normal(32)
    s = scatter2(x, bank)
    np.testing.assert_allclose(scatter2(a * x, bank), a * s, rtol=1e-10, atol=1e-300)


def test_fft_route_matches_operator_route(bank):
    X = gen_cbf(2, seed=4).signals
    np.testing.assert_allclose(scatter2_fft(X, bank), scatter_signals(X, bank),
                               rtol=1e-10, atol=1e-12)


def test_single_path_matches_naive_oracle():
    bank = build_filter_bank(SMALL_FRAC)
    x = np.random.default_rng(9).standard_normal(32)
    s = unflatten(scatter2(x, bank), SMALL_FRAC)
    ref = scatter_path(x, bank, 2, 1)
    np.testing.assert_allclose(s[2, 1], ref, rtol=1e-8, atol=1e-12)


def test_integer_rate_pipeline_matches_oracle():
    bank = build_filter_bank(SMALL_INT)
    rng = np.random.default_rng(21)
    for _ in range(5):
        x = rng.standard_normal(32)
        np.testing.assert_allclose(scatter2(x, bank), scatter_full(x, bank), rtol=1e-8, atol=1e-12)


def test_coefficient_index_layout():
    x = np.random.default_rng(1).standard_normal(32)
    bank = build_filter_bank(SMALL_FRAC)
    s = scatter2(x, bank)
    cube = unflatten(s, SMALL_FRAC)
    assert s[coefficient_index(SMALL_FRAC, 1, 1, 3)] == cube[1, 1, 3]


def test_batch_equals_individual(bank):
    ds = gen_cbf(1, seed=2)
    F = scatter_batch(ds, bank)
    for i in range(3):
        # single-row and multi-row BLAS calls may round differently in the last ulp
        np.testing.assert_allclose(F[i], scatter2(ds.signals[i], bank), rtol=1e-12, atol=0)


def test_batch_row_permutation(bank):
    ds = gen_cbf(2, seed=2)
    perm = np.array([4, 0, 5, 2, 1, 3])
    F = scatter_batch(ds, bank)
    assert np.array_equal(scatter_batch(ds.subset(perm), bank), F[perm])


def test_batch_length_mismatch(bank):
    with pytest.raises(ValueError):
        scatter_signals(np.zeros((2, 100)), bank)


def test_cbf_feature_matrix_shape(bank):
    ds = gen_cbf(100, seed=0)
    assert scatter_batch(ds, bank).shape == (300, 1078)


def test_near_shift_invariance(bank):
    ds = gen_cbf(34, seed=8)
    X = ds.signals[:100]
    S = scatter_signals(X, bank)
    S_shift = scatter_signals(np.roll(X, 1, axis=1), bank)
    rel_s = np.linalg.norm(S_shift - S, axis=1) / np.linalg.norm(S, axis=1)
    rel_x = np.linalg.norm(np.roll(X, 1, axis=1) - X, axis=1) / np.linalg.norm(X, axis=1)
    assert np.mean(rel_s < rel_x) >= 0.95


def test_json_roundtrip(bank):
    back = FilterBank.from_json(bank.to_json())
    assert back.config == bank.config
    assert np.array_equal(back.layer1, bank.layer1)
    x = np.random.default_rng(0).standard_normal(128)
    assert np.array_equal(scatter2(x, back), scatter2(x, bank))
