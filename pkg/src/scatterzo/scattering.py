"""Second-order 1-D scattering transform with fractional-rate subsampling.

The transform of a length-``d`` signal ``x`` is

    S[x](l1, l2, t) = | | x (*)_r1 psi1[l1] | (*)_r2 psi2[l2] | (*)_ra phi

where ``(*)_r`` is circular convolution followed by subsampling to
``floor(n / r)`` points.  Integer rates keep every ``r``-th sample.
Fractional rates resample band-limited: the spectrum is truncated to the
lowest ``floor(n / r)`` frequencies (symmetric about DC; for an even target
length the two bins at +/- the new Nyquist are folded into one) and inverse
transformed.  With integer ``r_a`` the averaged output is a plain decimation of
a non-negative signal, so coefficients are non-negative without clamping.

Wavelets are dilated Mexican hats, ``psi_hat(w) = (s w)^2 exp(-(s w)^2 / 2)``,
with centre frequencies ``sqrt(2) / s`` spaced geometrically between
``2 pi min_cycles / n`` and ``xi_max_frac * pi``.  Each layer is normalised so
that its Littlewood-Paley sum peaks at exactly 1.  The averaging filter is a
Gaussian of standard deviation ``2**J`` samples (on the layer-2 output grid).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

# Relative size of the negative ringing tolerated before clamping to zero.
NEGATIVE_TOL = 1e-8
IMAG_TOL = 1e-10
LP_TOL = 1e-6


class ScatteringConfigError(ValueError):
    pass


def subsampled_length(n, r):
    """``floor(n / r)``, robust to ``n / r`` landing a hair below an integer."""
    return int(math.floor(n / r + 1e-9))


@dataclass(frozen=True)
class ScatteringConfig:
    d: int = 128
    n_filters_1: int = 14
    n_filters_2: int = 11
    r1: float = 1.5
    r2: float = 1.5
    ra: float = 8.0
    J: int = 3
    wavelet: str = "mexican_hat"
    xi_max_frac: float = 0.75
    min_cycles: float = 1.0

    def __post_init__(self):
        if self.wavelet != "mexican_hat":
            raise ScatteringConfigError(f"unsupported wavelet {self.wavelet!r}")
        if self.d < 2:
            raise ScatteringConfigError("d must be at least 2")
        if self.n_filters_1 < 1 or self.n_filters_2 < 1:
            raise ScatteringConfigError("filter counts must be >= 1")
        for name in ("r1", "r2", "ra"):
            if not getattr(self, name) >= 1:
                raise ScatteringConfigError(f"{name} must be >= 1")
        if self.J < 0:
            raise ScatteringConfigError("J must be non-negative")
        if not 0 < self.xi_max_frac <= 1:
            raise ScatteringConfigError("xi_max_frac must lie in (0, 1]")
        if self.min_cycles <= 0:
            raise ScatteringConfigError("min_cycles must be positive")
        if self.t_out < 1:
            raise ScatteringConfigError(
                f"output length floor(floor(floor({self.d}/{self.r1})/{self.r2})/{self.ra})"
                f" = {self.t_out} < 1")

    @property
    def len1(self) -> int:
        return subsampled_length(self.d, self.r1)

    @property
    def len2(self) -> int:
        return subsampled_length(self.len1, self.r2)

    @property
    def t_out(self) -> int:
        return subsampled_length(self.len2, self.ra)

    @property
    def n_coefficients(self) -> int:
        return self.n_filters_1 * self.n_filters_2 * self.t_out

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def angular_frequencies(n):
    """Angular frequency of each FFT bin, in radians per sample."""
    return 2 * np.pi * np.fft.fftfreq(n)


def mexican_hat_hat(omega, scale):
    """Fourier profile of the Mexican-hat wavelet dilated by ``scale``."""
    sw = scale * omega
    return sw ** 2 * np.exp(-0.5 * sw ** 2)


def center_frequencies(n, count, xi_max_frac=0.75, min_cycles=1.0):
    xi_max = xi_max_frac * np.pi
    xi_min = min(2 * np.pi * min_cycles / n, xi_max)
    if count == 1:
        return np.array([xi_max])
    return np.geomspace(xi_max, xi_min, count)


def wavelet_layer(n, count, xi_max_frac=0.75, min_cycles=1.0):
    """``count`` Mexican-hat filters on an ``n``-point grid, LP-normalised."""
    omega = np.abs(angular_frequencies(n))
    xi = center_frequencies(n, count, xi_max_frac, min_cycles)
    filters = np.stack([mexican_hat_hat(omega, np.sqrt(2.0) / c) for c in xi])
    lp = np.sum(filters ** 2, axis=0)
    return filters / np.sqrt(lp.max())


def gaussian_lowpass(n, J):
    omega = angular_frequencies(n)
    sigma = 2.0 ** J
    return np.exp(-0.5 * (sigma * omega) ** 2)


def resample_spectrum(X, m):
    """Keep the lowest ``m`` frequencies of the spectrum ``X`` (last axis).

    For even ``m`` the bins at ``+m/2`` and ``-m/2`` are summed into the new
    Nyquist bin, which keeps the result Hermitian when ``X`` is.
    """
    n = X.shape[-1]
    if m > n:
        raise ValueError(f"cannot resample {n} points up to {m}")
    if m == n:
        return X
    h = m // 2
    Y = np.empty(X.shape[:-1] + (m,), dtype=complex)
    if m % 2:
        Y[..., :h + 1] = X[..., :h + 1]
        if h:
            Y[..., h + 1:] = X[..., n - h:]
    else:
        Y[..., :h] = X[..., :h]
        Y[..., h] = X[..., h] + X[..., n - h]
        Y[..., h + 1:] = X[..., n - h + 1:]
    return Y


def _real_part(z, what):
    residue = np.max(np.abs(z.imag), initial=0.0)
    scale = max(1.0, np.max(np.abs(z.real), initial=0.0))
    if residue > IMAG_TOL * scale:
        raise FloatingPointError(f"{what}: imaginary residue {residue:.3g} after inverse FFT")
    return z.real


def is_integer_rate(r):
    return abs(r - round(r)) < 1e-12


def circ_conv_subsample(x, filter_hat, r):
    """Circular convolution with a frequency-domain filter, then subsampling.

    Broadcasts over leading axes of ``x`` and ``filter_hat``; the last axes
    must have equal length ``n``.  Returns ``floor(n / r)`` samples along the
    last axis.
    """
    x = np.asarray(x, dtype=float)
    filter_hat = np.asarray(filter_hat)
    n = x.shape[-1]
    if filter_hat.shape[-1] != n:
        raise ValueError(f"signal length {n} != filter length {filter_hat.shape[-1]}")
    if not r >= 1:
        raise ValueError("subsampling rate must be >= 1")
    m = subsampled_length(n, r)
    spectrum = np.fft.fft(x) * filter_hat
    if is_integer_rate(r):
        y = _real_part(np.fft.ifft(spectrum), "circ_conv_subsample")
        return y[..., ::int(round(r))][..., :m]
    Y = resample_spectrum(spectrum, m)
    return _real_part(np.fft.ifft(Y) * (m / n), "circ_conv_subsample")


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Frequency-domain filters for both layers plus the averaging lowpass.

    ``layer1`` has shape ``(n_filters_1, d)``, ``layer2`` ``(n_filters_2, len1)``
    and ``lowpass`` ``(len2,)``.  The dense real matrices in ``operators`` are
    the same three linear stages applied to the identity; :func:`scatter_batch`
    uses them because BLAS beats batched small FFTs at these sizes.
    """

    config: ScatteringConfig
    layer1: np.ndarray
    layer2: np.ndarray
    lowpass: np.ndarray
    operators: tuple = field(repr=False, default=())

    def __post_init__(self):
        for arr in (self.layer1, self.layer2, self.lowpass):
            arr.setflags(write=False)
        if not self.operators:
            object.__setattr__(self, "operators", _stage_operators(self))

    def littlewood_paley(self, layer):
        filters = self.layer1 if layer == 1 else self.layer2
        return np.sum(np.abs(filters) ** 2, axis=0)

    def to_json(self):
        return json.dumps({
            "config": self.config.to_dict(),
            "layer1": self.layer1.tolist(),
            "layer2": self.layer2.tolist(),
            "lowpass": self.lowpass.tolist(),
        })

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        config = ScatteringConfig.from_dict(data["config"])
        bank = cls(config, np.array(data["layer1"], dtype=float),
                   np.array(data["layer2"], dtype=float),
                   np.array(data["lowpass"], dtype=float))
        _check_bank_shapes(bank)
        return bank


def _check_bank_shapes(bank):
    c = bank.config
    expected = {"layer1": (c.n_filters_1, c.d), "layer2": (c.n_filters_2, c.len1),
                "lowpass": (c.len2,)}
    for name, shape in expected.items():
        if getattr(bank, name).shape != shape:
            raise ScatteringConfigError(
                f"{name} has shape {getattr(bank, name).shape}, expected {shape}")


def _stage_operators(bank):
    c = bank.config
    eye = np.eye(c.d)[:, None, :]
    W1 = circ_conv_subsample(eye, bank.layer1[None], c.r1).reshape(c.d, -1)
    eye = np.eye(c.len1)[:, None, :]
    W2 = circ_conv_subsample(eye, bank.layer2[None], c.r2).reshape(c.len1, -1)
    A = circ_conv_subsample(np.eye(c.len2), bank.lowpass, c.ra)
    ops = tuple(np.ascontiguousarray(op) for op in (W1, W2, A))
    for op in ops:
        op.setflags(write=False)
    return ops


def build_filter_bank(config=None):
    """Build the wavelet and lowpass filters described by ``config``."""
    if config is None:
        config = ScatteringConfig()
    layer1 = wavelet_layer(config.d, config.n_filters_1, config.xi_max_frac, config.min_cycles)
    layer2 = wavelet_layer(config.len1, config.n_filters_2, config.xi_max_frac, config.min_cycles)
    lowpass = gaussian_lowpass(config.len2, config.J)
    return FilterBank(config, layer1, layer2, lowpass)


def _clamp(out):
    peak = np.max(np.abs(out), initial=0.0)
    low = np.min(out, initial=0.0)
    assert low >= -NEGATIVE_TOL * max(peak, 1.0), f"averaging ringing {low:.3g} exceeds tolerance"
    return np.maximum(out, 0.0)


def scatter_signals(signals, bank, chunk=256):
    """Scattering coefficients for an ``(N, d)`` array; returns ``(N, p)``.

    Flat layout is ``(l1, l2, t)`` in C order; see :func:`coefficient_index`.
    """
    X = np.asarray(signals, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    c = bank.config
    if X.shape[1] != c.d:
        raise ValueError(f"signal length {X.shape[1]} != filter bank length {c.d}")
    W1, W2, A = bank.operators
    out = np.empty((X.shape[0], c.n_coefficients))
    for start in range(0, X.shape[0], chunk):
        block = X[start:start + chunk]
        n = block.shape[0]
        u1 = np.abs(block @ W1).reshape(n * c.n_filters_1, c.len1)
        u2 = np.abs(u1 @ W2).reshape(-1, c.len2)
        out[start:start + n] = (u2 @ A).reshape(n, -1)
    out = _clamp(out)
    return out[0] if single else out


def scatter2(x, bank):
    """Scattering vector of a single signal (length ``n_filters_1 * n_filters_2 * t_out``)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("scatter2 expects a 1-D signal")
    return scatter_signals(x, bank)


def scatter2_fft(x, bank):
    """Reference cascade using FFT convolution at every stage (slower, same result)."""
    c = bank.config
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != c.d:
        raise ValueError(f"signal length {x.shape[-1]} != filter bank length {c.d}")
    u1 = np.abs(circ_conv_subsample(x[..., None, :], bank.layer1, c.r1))
    u2 = np.abs(circ_conv_subsample(u1[..., None, :], bank.layer2, c.r2))
    s = circ_conv_subsample(u2, bank.lowpass, c.ra)
    return _clamp(s.reshape(s.shape[:-3] + (-1,)))


def scatter_batch(dataset, bank):
    """Feature matrix for a :class:`~scatterzo.synthgen.LabeledDataset`, row order kept."""
    return scatter_signals(dataset.signals, bank)


def coefficient_index(config, l1, l2, t):
    """Flat position of coefficient ``(l1, l2, t)`` (all 0-based)."""
    return (l1 * config.n_filters_2 + l2) * config.t_out + t


def unflatten(coeffs, config):
    """Reshape flat coefficients to ``(..., n_filters_1, n_filters_2, t_out)``."""
    coeffs = np.asarray(coeffs)
    return coeffs.reshape(coeffs.shape[:-1] + (config.n_filters_1, config.n_filters_2, config.t_out))
