"""
Scattering features of a 1-D signal
===================================

Build the default two-layer filter bank, look at its shape, and transform a
few cylinder-bell-funnel signals.
"""
import time

import numpy as np

from scatterzo.scattering import ScatteringConfig, build_filter_bank, scatter2, scatter_signals, unflatten
from scatterzo.synthgen import gen_cbf, prototypes

# 14 first-layer and 11 second-layer Mexican-hat filters on 128 samples,
# subsampled by 1.5 after each layer and by 8 after the final lowpass.
config = ScatteringConfig()
bank = build_filter_bank(config)
print("layer-1 filters:", bank.layer1.shape, " layer-2 filters:", bank.layer2.shape)
print("time samples per path:", config.t_out, " total coefficients:", config.n_coefficients)

# Each layer is normalised so that its Littlewood-Paley sum peaks at 1.
print("max Littlewood-Paley sum, layer 1: %.6f" % bank.littlewood_paley(1).max())

# %%
# The transform is a modulus cascade, so flipping the sign of a signal
# leaves it unchanged.
cylinder, bell, funnel = prototypes("cbf")
s = scatter2(bell, bank)
print("sign invariance holds:", np.array_equal(s, scatter2(-bell, bank)))

# %%
# Coefficients are laid out path by path; ``unflatten`` gives (l1, l2, t).
cube = unflatten(s, config)
l1, l2 = np.unravel_index(np.argmax(cube.sum(axis=2)), cube.shape[:2])
print(f"most energetic path for the bell prototype: l1={l1}, l2={l2}")

# %%
# Batches go through three precomputed dense operators.
signals = gen_cbf(1000, seed=0).signals
start = time.perf_counter()
features = scatter_signals(signals, bank)
elapsed = time.perf_counter() - start
print(f"{features.shape[0]} signals in {elapsed:.2f} s ({1e3 * elapsed / len(signals):.3f} ms/signal)")
