"""
Choosing the sparsity and smoothness weights
============================================

``penalty_sweep`` runs one extraction per (mu, nu) on a logarithmic grid and
keeps the point with the highest target probability whose support fraction
(share of samples above 1% of the peak) is at most one half.  A reduced DE
budget keeps this demo to a few minutes.
"""
import numpy as np

from scatterzo import mlr, zoopt
from scatterzo.scattering import build_filter_bank, scatter_batch
from scatterzo.synthgen import gen_cbf

bank = build_filter_bank()
train = gen_cbf(100, seed=0)
model = mlr.fit(scatter_batch(train, bank), train.labels, mlr.FitConfig(seed=2))

config = zoopt.DeConfig(pop_size=64, F=0.5, max_evals=20_000, init_scale=0.1,
                        bounds=zoopt.dct_bounds(train.signals), stall_generations=400)
grid = np.logspace(-3, -1, 3)
best, points = zoopt.penalty_sweep(model, bank, target_class=3, config=config, mus=grid, nus=grid)

print("   mu      nu     p_k   support")
for pt in points:
    flag = "*" if pt is best else " "
    print(f"{flag}{pt.mu:6.3f}  {pt.nu:6.3f}  {pt.target_probability:.3f}  {pt.support:.2f}")
