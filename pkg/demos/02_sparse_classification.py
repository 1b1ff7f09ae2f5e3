"""
Sparse multinomial logistic regression on scattering features
=============================================================

Train an L1-penalised multinomial model on the cylinder-bell-funnel problem
and look at how few coefficients it needs.
"""
import numpy as np

from scatterzo import mlr
from scatterzo.scattering import build_filter_bank, scatter_batch
from scatterzo.synthgen import gen_cbf, gen_triangle

bank = build_filter_bank()

for name, gen in (("cbf", gen_cbf), ("triangle", gen_triangle)):
    train, test = gen(100, seed=0), gen(1000, seed=1)
    X_train, X_test = scatter_batch(train, bank), scatter_batch(test, bank)

    # The regularisation path runs from lambda_max down to 1e-3 * lambda_max;
    # lambda is picked on a stratified 20% validation split.
    model = mlr.fit(X_train, train.labels, mlr.FitConfig(seed=0))
    print(f"{name}: lambda={model.lam:.4g}, nonzero per class {model.nonzero_counts().tolist()}")
    print(f"  test accuracy {mlr.accuracy(model, X_test, test.labels):.4f}")
    print(f"  KKT residual {mlr.kkt_check(model, X_train, train.labels):.2e}")

    # Larger lambda values give sparser models along the validation path.
    path = model.path
    for i in np.linspace(0, len(path["lambda_grid"]) - 1, 5).astype(int):
        print(f"    lambda {path['lambda_grid'][i]:9.4g}  nonzero {path['val_path_nonzero'][i]:4d}"
              f"  val acc {path['val_accuracy'][i]:.3f}")
