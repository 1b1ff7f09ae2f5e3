"""Multinomial logistic regression with a Lasso penalty, fitted along a lambda path.

The fitted objective is

    F(alpha, B) = NLL(alpha, B) + lam * sum_k ||beta_k||_1

with ``NLL`` the summed (not averaged) multinomial negative log-likelihood
over the training rows.  Intercepts are unpenalised.  All ``K`` classes carry
their own ``beta_k`` (the symmetric, over-complete parameterisation); the L1
term picks the representative.

The solver is proximal gradient with backtracking and Nesterov momentum in
its monotone form (each accepted iterate never increases ``F``), warm-started
down a geometric lambda grid.  Convergence is declared on the KKT residual.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

logger = logging.getLogger(__name__)


class MlrConfigError(ValueError):
    pass


@dataclass
class FitConfig:
    lambda_grid: tuple | None = None
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3
    max_iter: int = 3000
    tol: float = 1e-3
    val_fraction: float = 0.2
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.lambda_grid is not None:
            grid = np.asarray(self.lambda_grid, dtype=float)
            if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
                raise MlrConfigError("lambda_grid must be a non-empty list of positive reals")
            if np.any(np.diff(grid) >= 0):
                raise MlrConfigError("lambda_grid must be strictly descending")
            self.lambda_grid = tuple(float(v) for v in grid)
        if self.n_lambda < 1 or not 0 < self.lambda_min_ratio < 1:
            raise MlrConfigError("n_lambda >= 1 and 0 < lambda_min_ratio < 1 required")
        if self.tol <= 0 or self.max_iter < 1:
            raise MlrConfigError("tol must be positive and max_iter >= 1")
        if not 0 < self.val_fraction < 1:
            raise MlrConfigError("val_fraction must lie in (0, 1)")


@dataclass
class MlrModel:
    """Fitted intercepts ``alphas`` (K,) and coefficients ``betas`` (K, p).

    ``betas`` act on standardised features ``(s - feature_center) / feature_scale``.
    """

    alphas: np.ndarray
    betas: np.ndarray
    lam: float
    feature_center: np.ndarray
    feature_scale: np.ndarray
    path: dict = field(default_factory=dict, repr=False)
    scattering_config: dict | None = None

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.betas = np.asarray(self.betas, dtype=float)
        self.feature_center = np.asarray(self.feature_center, dtype=float)
        self.feature_scale = np.asarray(self.feature_scale, dtype=float)
        K, p = self.betas.shape
        if self.alphas.shape != (K,):
            raise ValueError("alphas must have one entry per class")
        if self.feature_center.shape != (p,) or self.feature_scale.shape != (p,):
            raise ValueError("feature_center/feature_scale must have length p")
        if np.any(self.feature_scale <= 0):
            raise ValueError("feature_scale entries must be positive")
        if not (np.all(np.isfinite(self.betas)) and np.all(np.isfinite(self.alphas))):
            raise ValueError("model parameters must be finite")

    @property
    def n_classes(self) -> int:
        return self.betas.shape[0]

    @property
    def n_features(self) -> int:
        return self.betas.shape[1]

    def standardize(self, features):
        return (features - self.feature_center) / self.feature_scale

    def nonzero_counts(self):
        return np.count_nonzero(self.betas, axis=1)

    def raw_coefficients(self):
        """Coefficients and intercepts acting on unstandardised features."""
        betas = self.betas / self.feature_scale
        return self.alphas - betas @ self.feature_center, betas

    def to_dict(self):
        rows, cols = np.nonzero(self.betas)
        return {
            "K": self.n_classes,
            "p": self.n_features,
            "lambda": self.lam,
            "alphas": self.alphas.tolist(),
            "betas": {"rows": rows.tolist(), "cols": cols.tolist(),
                      "values": self.betas[rows, cols].tolist()},
            "feature_center": self.feature_center.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "scattering_config": self.scattering_config,
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        K, p = int(data["K"]), int(data["p"])
        betas = np.zeros((K, p))
        sparse = data["betas"]
        betas[np.asarray(sparse["rows"], dtype=int),
              np.asarray(sparse["cols"], dtype=int)] = sparse["values"]
        return cls(data["alphas"], betas, float(data["lambda"]), data["feature_center"],
                   data["feature_scale"], scattering_config=data.get("scattering_config"))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _logits(alphas, betas, X):
    return X @ betas.T + alphas


def predict_proba(model, features):
    """Class probabilities for one feature row ``(p,)`` or a matrix ``(N, p)``."""
    features = np.asarray(features, dtype=float)
    if features.shape[-1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got {features.shape[-1]}")
    Z = _logits(model.alphas, model.betas, model.standardize(features))
    # scipy's softmax subtracts the row max before exponentiating
    return softmax(Z, axis=-1)


def predict(model, features):
    """Predicted labels in ``1..K``; ties go to the smallest class index."""
    return np.argmax(predict_proba(model, features), axis=-1) + 1


def accuracy(model, features, labels):
    labels = np.asarray(labels)
    features = np.atleast_2d(features)
    if features.shape[0] != labels.shape[0]:
        raise ValueError("features and labels have different row counts")
    return float(np.mean(predict(model, features) == labels))


def _onehot(labels, K):
    Y = np.zeros((labels.size, K))
    Y[np.arange(labels.size), labels - 1] = 1.0
    return Y


def nll_and_grad(alphas, betas, X, labels):
    """Summed multinomial NLL and its gradient w.r.t. ``alphas`` and ``betas``.

    Parameters
    ----------
    alphas : (K,) array
    betas : (K, p) array
    X : (N, p) array
    labels : (N,) integer array with values in ``1..K``

    Returns
    -------
    nll : float
    grad_alphas : (K,) array
    grad_betas : (K, p) array
    """
    alphas = np.asarray(alphas, dtype=float)
    betas = np.asarray(betas, dtype=float)
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    K = alphas.size
    if betas.shape != (K, X.shape[1]) or labels.shape != (X.shape[0],):
        raise ValueError("inconsistent dimensions for alphas, betas, X, labels")
    Z = _logits(alphas, betas, X)
    lse = logsumexp(Z, axis=1)
    nll = float(np.sum(lse - Z[np.arange(len(labels)), labels - 1]))
    G = np.exp(Z - lse[:, None]) - _onehot(labels, K)
    return nll, G.sum(axis=0), G.T @ X


def _nll(alphas, betas, X, labels):
    Z = _logits(alphas, betas, X)
    return float(np.sum(logsumexp(Z, axis=1) - Z[np.arange(len(labels)), labels - 1]))


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def kkt_residual(grad_alphas, grad_betas, betas, lam):
    """Largest violation of the Lasso optimality conditions.

    Zero coefficients need ``|g| <= lam``; active ones need ``g + lam*sign(b) = 0``;
    intercepts need ``g = 0``.
    """
    active = betas != 0
    viol = np.where(active, np.abs(grad_betas + lam * np.sign(betas)),
                    np.maximum(np.abs(grad_betas) - lam, 0.0))
    return max(float(np.max(np.abs(grad_alphas), initial=0.0)),
               float(np.max(viol, initial=0.0)))


def lasso_mlr_solve(X, labels, lam, alphas, betas, max_iter=3000, tol=1e-3,
                    step=1.0, objective_trace=None):
    """Minimise ``NLL + lam * ||B||_1`` from the warm start ``(alphas, betas)``.

    Returns ``(alphas, betas, info)``; ``info`` has ``iterations``, ``kkt``,
    ``converged`` and the final ``step``.
    """
    K = alphas.size
    a, B = alphas.copy(), betas.copy()
    za, zB = a.copy(), B.copy()
    f_x = _nll(a, B, X, labels)
    F_x = f_x + lam * np.abs(B).sum()
    theta = 1.0
    kkt = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f_z, ga, gB = nll_and_grad(za, zB, X, labels)
        while True:
            na = za - step * ga
            nB = soft_threshold(zB - step * gB, step * lam)
            da, dB = na - za, nB - zB
            f_new = _nll(na, nB, X, labels)
            bound = f_z + ga @ da + np.sum(gB * dB) + (da @ da + np.sum(dB * dB)) / (2 * step)
            if f_new <= bound + 1e-12 * abs(f_z):
                break
            step *= 0.5
        F_new = f_new + lam * np.abs(nB).sum()
        theta_next = 0.5 * (1 + np.sqrt(1 + 4 * theta ** 2))
        prev_a, prev_B = a, B
        if F_new <= F_x:
            a, B, F_x = na, nB, F_new
        # monotone momentum: extrapolate from the accepted iterate
        za = a + (theta / theta_next) * (na - a) + ((theta - 1) / theta_next) * (a - prev_a)
        zB = B + (theta / theta_next) * (nB - B) + ((theta - 1) / theta_next) * (B - prev_B)
        theta = theta_next
        if objective_trace is not None:
            objective_trace.append(F_x)
        _, ga_x, gB_x = nll_and_grad(a, B, X, labels)
        kkt = kkt_residual(ga_x, gB_x, B, lam)
        if kkt <= tol:
            break
        step *= 1.25
    info = {"iterations": it, "kkt": kkt, "converged": bool(kkt <= tol), "step": step}
    return a, B, info


def lambda_max(X, labels, K):
    """Smallest lambda for which all coefficients are zero at the optimum."""
    prior = np.bincount(labels - 1, minlength=K) / labels.size
    G = prior[None, :] - _onehot(labels, K)
    return float(np.max(np.abs(G.T @ X)))


def prior_intercepts(labels, K):
    counts = np.bincount(labels - 1, minlength=K).astype(float)
    return np.log(counts / counts.sum())


def _stratified_split(labels, val_fraction, seed):
    rng = np.random.default_rng(seed)
    train, val = [], []
    for k in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == k))
        n_val = min(int(round(val_fraction * idx.size)), idx.size - 1)
        val.extend(idx[:n_val])
        train.extend(idx[n_val:])
    return np.sort(np.array(train, dtype=int)), np.sort(np.array(val, dtype=int))


def _standardization(features, enabled):
    p = features.shape[1]
    if not enabled:
        return np.zeros(p), np.ones(p)
    center = features.mean(axis=0)
    scale = features.std(axis=0)
    scale[scale == 0] = 1.0
    return center, scale


def _run_path(X, labels, K, grid, config):
    a = prior_intercepts(labels, K)
    B = np.zeros((K, X.shape[1]))
    step = 1.0
    for lam in grid:
        a, B, info = lasso_mlr_solve(X, labels, lam, a, B, config.max_iter, config.tol, step)
        step = info["step"]
        if not info["converged"]:
            logger.warning("lambda=%.4g: stopped at max_iter with KKT residual %.3g",
                           lam, info["kkt"])
        yield lam, a, B, info


def select_lambda(val_accuracy, val_nll):
    """Index of the chosen lambda on a descending grid.

    Highest validation accuracy wins; among equally accurate lambdas the lowest
    validation NLL wins; remaining ties go to the larger lambda.
    """
    acc = np.asarray(val_accuracy)
    nll = np.asarray(val_nll)
    tied = np.flatnonzero(acc == acc.max())
    return int(tied[np.argmin(nll[tied])])


def _check_inputs(features, labels):
    features = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    if features.ndim != 2 or labels.shape != (features.shape[0],):
        raise ValueError("features must be (N, p) and labels (N,)")
    if not np.all(np.isfinite(features)):
        raise ValueError("features contain non-finite values")
    if labels.size == 0 or labels.min() < 1:
        raise MlrConfigError("labels must be integers in 1..K")
    labels = labels.astype(int)
    return features, labels


def fit(features, labels, config=None, n_classes=None):
    """Fit a Lasso-penalised multinomial logistic regression.

    Lambda is chosen by accuracy on a stratified held-out split of the training
    rows (ties go to the larger lambda); the returned model is then refitted on
    all rows at that lambda, warm-starting along the same grid.

    Returns
    -------
    MlrModel
        ``model.path`` records the grid, validation accuracy and nonzero count
        per lambda and the solver diagnostics at the selected lambda.
    """
    config = config or FitConfig()
    features, labels = _check_inputs(features, labels)
    K = int(n_classes or labels.max())
    counts = np.bincount(labels - 1, minlength=K)
    if K < 2 or np.any(counts == 0) or labels.max() > K:
        raise MlrConfigError(f"every class 1..{K} needs at least one sample (counts {counts.tolist()})")
    if features.shape[0] < K:
        raise MlrConfigError("need at least as many samples as classes")

    center, scale = _standardization(features, config.standardize)
    X = (features - center) / scale
    if config.lambda_grid is not None:
        grid = np.asarray(config.lambda_grid)
    else:
        lmax = lambda_max(X, labels, K)
        grid = np.geomspace(lmax, lmax * config.lambda_min_ratio, config.n_lambda)

    train, val = _stratified_split(labels, config.val_fraction, config.seed)
    val_acc, val_nll, path_nnz = [], [], []
    if val.size:
        Xt, yt = X[train], labels[train]
        for lam, a, B, _ in _run_path(Xt, yt, K, grid, config):
            pred = np.argmax(_logits(a, B, X[val]), axis=1) + 1
            val_acc.append(float(np.mean(pred == labels[val])))
            val_nll.append(_nll(a, B, X[val], labels[val]))
            path_nnz.append(int(np.count_nonzero(B)))
        best = select_lambda(val_acc, val_nll)
    else:
        best = len(grid) - 1

    full_nnz = []
    for i, (lam, a, B, info) in enumerate(_run_path(X, labels, K, grid[:best + 1], config)):
        full_nnz.append(int(np.count_nonzero(B)))
    path = {
        "lambda_grid": grid.tolist(),
        "selected_index": best,
        "val_accuracy": val_acc,
        "val_nll": val_nll,
        "val_path_nonzero": path_nnz,
        "nonzero": full_nnz,
        "kkt": info["kkt"],
        "iterations": info["iterations"],
        "converged": info["converged"],
        "n_train": int(train.size),
        "n_val": int(val.size),
    }
    return MlrModel(a, B, float(grid[best]), center, scale, path)


def kkt_check(model, features, labels):
    """KKT residual of ``model`` on the (raw) training data it was fitted to."""
    X = model.standardize(np.asarray(features, dtype=float))
    _, ga, gB = nll_and_grad(model.alphas, model.betas, X, np.asarray(labels, dtype=int))
    return kkt_residual(ga, gB, model.betas, model.lam)
