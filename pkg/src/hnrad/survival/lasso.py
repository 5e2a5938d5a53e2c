"""L1-penalized Cox regression by proximal Newton / coordinate descent."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import EmptySelectionError, UndefinedMetricError
from .concordance import concordance_index
from .cox import CoxModel, cox_fit, cox_loglik, standardize


def lambda_max(Z, time, event) -> float:
    """Smallest penalty at which the all-zero vector is optimal."""
    _, g, _ = cox_loglik(np.zeros(Z.shape[1]), Z, time, event, need_hessian=False)
    return float(np.abs(g).max())


def _soft(z: float, lam: float) -> float:
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def lasso_cox_solve(Z, time, event, lam: float, beta0=None, max_outer: int = 100, tol: float = 1e-12) -> np.ndarray:
    """Maximize ``loglik(beta) - lam * ||beta||_1`` starting from ``beta0``."""
    n, p = Z.shape
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)

    def objective(b):
        return cox_loglik(b, Z, time, event, need_hessian=False)[0] - lam * np.abs(b).sum()

    obj = objective(beta)
    for _ in range(max_outer):
        _, g, h = cox_loglik(beta, Z, time, event)
        A = -h
        diag = np.diag(A).copy()
        b = beta.copy()
        # grad of the quadratic model at b: g - A (b - beta)
        resid = g.copy()
        for _sweep in range(500):
            biggest = 0.0
            for j in range(p):
                if diag[j] <= 0:
                    continue
                z = diag[j] * b[j] + resid[j]
                new = _soft(z, lam) / diag[j]
                delta = new - b[j]
                if delta != 0.0:
                    resid -= A[:, j] * delta
                    b[j] = new
                    biggest = max(biggest, abs(delta))
            if biggest < 1e-13:
                break
        step = b - beta
        if not np.any(step):
            break
        t = 1.0
        while True:
            cand = beta + t * step
            obj_new = objective(cand)
            if obj_new >= obj - 1e-14 * max(1.0, abs(obj)) or t < 1e-10:
                break
            t *= 0.5
        improvement = obj_new - obj
        beta, obj = cand, obj_new
        if abs(improvement) < tol * max(1.0, abs(obj)):
            break
    return beta


def lasso_path(Z, time, event, lambdas: Sequence[float]) -> np.ndarray:
    """Coefficients (len(lambdas), p) along a descending grid with warm starts."""
    coefs = np.zeros((len(lambdas), Z.shape[1]))
    beta = None
    for k, lam in enumerate(lambdas):
        beta = lasso_cox_solve(Z, time, event, lam, beta)
        coefs[k] = beta
    return coefs


def default_grid(lmax: float, n_lambda: int = 30, min_ratio: float = 0.01) -> np.ndarray:
    return lmax * np.logspace(0, np.log10(min_ratio), n_lambda)


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


@dataclass
class LassoResult:
    selected: list[str]
    lambdas: np.ndarray
    path: np.ndarray  # (n_lambda, p) on standardized features
    cv_cindex: np.ndarray
    best_lambda: float
    model: CoxModel | None


def lasso_cox(
    X,
    time,
    event,
    feature_names: Sequence[str],
    lambda_grid: Sequence[float] | None = None,
    folds: int = 5,
    seed: int = 0,
    refit: bool = True,
) -> LassoResult:
    """Select features by Lasso-Cox with the penalty chosen by CV C-index.

    The grid is fitted on all rows with warm starts; each CV fold refits the
    path on its training part and scores the held-out part. Among penalties
    that keep at least one feature, the one with the highest mean CV C-index
    wins (ties go to the larger penalty). The selected features are then
    refitted without penalty unless ``refit`` is False.
    """
    X = np.asarray(X, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    names = list(feature_names)
    Z, _, _ = standardize(X, names)
    if lambda_grid is None:
        lambdas = default_grid(lambda_max(Z, time, event))
    else:
        lambdas = np.sort(np.asarray(lambda_grid, dtype=float))[::-1]
    path = lasso_path(Z, time, event, lambdas)

    scores = np.full((folds, len(lambdas)), np.nan)
    for f, test_idx in enumerate(kfold_indices(len(time), folds, seed)):
        train = np.setdiff1d(np.arange(len(time)), test_idx)
        if event[train].sum() < 2:
            continue
        fold_path = lasso_path(Z[train], time[train], event[train], lambdas)
        for k in range(len(lambdas)):
            try:
                scores[f, k] = concordance_index(Z[test_idx] @ fold_path[k], time[test_idx], event[test_idx])
            except UndefinedMetricError:
                pass
    with np.errstate(all="ignore"):
        cv = np.nanmean(scores, axis=0) if np.isfinite(scores).any() else np.full(len(lambdas), np.nan)

    nonzero = np.any(path != 0, axis=1)
    if not nonzero.any():
        raise EmptySelectionError("Lasso-Cox selected no feature at any penalty")
    candidates = np.where(nonzero & np.isfinite(cv), cv, -np.inf)
    if not np.isfinite(candidates).any():
        best = int(np.nonzero(nonzero)[0][0])
    else:
        best = int(np.argmax(candidates))  # first max = largest penalty
    selected = [names[j] for j in np.nonzero(path[best])[0]]
    model = None
    if refit:
        cols = [names.index(s) for s in selected]
        model = cox_fit(X[:, cols], time, event, feature_names=selected)
    return LassoResult(selected, lambdas, path, cv, float(lambdas[best]), model)
