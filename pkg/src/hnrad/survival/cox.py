"""Cox proportional-hazards regression fitted by Newton-Raphson."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ..errors import DegenerateFeatureError, SchemaError


def _sorted(X, time, event):
    order = np.argsort(time, kind="stable")
    return X[order], np.asarray(time, dtype=float)[order], np.asarray(event, dtype=bool)[order]


def cox_loglik(beta, X, time, event, ties: str = "breslow", need_hessian: bool = True):
    """Partial log-likelihood, gradient and Hessian at ``beta``.

    ``X`` is (n, p). The risk set at time t is every subject with time >= t.
    """
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    Xs, t, e = _sorted(X, time, event)
    n, p = Xs.shape
    eta = Xs @ beta
    shift = eta.max()
    w = np.exp(eta - shift)
    # reverse cumulative sums give sums over {m : t_m >= t_k}
    S0 = np.cumsum(w[::-1])[::-1]
    S1 = np.cumsum((Xs * w[:, None])[::-1], axis=0)[::-1]
    first = np.searchsorted(t, t, side="left")
    S0, S1 = S0[first], S1[first]
    if need_hessian:
        outer = Xs[:, :, None] * Xs[:, None, :] * w[:, None, None]
        S2 = np.cumsum(outer[::-1], axis=0)[::-1][first]

    has_ties = e.any() and len(np.unique(t[e])) < int(e.sum())
    if ties == "efron" and has_ties:
        return _efron(Xs, t, e, eta, w, shift, S0, S1, S2 if need_hessian else None)
    if ties not in ("breslow", "efron"):
        raise ValueError(f"unknown ties method {ties!r}")

    ev = e
    ll = float((eta[ev] - shift - np.log(S0[ev])).sum())
    mean = S1[ev] / S0[ev, None]
    grad = (Xs[ev] - mean).sum(axis=0)
    if not need_hessian:
        return ll, grad, None
    hess = -((S2[ev] / S0[ev, None, None]) - mean[:, :, None] * mean[:, None, :]).sum(axis=0)
    return ll, grad, hess


def _efron(Xs, t, e, eta, w, shift, S0, S1, S2):
    p = Xs.shape[1]
    ll = 0.0
    grad = np.zeros(p)
    hess = np.zeros((p, p)) if S2 is not None else None
    for tt in np.unique(t[e]):
        idx = np.nonzero((t == tt) & e)[0]
        d = len(idx)
        k = idx[0]
        r0, r1 = S0[k], S1[k]
        d0 = w[idx].sum()
        d1 = (Xs[idx] * w[idx, None]).sum(axis=0)
        ll += float((eta[idx] - shift).sum())
        grad += Xs[idx].sum(axis=0)
        if S2 is not None:
            r2 = S2[k]
            d2 = (Xs[idx, :, None] * Xs[idx, None, :] * w[idx, None, None]).sum(axis=0)
        for l in range(d):
            f = l / d
            a0 = r0 - f * d0
            a1 = r1 - f * d1
            ll -= np.log(a0)
            m = a1 / a0
            grad -= m
            if S2 is not None:
                a2 = r2 - f * d2
                hess -= a2 / a0 - np.outer(m, m)
    return ll, grad, hess


@dataclass
class CoxModel:
    feature_names: list[str]
    coefficients: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    loglik: float = float("nan")
    iterations: int = 0
    converged: bool = True
    ties: str = "breslow"
    meta: dict = field(default_factory=dict)

    def risk_matrix(self, X) -> np.ndarray:
        """Linear predictors for an (n, p) array whose columns follow ``feature_names``."""
        Z = (np.asarray(X, dtype=float) - self.means) / self.sds
        return Z @ self.coefficients

    def to_dict(self) -> dict:
        return {
            "feature_names": list(self.feature_names),
            "coefficients": [float(b) for b in self.coefficients],
            "standardization": {
                name: {"mean": float(m), "sd": float(s)}
                for name, m, s in zip(self.feature_names, self.means, self.sds)
            },
            "fit_meta": {
                "loglik": float(self.loglik),
                "iterations": int(self.iterations),
                "converged": bool(self.converged),
                "ties": self.ties,
            },
            **({"meta": self.meta} if self.meta else {}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoxModel":
        names = list(d["feature_names"])
        std = d["standardization"]
        fm = d.get("fit_meta", {})
        return cls(
            feature_names=names,
            coefficients=np.asarray(d["coefficients"], dtype=float),
            means=np.array([std[n]["mean"] for n in names], dtype=float),
            sds=np.array([std[n]["sd"] for n in names], dtype=float),
            loglik=fm.get("loglik", float("nan")),
            iterations=fm.get("iterations", 0),
            converged=fm.get("converged", True),
            ties=fm.get("ties", "breslow"),
            meta=d.get("meta", {}),
        )


def standardize(X: np.ndarray, names: Sequence[str] | None = None):
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    bad = np.nonzero(~(sds > 1e-12 * np.maximum(1.0, np.abs(means))))[0]
    if bad.size:
        which = [names[i] for i in bad] if names is not None else bad.tolist()
        raise DegenerateFeatureError(f"zero-variance feature(s): {which}")
    return (X - means) / sds, means, sds


def cox_fit(
    X,
    time,
    event,
    ridge_eps: float = 0.0,
    feature_names: Sequence[str] | None = None,
    ties: str = "breslow",
    max_iter: int = 100,
    tol: float = 1e-9,
) -> CoxModel:
    """Maximize the partial likelihood by Newton-Raphson with step halving.

    Columns are standardized internally; the returned model keeps the means
    and SDs so scores can be computed from raw inputs. ``ridge_eps`` adds
    ``-ridge_eps/2 * ||beta||^2`` to guard against separation.
    """
    if isinstance(X, pd.DataFrame):
        feature_names = list(X.columns) if feature_names is None else list(feature_names)
        X = X.to_numpy(dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(p)]
    if len(names) != p:
        raise SchemaError("feature_names length does not match X")
    if int(np.sum(event)) < 2:
        raise ValueError("Cox fit needs at least 2 events")
    Z, means, sds = standardize(X, names)

    def penalized(b):
        ll, g, h = cox_loglik(b, Z, time, event, ties)
        return ll - 0.5 * ridge_eps * b @ b, g - ridge_eps * b, h - ridge_eps * np.eye(p)

    beta = np.zeros(p)
    ll, g, h = penalized(beta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        try:
            step = np.linalg.solve(-h, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-h, g, rcond=None)[0]
        t = 1.0
        for _ in range(40):
            cand = beta + t * step
            ll_new, g_new, h_new = penalized(cand)
            if np.isfinite(ll_new) and ll_new >= ll - 1e-12:
                break
            t *= 0.5
        else:
            break
        delta = ll_new - ll
        beta, ll, g, h = cand, ll_new, g_new, h_new
        if abs(delta) < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"Cox fit did not converge in {max_iter} iterations", RuntimeWarning, stacklevel=2)
    return CoxModel(
        feature_names=names, coefficients=beta, means=means, sds=sds,
        loglik=float(ll), iterations=it, converged=converged, ties=ties,
    )


def risk_score(model: CoxModel, x: Mapping[str, float]) -> float:
    """Linear predictor for one patient given feature values by name."""
    missing = [n for n in model.feature_names if n not in x]
    if missing:
        raise SchemaError(f"missing features: {missing}")
    row = np.array([float(x[n]) for n in model.feature_names])
    return float(model.risk_matrix(row[None, :])[0])


def risk_scores(model: CoxModel, table: pd.DataFrame) -> np.ndarray:
    missing = [n for n in model.feature_names if n not in table.columns]
    if missing:
        raise SchemaError(f"missing features: {missing}")
    return model.risk_matrix(table[model.feature_names].to_numpy(dtype=float))
