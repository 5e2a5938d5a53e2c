"""Feature selection: univariate C-index filter, correlation pruning, Lasso-Cox."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..errors import DegenerateFeatureError, EmptySelectionError, UndefinedMetricError
from .concordance import concordance_index
from .cox import cox_fit
from .lasso import lasso_cox


def univariate_cindex(X: pd.DataFrame, time, event) -> dict[str, float]:
    """Training C-index of a one-feature Cox model for every column.

    The risk of a one-feature model is ``beta * x`` so the score is the C-index
    of ``x`` itself, flipped when the fitted coefficient is negative.
    Columns that cannot be fitted get NaN.
    """
    out: dict[str, float] = {}
    for name in X.columns:
        x = X[name].to_numpy(dtype=float)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                model = cox_fit(x, time, event, feature_names=[name], ridge_eps=1e-8)
            out[name] = concordance_index(model.risk_matrix(x[:, None]), time, event)
        except (DegenerateFeatureError, UndefinedMetricError, ValueError, np.linalg.LinAlgError) as exc:
            warnings.warn(f"univariate fit failed for {name}: {exc}; feature dropped", RuntimeWarning, stacklevel=2)
            out[name] = float("nan")
    return out


def univariate_filter(X: pd.DataFrame, time, event, threshold: float = 0.50):
    """Keep features whose univariate C-index exceeds ``threshold``."""
    scores = univariate_cindex(X, time, event)
    kept = [n for n in X.columns if np.isfinite(scores[n]) and scores[n] > threshold]
    return kept, scores


def correlation_prune(X: pd.DataFrame, scores: dict[str, float], candidates, rho_max: float = 0.60) -> list[str]:
    """Greedy pruning by absolute Pearson correlation.

    Features are visited in decreasing univariate C-index (name breaks ties)
    and each is kept only if ``|r| < rho_max`` with every feature kept so far.
    """
    order = sorted(candidates, key=lambda n: (-scores[n], n))
    if not order:
        return []
    corr = np.abs(np.corrcoef(X[order].to_numpy(dtype=float), rowvar=False))
    corr = np.atleast_2d(np.nan_to_num(corr, nan=0.0))
    kept_idx: list[int] = []
    for i in range(len(order)):
        if all(corr[i, j] < rho_max for j in kept_idx):
            kept_idx.append(i)
    return [order[i] for i in kept_idx]


@dataclass
class SelectionReport:
    univariate: dict[str, float]
    after_univariate: list[str]
    after_correlation: list[str]
    after_lasso: list[str]
    best_lambda: float = float("nan")
    thresholds: dict = field(default_factory=dict)

    def check_nesting(self) -> bool:
        return set(self.after_lasso) <= set(self.after_correlation) <= set(self.after_univariate)

    def to_dict(self) -> dict:
        return {
            "univariate_cindex": {k: (None if not np.isfinite(v) else float(v)) for k, v in self.univariate.items()},
            "after_univariate": list(self.after_univariate),
            "after_correlation": list(self.after_correlation),
            "after_lasso": list(self.after_lasso),
            "best_lambda": float(self.best_lambda),
            "thresholds": dict(self.thresholds),
        }


def select_features(
    X: pd.DataFrame,
    time,
    event,
    cindex_threshold: float = 0.50,
    rho_max: float = 0.60,
    folds: int = 5,
    seed: int = 0,
    use_lasso: bool = True,
):
    """Run the three selection stages; returns the report and the refitted model."""
    kept1, scores = univariate_filter(X, time, event, cindex_threshold)
    if not kept1:
        raise EmptySelectionError(f"no feature has univariate C-index > {cindex_threshold}")
    kept2 = correlation_prune(X, scores, kept1, rho_max)
    if use_lasso:
        res = lasso_cox(X[kept2].to_numpy(dtype=float), time, event, kept2, folds=folds, seed=seed)
        kept3, lam, model = res.selected, res.best_lambda, res.model
    else:
        kept3, lam = list(kept2), float("nan")
        model = cox_fit(X[kept3], time, event, ridge_eps=1e-8)
    report = SelectionReport(
        scores, kept1, kept2, kept3, lam,
        {"cindex": cindex_threshold, "rho_max": rho_max, "folds": folds, "seed": seed},
    )
    return report, model
