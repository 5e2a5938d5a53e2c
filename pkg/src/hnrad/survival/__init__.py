"""Survival modelling: C-index, Cox regression, Lasso-Cox and feature selection."""

from .concordance import concordance_index
from .cox import CoxModel, cox_fit, cox_loglik, risk_score, risk_scores, standardize
from .lasso import LassoResult, lambda_max, lasso_cox, lasso_cox_solve, lasso_path
from .selection import (
    SelectionReport,
    correlation_prune,
    select_features,
    univariate_cindex,
    univariate_filter,
)

__all__ = [
    "concordance_index", "CoxModel", "cox_fit", "cox_loglik", "risk_score", "risk_scores",
    "standardize", "LassoResult", "lambda_max", "lasso_cox", "lasso_cox_solve", "lasso_path",
    "SelectionReport", "correlation_prune", "select_features", "univariate_cindex",
    "univariate_filter",
]
