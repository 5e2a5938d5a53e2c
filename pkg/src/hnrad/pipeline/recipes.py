"""The three prognostic model recipes and their cross-validated evaluation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from ..combat import COVARIATES, ComBatFit, FeatureMatrix, combat_apply, combat_fit, concat_matrices
from ..conventional import FEATURE_NAMES as CONVENTIONAL_NAMES
from ..errors import EmptySelectionError, HnradError, PipelineError, UndefinedMetricError
from ..survival import (
    CoxModel,
    SelectionReport,
    concordance_index,
    correlation_prune,
    cox_fit,
    lasso_cox,
    univariate_filter,
)
from .config import PipelineConfig
from .folds import assign_folds

RECIPES = ("conventional", "radiomics_combat", "combined")


def split_feature_sets(columns) -> tuple[list[str], list[str]]:
    """Conventional columns are the ten fixed names; everything else is radiomics."""
    conv = [c for c in columns if c in CONVENTIONAL_NAMES]
    rad = [c for c in columns if c not in CONVENTIONAL_NAMES]
    return conv, rad


@dataclass
class FitOutcome:
    model: CoxModel
    selection: dict[str, SelectionReport]
    train_risks: pd.Series
    test_risks: Optional[pd.Series]
    combat: Optional[ComBatFit] = None


@dataclass
class ModelResult:
    recipe: str
    outcome: FitOutcome
    fold_cindex: dict[int, float] = field(default_factory=dict)
    test_cindex: Optional[float] = None

    @property
    def model(self) -> CoxModel:
        return self.outcome.model

    @property
    def mean_cv_cindex(self) -> float:
        vals = [v for v in self.fold_cindex.values() if np.isfinite(v)]
        return float(np.mean(vals)) if vals else float("nan")

    def risks_frame(self) -> pd.DataFrame:
        parts = [pd.DataFrame({"split": "train", "risk": self.outcome.train_risks})]
        if self.outcome.test_risks is not None:
            parts.append(pd.DataFrame({"split": "test", "risk": self.outcome.test_risks}))
        df = pd.concat(parts)
        df.index.name = "patient_id"
        return df

    def to_dict(self) -> dict:
        combat = None
        if self.outcome.combat is not None:
            combat = {"feature_names": list(self.model.feature_names), **self.outcome.combat.to_dict()}
        return {
            "recipe": self.recipe,
            **self.model.to_dict(),
            "selection": {k: r.to_dict() for k, r in self.outcome.selection.items()},
            "combat": combat,
            "fold_cindex": {str(k): v for k, v in self.fold_cindex.items()},
            "mean_cv_cindex": self.mean_cv_cindex,
            "test_cindex": self.test_cindex,
        }


def _survival(clinical: pd.DataFrame, ids):
    sub = clinical.loc[list(ids)]
    return sub["rfs_time"].to_numpy(dtype=float), sub["rfs_event"].to_numpy(dtype=float).astype(bool)


def _drop_constant(df: pd.DataFrame, where: str) -> pd.DataFrame:
    sd = df.std(axis=0, ddof=0)
    flat = list(sd.index[~(sd > 0)])
    if flat:
        warnings.warn(f"{where}: dropping {len(flat)} constant feature(s)", UserWarning, stacklevel=3)
    return df.drop(columns=flat)


def _filter_and_prune(X: pd.DataFrame, time, event, cfg: PipelineConfig, recipe: str, part: str):
    kept1, scores = univariate_filter(X, time, event, cfg.cindex_threshold)
    if not kept1:
        raise PipelineError(f"{recipe}:{part}:univariate", f"no feature with C-index > {cfg.cindex_threshold}")
    kept2 = correlation_prune(X, scores, kept1, cfg.rho_max)
    return scores, kept1, kept2


def _lasso_stage(X: pd.DataFrame, time, event, cfg: PipelineConfig, recipe: str, part: str, kept2):
    try:
        res = lasso_cox(X[kept2].to_numpy(dtype=float), time, event, kept2,
                        folds=cfg.lasso_folds, seed=cfg.seed, refit=False)
    except EmptySelectionError as exc:
        raise PipelineError(f"{recipe}:{part}:lasso", str(exc)) from exc
    return res.selected, res.best_lambda


def _report(scores, kept1, kept2, kept3, lam, cfg) -> SelectionReport:
    return SelectionReport(scores, kept1, kept2, kept3, lam,
                           {"cindex": cfg.cindex_threshold, "rho_max": cfg.rho_max,
                            "lasso_folds": cfg.lasso_folds, "seed": cfg.seed})


def _matrix(features: pd.DataFrame, clinical: pd.DataFrame) -> FeatureMatrix:
    clin = clinical.loc[features.index]
    return FeatureMatrix(list(features.index), list(features.columns), features.to_numpy(dtype=float),
                         clin["center"].to_numpy(), clin[list(COVARIATES)].to_numpy(dtype=float))


def fit_recipe(
    recipe: str,
    train: pd.DataFrame,
    train_clinical: pd.DataFrame,
    test: Optional[pd.DataFrame] = None,
    test_covariates: Optional[pd.DataFrame] = None,
    config: PipelineConfig = PipelineConfig(),
) -> FitOutcome:
    """Select features and fit the final Cox model for one recipe.

    ``test_covariates`` holds center/gender/age/weight for test rows; test
    survival is never passed in here.
    """
    if recipe not in RECIPES:
        raise ValueError(f"unknown recipe {recipe!r}; expected one of {RECIPES}")
    cfg = config
    has_surv = train_clinical.loc[train.index, "rfs_time"].notna().to_numpy()
    fit_ids = list(train.index[has_surv])
    if len(fit_ids) < len(train):
        warnings.warn(f"{len(train) - len(fit_ids)} training rows without survival are not used for fitting",
                      UserWarning, stacklevel=2)
    time, event = _survival(train_clinical, fit_ids)
    conv_cols, rad_cols = split_feature_sets(train.columns)
    selection: dict[str, SelectionReport] = {}
    combat = None
    test_frame = test

    if recipe == "conventional":
        if not conv_cols:
            raise PipelineError("conventional:input", "no conventional feature columns")
        X = _drop_constant(train.loc[fit_ids, conv_cols], "conventional")
        scores, k1, k2 = _filter_and_prune(X, time, event, cfg, recipe, "conventional")
        selection["conventional"] = _report(scores, k1, k2, k2, float("nan"), cfg)
        final = k2
        X_final = train.loc[fit_ids, final]
    else:
        if not rad_cols:
            raise PipelineError(f"{recipe}:input", "no radiomics feature columns")
        rad_train = train[rad_cols]
        rad_test = test[rad_cols] if test is not None else None
        pool = rad_train if rad_test is None else pd.concat([rad_train, rad_test])
        keep = list(_drop_constant(pool, "radiomics").columns)
        rad_train = rad_train[keep]
        rad_test = rad_test[keep] if rad_test is not None else None
        if recipe == "radiomics_combat":
            m_train = _matrix(rad_train, train_clinical)
            try:
                if rad_test is None:
                    combat = combat_fit(m_train)
                else:
                    m_test = _matrix(rad_test, test_covariates)
                    combat = combat_fit(m_train if cfg.combat_mode == "train-only" else concat_matrices(m_train, m_test))
                    rad_test = combat_apply(combat, m_test).to_frame()
                rad_train = combat_apply(combat, m_train).to_frame()
            except HnradError as exc:
                raise PipelineError(f"{recipe}:combat", str(exc)) from exc
        X = rad_train.loc[fit_ids]
        scores, k1, k2 = _filter_and_prune(X, time, event, cfg, recipe, "radiomics")
        k3, lam = _lasso_stage(X, time, event, cfg, recipe, "radiomics", k2)
        selection["radiomics"] = _report(scores, k1, k2, k3, lam, cfg)
        final = list(k3)
        X_final = X[final]
        if recipe == "combined":
            if not conv_cols:
                raise PipelineError("combined:input", "no conventional feature columns")
            Xc = _drop_constant(train.loc[fit_ids, conv_cols], "conventional")
            cs, c1, c2 = _filter_and_prune(Xc, time, event, cfg, recipe, "conventional")
            selection["conventional"] = _report(cs, c1, c2, c2, float("nan"), cfg)
            final = c2 + [f for f in final if f not in c2]
            X_final = pd.concat([train.loc[fit_ids, c2], X[k3]], axis=1)[final]
        if combat is not None:
            combat = combat.subset([keep.index(f) for f in final])
        test_frame = rad_test if recipe == "radiomics_combat" else test

    if not final:
        raise PipelineError(f"{recipe}:final", "empty selected feature set")
    model = cox_fit(X_final, time, event, ridge_eps=cfg.ridge_eps, feature_names=final)
    model.meta = {"recipe": recipe}

    if recipe == "radiomics_combat":
        train_scores = model.risk_matrix(rad_train[final].to_numpy(dtype=float))
    else:
        train_scores = model.risk_matrix(train[final].to_numpy(dtype=float))
    train_risks = pd.Series(train_scores, index=train.index, name="risk")
    test_risks = None
    if test_frame is not None:
        test_risks = pd.Series(model.risk_matrix(test_frame[final].to_numpy(dtype=float)),
                               index=test_frame.index, name="risk")
    return FitOutcome(model, selection, train_risks, test_risks, combat)


def _cindex(risks: pd.Series, clinical: pd.DataFrame) -> float:
    sub = clinical.loc[risks.index]
    ok = sub["rfs_time"].notna().to_numpy()
    if not ok.any():
        return float("nan")
    try:
        return concordance_index(risks.to_numpy()[ok], sub["rfs_time"].to_numpy(dtype=float)[ok],
                                 sub["rfs_event"].to_numpy(dtype=float)[ok].astype(bool))
    except UndefinedMetricError:
        return float("nan")


def run_model(
    recipe: str,
    train: pd.DataFrame,
    clinical: pd.DataFrame,
    test: Optional[pd.DataFrame] = None,
    config: PipelineConfig = PipelineConfig(),
    cross_validate: bool = True,
) -> ModelResult:
    """Five-fold evaluation on the training set, then a final fit on all of it.

    ``clinical`` covers both training and test patients. Test survival, when
    present, is only read after fitting to report the test C-index.
    """
    covars = ["center", *COVARIATES]
    fold_c: dict[int, float] = {}
    if cross_validate:
        folds = assign_folds(train.index, clinical.loc[train.index, "center"], config.seed)
        for k in sorted(set(folds.folds.values())):
            val_ids = folds.members(k)
            tr = train.drop(index=val_ids)
            va = train.loc[val_ids]
            try:
                out = fit_recipe(recipe, tr, clinical.loc[tr.index], va, clinical.loc[va.index, covars], config)
                fold_c[k] = _cindex(out.test_risks, clinical)
            except PipelineError as exc:
                warnings.warn(f"fold {k}: {exc}", UserWarning, stacklevel=2)
                fold_c[k] = float("nan")
    test_cov = clinical.loc[test.index, covars] if test is not None else None
    outcome = fit_recipe(recipe, train, clinical.loc[train.index], test, test_cov, config)
    test_c = None
    if outcome.test_risks is not None and clinical.loc[outcome.test_risks.index, "rfs_time"].notna().any():
        test_c = _cindex(outcome.test_risks, clinical)
    return ModelResult(recipe, outcome, fold_c, test_c)


def predict_from_dict(model_json: dict, features: pd.DataFrame, clinical: Optional[pd.DataFrame] = None) -> pd.Series:
    """Risk scores for new rows from a saved model; ComBat-ed models need centers."""
    model = CoxModel.from_dict(model_json)
    missing = [f for f in model.feature_names if f not in features.columns]
    if missing:
        from ..errors import SchemaError
        raise SchemaError(f"missing features: {missing}")
    X = features[model.feature_names]
    if model_json.get("combat"):
        if clinical is None:
            from ..errors import SchemaError
            raise SchemaError("this model harmonizes inputs with ComBat; clinical centers/covariates are required")
        fit = ComBatFit.from_dict(model_json["combat"])
        X = combat_apply(fit, _matrix(X, clinical)).to_frame()
    return pd.Series(model.risk_matrix(X.to_numpy(dtype=float)), index=features.index, name="risk")
