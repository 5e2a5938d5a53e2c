"""Non-parametric ComBat harmonization of a patients x features matrix.

Per feature g the model is

    x_ig = alpha_g + C_i beta_g + gamma_bg + delta_bg * sigma_g * eps_ig

with C the biological covariates (gender 0/1, z-scored age and weight) and b
the batch (center) of patient i. Steps:

1. ordinary least squares on [batch one-hot | covariates]; alpha_g is the
   size-weighted mean of the batch coefficients and sigma_g^2 the pooled
   residual variance;
2. z = (x - alpha - C beta) / sigma;
3. naive batch estimates gamma_hat (mean of z in the batch) and delta_hat^2
   (its sample variance) are shrunk by non-parametric empirical Bayes: the
   posterior for feature g is the average of the features' naive estimates
   weighted by the Gaussian likelihood of feature g's batch data under each;
4. z* = (z - gamma*) / delta*;
5. x* = sigma z* + alpha + C beta.

Warning: harmonizing the joint train+test matrix lets test-set center
statistics influence the training features. ``train_only=True`` fits on
training rows and applies the frozen estimates to test rows instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .errors import BatchSizeError, DegenerateFeatureError, DesignError, SchemaError

COVARIATES = ("gender", "age", "weight")


@dataclass
class FeatureMatrix:
    patient_ids: list[str]
    feature_names: list[str]
    values: np.ndarray  # (patients, features)
    center: np.ndarray  # batch label per patient
    covariates: np.ndarray | None = None  # (patients, 3): gender, age, weight

    def __post_init__(self):
        self.patient_ids = [str(p) for p in self.patient_ids]
        self.feature_names = list(self.feature_names)
        self.values = np.asarray(self.values, dtype=float)
        self.center = np.asarray(self.center).astype(str)
        n = len(self.patient_ids)
        if self.values.shape != (n, len(self.feature_names)):
            raise SchemaError(f"values shape {self.values.shape} does not match ids/names")
        if len(self.center) != n:
            raise SchemaError("one center label per patient required")
        if self.covariates is not None:
            self.covariates = np.asarray(self.covariates, dtype=float)
            if self.covariates.ndim == 1:
                self.covariates = self.covariates[:, None]
            if self.covariates.shape[0] != n:
                raise SchemaError("one covariate row per patient required")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=pd.Index(self.patient_ids, name="patient_id"),
                            columns=self.feature_names)

    @classmethod
    def from_frames(cls, features: pd.DataFrame, clinical: pd.DataFrame, use_covariates: bool = True) -> "FeatureMatrix":
        """Join a feature table (indexed by patient_id) with the clinical table."""
        clin = clinical.set_index("patient_id") if "patient_id" in clinical.columns else clinical
        missing = [p for p in features.index if p not in clin.index]
        if missing:
            raise SchemaError(f"patients missing from clinical table: {missing[:5]}")
        clin = clin.loc[features.index]
        cov = clin[list(COVARIATES)].to_numpy(dtype=float) if use_covariates else None
        return cls(list(features.index), list(features.columns), features.to_numpy(dtype=float),
                   clin["center"].to_numpy(), cov)

    def take(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        return FeatureMatrix(
            [self.patient_ids[i] for i in rows], self.feature_names, self.values[rows],
            self.center[rows], None if self.covariates is None else self.covariates[rows],
        )


@dataclass
class ComBatFit:
    """Frozen estimates, enough to harmonize new rows from known batches."""

    batches: list[str]
    alpha: np.ndarray  # (G,)
    beta: np.ndarray  # (q, G)
    sigma: np.ndarray  # (G,)
    gamma_hat: np.ndarray  # (B, G)
    delta_hat: np.ndarray  # (B, G) variances
    gamma_star: np.ndarray
    delta_star: np.ndarray
    cov_center: np.ndarray | None = None  # column means / sds used for age, weight
    cov_scale: np.ndarray | None = None

    def gamma_table(self, feature_names: Sequence[str]) -> pd.DataFrame:
        return pd.DataFrame(self.gamma_star, index=self.batches, columns=list(feature_names))

    def subset(self, cols) -> "ComBatFit":
        """Estimates for a subset of feature columns (per-feature steps are independent)."""
        cols = np.asarray(cols, dtype=int)
        return replace(
            self, alpha=self.alpha[cols], beta=self.beta[:, cols], sigma=self.sigma[cols],
            gamma_hat=self.gamma_hat[:, cols], delta_hat=self.delta_hat[:, cols],
            gamma_star=self.gamma_star[:, cols], delta_star=self.delta_star[:, cols],
        )

    def to_dict(self) -> dict:
        out = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in vars(self).items()}
        out["batches"] = list(self.batches)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ComBatFit":
        arr = {k: (None if d.get(k) is None else np.asarray(d[k], dtype=float))
               for k in ("alpha", "sigma", "gamma_hat", "delta_hat", "gamma_star", "delta_star", "cov_center", "cov_scale")}
        beta = np.asarray(d["beta"], dtype=float).reshape(-1, len(arr["alpha"]))
        return cls(list(d["batches"]), arr["alpha"], beta, arr["sigma"], arr["gamma_hat"], arr["delta_hat"],
                   arr["gamma_star"], arr["delta_star"], arr["cov_center"], arr["cov_scale"])


def _covariate_design(cov: np.ndarray | None, center=None, scale=None):
    """Gender stays 0/1; the other columns are z-scored."""
    if cov is None:
        return np.zeros((0, 0)), None, None
    cov = np.asarray(cov, dtype=float)
    if center is None:
        center = cov.mean(axis=0)
        scale = cov.std(axis=0)
        center[0], scale[0] = 0.0, 1.0
        scale = np.where(scale > 0, scale, 1.0)
    return (cov - center) / scale, center, scale


def _check(m: FeatureMatrix):
    if not np.all(np.isfinite(m.values)):
        raise SchemaError("missing or non-finite values in harmonization input")
    if m.covariates is not None and not np.all(np.isfinite(m.covariates)):
        raise SchemaError("missing covariate values")
    labels, counts = np.unique(m.center, return_counts=True)
    small = labels[counts < 2]
    if small.size:
        raise BatchSizeError(f"batch(es) with a single patient: {list(small)}")
    var = m.values.var(axis=0)
    flat = [m.feature_names[j] for j in np.nonzero(~(var > 0))[0]]
    if flat:
        raise DegenerateFeatureError(f"zero-variance feature(s): {flat[:5]}")


def _eb_nonparametric(z: np.ndarray, gamma_hat: np.ndarray, delta_hat: np.ndarray, leave_one_out: bool = False):
    """Posterior batch location/scale for every feature of one batch.

    ``z`` is (n_b, G). Weights are the likelihoods of feature g's batch data
    under N(gamma_hat_j, delta_hat_j) for each feature j; logs keep them finite.
    """
    n = z.shape[0]
    s1 = z.sum(axis=0)[:, None]
    s2 = (z * z).sum(axis=0)[:, None]
    g = gamma_hat[None, :]
    d = delta_hat[None, :]
    sq = s2 - 2.0 * g * s1 + n * g * g
    logl = -0.5 * n * np.log(2.0 * np.pi * d) - sq / (2.0 * d)
    if leave_one_out and logl.shape[1] > 1:
        np.fill_diagonal(logl, -np.inf)
    logw = logl - logsumexp(logl, axis=1, keepdims=True)
    w = np.exp(logw)
    return w @ gamma_hat, w @ delta_hat


def combat_fit(m: FeatureMatrix, leave_one_out: bool = False) -> ComBatFit:
    _check(m)
    y = m.values
    n, G = y.shape
    batches = sorted(set(m.center.tolist()))
    onehot = (m.center[:, None] == np.array(batches)[None, :]).astype(float)
    cov, c_center, c_scale = _covariate_design(m.covariates)
    design = np.hstack([onehot, cov]) if cov.size else onehot
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise DesignError("design matrix is singular (a batch is confounded with a covariate)")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    B = len(batches)
    n_b = onehot.sum(axis=0)
    alpha = (n_b / n) @ coef[:B]
    beta = coef[B:]
    resid = y - design @ coef
    dof = n - B
    if dof < 1:
        raise BatchSizeError("not enough patients for pooled variance")
    sigma = np.sqrt((resid ** 2).sum(axis=0) / dof)
    if np.any(~(sigma > 0)):
        bad = [m.feature_names[j] for j in np.nonzero(~(sigma > 0))[0]]
        raise DegenerateFeatureError(f"zero residual variance: {bad[:5]}")
    fixed = alpha + (cov @ beta if cov.size else 0.0)
    z = (y - fixed) / sigma

    gamma_hat = np.zeros((B, G))
    delta_hat = np.zeros((B, G))
    gamma_star = np.zeros((B, G))
    delta_star = np.zeros((B, G))
    for k in range(B):
        zb = z[onehot[:, k] > 0]
        gamma_hat[k] = zb.mean(axis=0)
        delta_hat[k] = zb.var(axis=0, ddof=1)
        if np.any(~(delta_hat[k] > 0)):
            raise DegenerateFeatureError(f"feature constant within batch {batches[k]}")
        gamma_star[k], delta_star[k] = _eb_nonparametric(zb, gamma_hat[k], delta_hat[k], leave_one_out)
    return ComBatFit(batches, alpha, beta, sigma, gamma_hat, delta_hat, gamma_star, delta_star, c_center, c_scale)


def combat_apply(fit: ComBatFit, m: FeatureMatrix) -> FeatureMatrix:
    """Harmonize rows of ``m`` with frozen estimates; every center must be known."""
    unknown = sorted(set(m.center.tolist()) - set(fit.batches))
    if unknown:
        raise DesignError(f"center(s) without fitted batch estimates: {unknown}")
    if m.covariates is not None and fit.cov_center is not None:
        cov, _, _ = _covariate_design(m.covariates, fit.cov_center, fit.cov_scale)
        fixed = fit.alpha + cov @ fit.beta
    else:
        fixed = np.broadcast_to(fit.alpha, m.values.shape)
    z = (m.values - fixed) / fit.sigma
    idx = np.array([fit.batches.index(c) for c in m.center], dtype=int)
    zs = (z - fit.gamma_star[idx]) / np.sqrt(fit.delta_star[idx])
    return replace(m, values=fit.sigma * zs + fixed)


def combat_harmonize(m: FeatureMatrix, leave_one_out: bool = False) -> FeatureMatrix:
    """Fit and apply ComBat on the same matrix; shape, order and names are kept."""
    return combat_apply(combat_fit(m, leave_one_out), m)


def concat_matrices(a: FeatureMatrix, b: FeatureMatrix) -> FeatureMatrix:
    if a.feature_names != b.feature_names:
        raise SchemaError("train and test feature names differ")
    overlap = set(a.patient_ids) & set(b.patient_ids)
    if overlap:
        raise SchemaError(f"patients present in both sets: {sorted(overlap)[:5]}")
    if (a.covariates is None) != (b.covariates is None):
        raise SchemaError("covariates given for only one of the sets")
    cov = None if a.covariates is None else np.vstack([a.covariates, b.covariates])
    return FeatureMatrix(a.patient_ids + b.patient_ids, a.feature_names, np.vstack([a.values, b.values]),
                         np.concatenate([a.center, b.center]), cov)


def joint_fit_transform(train: FeatureMatrix, test: FeatureMatrix, train_only: bool = False,
                        return_fit: bool = False):
    """Harmonize train and test together (or fit on train only) and split back.

    Joint mode is what the reference workflow did; it leaks test-center
    statistics into training. In train-only mode every test center must also
    appear in training.
    """
    if train_only:
        if train.feature_names != test.feature_names:
            raise SchemaError("train and test feature names differ")
        fit = combat_fit(train)
        out = combat_apply(fit, train), combat_apply(fit, test)
    else:
        both = concat_matrices(train, test)
        fit = combat_fit(both)
        both = combat_apply(fit, both)
        n = len(train.patient_ids)
        out = both.take(np.arange(n)), both.take(np.arange(n, len(both.patient_ids)))
    return (*out, fit) if return_fit else out
