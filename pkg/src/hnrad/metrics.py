"""Segmentation metrics: Dice, aggregated Dice, soft Dice and cross-entropy losses."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateValueWarning
from .volume import LabelMask, check_same_geometry

LABELS = (1, 2)
LOG_CLAMP = 1e-12


def _counts(pred: np.ndarray, truth: np.ndarray, label: int) -> tuple[int, int]:
    p = pred == label
    t = truth == label
    return int(np.count_nonzero(p & t)), int(np.count_nonzero(p) + np.count_nonzero(t))


def dice(pred: LabelMask, truth: LabelMask, label: int) -> float:
    """2|P and T| / (|P| + |T|); 1.0 when both are empty."""
    check_same_geometry(pred.geometry, truth.geometry)
    inter, total = _counts(pred.labels, truth.labels, label)
    if total == 0:
        return 1.0
    return 2.0 * inter / total


@dataclass
class DiceReport:
    per_case: list[dict[int, float]]
    aggregated: dict[int, float]
    mean_aggregated: float
    mean_per_case: dict[int, float] = field(default_factory=dict)
    case_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "aggregated": {str(k): v for k, v in self.aggregated.items()},
            "mean_aggregated": self.mean_aggregated,
            "mean_per_case": {str(k): v for k, v in self.mean_per_case.items()},
            "per_case": [
                {"case": cid, **{str(k): v for k, v in d.items()}}
                for cid, d in zip(self.case_ids or [str(i) for i in range(len(self.per_case))], self.per_case)
            ],
        }


def aggregated_dice(cases: Sequence[tuple[LabelMask, LabelMask]], labels: Sequence[int] = LABELS,
                    case_ids: Sequence[str] | None = None) -> DiceReport:
    """Sum intersections and sizes over all cases before dividing, per label."""
    if not cases:
        raise ValueError("at least one case is required")
    inter = {k: 0 for k in labels}
    total = {k: 0 for k in labels}
    per_case = []
    for pred, truth in cases:
        check_same_geometry(pred.geometry, truth.geometry)
        row = {}
        for k in labels:
            i, t = _counts(pred.labels, truth.labels, k)
            inter[k] += i
            total[k] += t
            row[k] = 1.0 if t == 0 else 2.0 * i / t
        per_case.append(row)
    # a label absent from every case is perfectly (trivially) segmented
    agg = {k: (2.0 * inter[k] / total[k] if total[k] else 1.0) for k in labels}
    mean_case = {k: float(np.mean([r[k] for r in per_case])) for k in labels}
    return DiceReport(per_case, agg, float(np.mean(list(agg.values()))), mean_case,
                      list(case_ids) if case_ids is not None else [])


def _validate_soft(u: np.ndarray, v: np.ndarray):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"probability shape {u.shape} != one-hot shape {v.shape}")
    if not np.allclose(u.sum(axis=0), 1.0, atol=1e-6):
        raise ValueError("class probabilities must sum to 1 per voxel")
    if not (np.all((v == 0) | (v == 1)) and np.all(v.sum(axis=0) == 1)):
        raise ValueError("ground truth must be one-hot")
    return u, v


def one_hot(labels: np.ndarray, n_classes: int = 3) -> np.ndarray:
    """(K, *shape) one-hot encoding of an integer label array."""
    labels = np.asarray(labels)
    return (np.arange(n_classes).reshape((-1,) + (1,) * labels.ndim) == labels[None]).astype(float)


def soft_dice_loss(u, v) -> float:
    """-(2/|K|) sum_k sum_i u_ik v_ik / (sum_i u_ik + sum_i v_ik).

    ``u`` and ``v`` have the class axis first. A class whose denominator is zero
    contributes 0 and raises a DegenerateValueWarning.
    """
    u, v = _validate_soft(u, v)
    K = u.shape[0]
    uf = u.reshape(K, -1)
    vf = v.reshape(K, -1)
    num = (uf * vf).sum(axis=1)
    den = uf.sum(axis=1) + vf.sum(axis=1)
    if np.any(den == 0):
        warnings.warn(f"classes {np.nonzero(den == 0)[0].tolist()} have zero denominator", DegenerateValueWarning, stacklevel=2)
    ratio = np.divide(num, den, out=np.zeros(K), where=den > 0)
    return float(-2.0 / K * ratio.sum())


def cross_entropy(u, v) -> float:
    """-(1/|I|) sum_i sum_k v_ik log u_ik, with log(0) clamped at log(1e-12)."""
    u, v = _validate_soft(u, v)
    K = u.shape[0]
    uf = u.reshape(K, -1)
    vf = v.reshape(K, -1)
    hit = vf > 0
    if np.any(uf[hit] < LOG_CLAMP):
        warnings.warn("zero probability on a true class; log clamped", DegenerateValueWarning, stacklevel=2)
    logs = np.log(np.maximum(uf[hit], LOG_CLAMP))
    return float(-logs.sum() / uf.shape[1])


def total_loss(u, v) -> float:
    """Soft Dice loss plus cross-entropy."""
    return soft_dice_loss(u, v) + cross_entropy(u, v)
