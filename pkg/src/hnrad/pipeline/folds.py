from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .config import DEFAULT_SEED

HOLDOUT_CENTER = "MDA"
HOLDOUT_SIZE = 97
N_RANDOM_FOLDS = 4


@dataclass
class FoldAssignment:
    folds: dict[str, int]
    rng_seed: int

    def sizes(self) -> tuple[int, ...]:
        counts = pd.Series(self.folds).value_counts()
        return tuple(int(counts.get(k, 0)) for k in range(1, N_RANDOM_FOLDS + 2))

    def members(self, fold: int) -> list[str]:
        return [p for p, f in self.folds.items() if f == fold]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"fold": pd.Series(self.folds)}).rename_axis("patient_id")


def assign_folds(patient_ids, centers, seed: int = DEFAULT_SEED,
                 holdout_center: str = HOLDOUT_CENTER, holdout_size: int = HOLDOUT_SIZE) -> FoldAssignment:
    """Fold 5 is a seeded random draw of ``holdout_size`` patients from one
    center; everyone else is shuffled and split into folds 1-4 of near-equal size.
    """
    ids = [str(p) for p in patient_ids]
    centers = np.asarray(centers).astype(str)
    if len(set(ids)) != len(ids):
        raise ValueError("patient ids must be unique")
    rng = np.random.default_rng(seed)
    pool = np.array([i for i, c in zip(ids, centers) if c == holdout_center], dtype=object)
    k = min(holdout_size, len(pool))
    if k < holdout_size:
        warnings.warn(f"only {len(pool)} {holdout_center} patients; fold 5 takes all of them", UserWarning, stacklevel=2)
    held = set(rng.choice(pool, size=k, replace=False).tolist()) if k else set()
    rest = np.array([i for i in ids if i not in held], dtype=object)
    rest = rest[rng.permutation(len(rest))]
    folds = {p: N_RANDOM_FOLDS + 1 for p in held}
    for f, part in enumerate(np.array_split(rest, N_RANDOM_FOLDS), start=1):
        for p in part:
            folds[str(p)] = f
    return FoldAssignment({p: folds[p] for p in ids}, seed)
