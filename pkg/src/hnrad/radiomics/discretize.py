from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyROIError


@dataclass(frozen=True)
class DiscretizedROI:
    """Grey levels on a cropped grid.

    ``levels`` holds 1..n_bins inside the ROI and 0 outside; the array is
    padded so that every ROI voxel has a full 26-neighbourhood inside it.
    """

    levels: np.ndarray
    n_bins: int
    spacing: tuple[float, float, float] = (2.0, 2.0, 2.0)

    @property
    def roi(self) -> np.ndarray:
        return self.levels > 0

    @property
    def n_voxels(self) -> int:
        return int(np.count_nonzero(self.levels))


def discretize_fbn(values, n_bins: int = 64) -> np.ndarray:
    """Fixed-bin-number discretization of ROI intensities to levels 1..n_bins."""
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise EmptyROIError("cannot discretize an empty ROI")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.ones(x.shape, dtype=np.int64)
    lev = np.floor(n_bins * (x - lo) / (hi - lo)).astype(np.int64) + 1
    return np.minimum(lev, n_bins)


def discretize_roi(image: np.ndarray, roi: np.ndarray, n_bins: int = 64, spacing=(2.0, 2.0, 2.0)) -> DiscretizedROI:
    """Discretize ``image`` over the boolean ``roi`` and crop to its padded bounding box."""
    if not roi.any():
        raise EmptyROIError("empty ROI")
    idx = np.argwhere(roi)
    lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
    win = tuple(slice(a, b) for a, b in zip(lo, hi))
    sub_roi = roi[win]
    levels = np.zeros(sub_roi.shape, dtype=np.int64)
    levels[sub_roi] = discretize_fbn(image[win][sub_roi], n_bins)
    return from_levels(levels, n_bins, spacing)


def from_levels(levels: np.ndarray, n_bins: int, spacing=(2.0, 2.0, 2.0)) -> DiscretizedROI:
    """Wrap an already-discretized array (0 = outside ROI), adding the 1-voxel pad."""
    levels = np.asarray(levels, dtype=np.int64)
    if levels.min() < 0 or levels.max() > n_bins:
        raise ValueError("levels must lie in 0..n_bins")
    return DiscretizedROI(np.pad(levels, 1), int(n_bins), tuple(float(s) for s in spacing))
