from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyROIError
from ..volume import LabelMask, VoxelGrid, check_same_geometry, resample
from .discretize import discretize_roi
from .intensity import (
    global_intensity_peak,
    histogram_features,
    local_intensity_peak,
    statistics_features,
)
from .morphology import morphology_features
from .texture import texture_features

MODALITIES = ("PET", "CT")
DEFAULT_BINS = 64
DEFAULT_SPACING_MM = 2.0


@dataclass
class RadiomicsResult:
    features: dict[str, float]
    flags: list[str] = field(default_factory=list)


def prepare_roi(image: VoxelGrid, mask: LabelMask, spacing: float = DEFAULT_SPACING_MM):
    """Resample image (linear) and mask (nearest) to isotropic ``spacing``.

    Returns the resampled image and the boolean union ROI of labels 1 and 2.
    """
    check_same_geometry(image.geometry, mask.geometry)
    img = resample(image, (spacing,) * 3, "linear")
    lab = resample(mask, (spacing,) * 3, "nearest")
    roi = (lab.labels == 1) | (lab.labels == 2)
    if not roi.any():
        raise EmptyROIError("ROI vanished after resampling")
    return img, roi


def modality_features(image: np.ndarray, roi: np.ndarray, spacing, n_bins: int) -> tuple[dict[str, float], list[str]]:
    """Every family for one modality, keyed ``<family>-<feature>``."""
    out: dict[str, float] = {}
    flags: list[str] = []
    values = image[roi]

    def put(family, feats):
        for k, v in feats.items():
            out[f"{family}-{k}"] = float(v)

    morph, fl = morphology_features(roi, spacing)
    put("Morphology", morph)
    flags += fl
    stats, fl = statistics_features(values)
    put("Statistic", stats)
    flags += fl
    disc = discretize_roi(image, roi, n_bins, spacing)
    hist, fl = histogram_features(disc.levels[disc.roi], n_bins)
    put("IH", hist)
    flags += fl
    put("Local", {
        "peak": local_intensity_peak(image, roi, spacing),
        "gpeak": global_intensity_peak(image, roi, spacing),
    })
    tex, fl = texture_features(disc)
    for family, feats in tex.items():
        put(family, feats)
    flags += fl
    return out, flags


def extract_all(
    pet: VoxelGrid,
    ct: VoxelGrid,
    mask: LabelMask,
    n_bins: int = DEFAULT_BINS,
    spacing: float = DEFAULT_SPACING_MM,
) -> RadiomicsResult:
    """PET and CT radiomics from the GTVp+GTVn union treated as one region."""
    features: dict[str, float] = {}
    flags: list[str] = []
    for name, image in zip(MODALITIES, (pet, ct)):
        img, roi = prepare_roi(image, mask, spacing)
        feats, fl = modality_features(img.values, roi, img.geometry.spacing, n_bins)
        features.update({f"{name}-{k}": v for k, v in feats.items()})
        flags += [f"{name}-{f}" for f in fl]
    bad = [k for k, v in features.items() if not np.isfinite(v)]
    if bad:
        raise FloatingPointError(f"non-finite radiomics features: {bad}")
    return RadiomicsResult(features, flags)


def feature_names() -> list[str]:
    """The fixed, ordered list of emitted feature names."""
    roi = np.zeros((5, 5, 5), dtype=bool)
    roi[1:4, 1:4, 1:4] = True
    roi[2, 2, 4] = True
    image = np.arange(125, dtype=float).reshape(5, 5, 5)
    feats, _ = modality_features(image, roi, (2.0, 2.0, 2.0), 8)
    return [f"{m}-{k}" for m in MODALITIES for k in feats]
