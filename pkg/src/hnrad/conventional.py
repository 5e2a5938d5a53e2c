"""The ten conventional PET features computed from a predicted mask.

SUV-derived quantities use the union of primary tumour and nodal labels;
volume and diameter use the primary tumour only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import ndimage as ndi
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .errors import DegenerateValueWarning, EmptyROIError, GeometryError
from .volume import LabelMask, VoxelGrid, check_same_geometry

# sphere of 1 cm^3
PEAK_RADIUS_MM = (3.0 / (4.0 * math.pi)) ** (1.0 / 3.0) * 10.0
MTV_ABSOLUTE_SUV = 2.5
MTV_RELATIVE_FRACTION = 0.40


@dataclass
class ConventionalFeatures:
    tumor_volume_ml: float
    diameter_mm: float
    num_nodes: int
    suv_max: float
    suv_mean: float
    suv_peak: float
    mtv25_ml: float
    mtv40_ml: float
    tlg25: float
    tlg40: float

    @classmethod
    def names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)


FEATURE_NAMES = ConventionalFeatures.names()


def roi_union(mask: LabelMask) -> np.ndarray:
    """Boolean array of voxels labelled GTVp or GTVn."""
    roi = (mask.labels == 1) | (mask.labels == 2)
    if not roi.any():
        raise EmptyROIError("mask has no GTVp or GTVn voxels")
    return roi


def suv_statistics(pet: VoxelGrid, roi: np.ndarray) -> tuple[float, float]:
    if roi.shape != pet.geometry.dims:
        raise GeometryError("ROI and PET grids differ")
    vals = pet.values[roi]
    if vals.size == 0:
        raise EmptyROIError("empty ROI")
    return float(vals.max()), float(vals.mean())


def sphere_offsets(spacing, radius_mm: float = PEAK_RADIUS_MM) -> np.ndarray:
    """Integer voxel offsets whose centre lies within ``radius_mm`` of the origin."""
    spacing = np.asarray(spacing, dtype=float)
    reach = np.floor(radius_mm / spacing).astype(int)
    grids = np.meshgrid(*[np.arange(-r, r + 1) for r in reach], indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)
    d2 = ((offs * spacing) ** 2).sum(axis=1)
    return offs[d2 <= radius_mm ** 2 + 1e-9]


def sphere_mean_map(image: np.ndarray, spacing, radius_mm: float = PEAK_RADIUS_MM) -> np.ndarray:
    """Mean of ``image`` over a sphere around every voxel, clipped to the volume."""
    offs = sphere_offsets(spacing, radius_mm)
    reach = np.abs(offs).max(axis=0)
    kernel = np.zeros(tuple(2 * reach + 1))
    kernel[tuple((offs + reach).T)] = 1.0
    total = ndi.correlate(image.astype(float), kernel, mode="constant", cval=0.0)
    count = ndi.correlate(np.ones(image.shape), kernel, mode="constant", cval=0.0)
    return total / count


def max_sphere_mean(image: np.ndarray, roi: np.ndarray, spacing, radius_mm: float = PEAK_RADIUS_MM) -> float:
    """Largest sphere mean of ``image`` over the centres of ``roi`` voxels."""
    if not roi.any():
        raise EmptyROIError("empty ROI")
    spacing = np.asarray(spacing, dtype=float)
    # a window padded by one sphere reach sees every sphere voxel that lies in
    # the volume; zero padding outside the window then coincides with clipping
    reach = np.floor(radius_mm / spacing).astype(int)
    idx = np.argwhere(roi)
    lo = np.maximum(idx.min(axis=0) - reach, 0)
    hi = np.minimum(idx.max(axis=0) + reach + 1, roi.shape)
    win = tuple(slice(a, b) for a, b in zip(lo, hi))
    means = sphere_mean_map(image[win], spacing, radius_mm)
    return float(means[roi[win]].max())


def suv_peak(pet: VoxelGrid, roi: np.ndarray, radius_mm: float = PEAK_RADIUS_MM) -> float:
    """Maximum over ROI voxels of the 1 cm^3 sphere mean of PET values."""
    return max_sphere_mean(pet.values, roi, pet.geometry.spacing, radius_mm)


def mtv(pet: VoxelGrid, roi: np.ndarray, rule: str = "absolute", threshold: float | None = None):
    """Metabolic tumour volume (ml) and the thresholded sub-ROI.

    ``rule="absolute"`` keeps SUV >= 2.5; ``rule="relative"`` keeps
    SUV >= 0.40 * SUVmax of the ROI.
    """
    vals = pet.values
    if rule == "absolute":
        thr = MTV_ABSOLUTE_SUV if threshold is None else threshold
    elif rule == "relative":
        frac = MTV_RELATIVE_FRACTION if threshold is None else threshold
        thr = frac * vals[roi].max()
    else:
        raise ValueError(f"unknown MTV rule {rule!r}")
    sub = roi & (vals >= thr)
    volume_ml = sub.sum() * pet.geometry.voxel_volume_mm3 / 1000.0
    return float(volume_ml), sub


def tlg(pet: VoxelGrid, mtv_subroi: np.ndarray, volume_ml: float) -> float:
    if not mtv_subroi.any():
        return 0.0
    return float(volume_ml * pet.values[mtv_subroi].mean())


def max_diameter(points: np.ndarray) -> float:
    """Largest pairwise Euclidean distance among ``points`` (n, 3)."""
    if len(points) < 2:
        return 0.0
    candidates = points
    if len(points) > 4:
        try:
            candidates = points[ConvexHull(points).vertices]
        except QhullError:
            candidates = points  # coplanar / collinear sets
    if len(candidates) > 6000:
        best = 0.0
        for start in range(0, len(candidates), 2000):
            block = candidates[start:start + 2000]
            d = np.sqrt(((block[:, None, :] - candidates[None, :, :]) ** 2).sum(-1))
            best = max(best, float(d.max()))
        return best
    return float(pdist(candidates).max())


def tumor_geometry(mask: LabelMask) -> tuple[float, float]:
    """Primary tumour volume (ml) and 3D maximum diameter (mm)."""
    gtvp = mask.labels == 1
    if not gtvp.any():
        raise EmptyROIError("mask has no GTVp voxels")
    volume_ml = gtvp.sum() * mask.geometry.voxel_volume_mm3 / 1000.0
    # the farthest pair always lies on the boundary
    boundary = gtvp & ~ndi.binary_erosion(gtvp, structure=np.ones((3, 3, 3)), border_value=0)
    points = mask.geometry.world(np.argwhere(boundary))
    return float(volume_ml), max_diameter(points)


def count_nodes(mask: LabelMask, connectivity: int = 26) -> int:
    nodes = mask.labels == 2
    if not nodes.any():
        return 0
    rank = {6: 1, 18: 2, 26: 3}[connectivity]
    _, n = ndi.label(nodes, structure=ndi.generate_binary_structure(3, rank))
    return int(n)


def extract_conventional(pet: VoxelGrid, mask: LabelMask, connectivity: int = 26) -> ConventionalFeatures:
    """All ten features; a missing GTVp yields NaN volume and diameter with a warning."""
    check_same_geometry(pet.geometry, mask.geometry)
    roi = roi_union(mask)
    try:
        volume_ml, diameter = tumor_geometry(mask)
    except EmptyROIError:
        warnings.warn("no GTVp voxels: tumour volume and diameter recorded as missing",
                      DegenerateValueWarning, stacklevel=2)
        volume_ml, diameter = math.nan, math.nan
    smax, smean = suv_statistics(pet, roi)
    m25, sub25 = mtv(pet, roi, "absolute")
    m40, sub40 = mtv(pet, roi, "relative")
    return ConventionalFeatures(
        tumor_volume_ml=volume_ml,
        diameter_mm=diameter,
        num_nodes=count_nodes(mask, connectivity),
        suv_max=smax,
        suv_mean=smean,
        suv_peak=suv_peak(pet, roi),
        mtv25_ml=m25,
        mtv40_ml=m40,
        tlg25=tlg(pet, sub25, m25),
        tlg40=tlg(pet, sub40, m40),
    )
