"""Placement of the fixed 224 mm oropharyngeal bounding box from PET priors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage as ndi

from .errors import DetectionError
from .volume import BoundingBoxMM, LabelMask, VoxelGrid

BOX_SIZE_MM = (224.0, 224.0, 224.0)
SHIFT_INFERIOR_MM = 30.0
SHIFT_ANTERIOR_MM = 30.0

DEFAULT_SUV_THRESHOLD = 3.0
DEFAULT_TOP_FRACTION = 0.3


@dataclass
class BrainRegion:
    voxels: np.ndarray  # (n, 3) voxel indices
    lowest_mm: np.ndarray  # world position of the inferior pole


@dataclass
class ContainmentReport:
    passed: bool
    outside: dict[int, int]  # label -> number of voxels outside the box

    @property
    def failing_labels(self) -> list[int]:
        return [lab for lab, n in self.outside.items() if n > 0]


@dataclass
class SanityReport:
    passed: bool
    flags: list[str]


@dataclass
class LocatorResult:
    box: Optional[BoundingBoxMM]
    mode: str  # automatic | override | failed
    brain_lowest_mm: Optional[tuple[float, float, float]] = None
    checks: list[tuple[str, bool]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "box": None if self.box is None else {
                "center": list(self.box.center), "size": list(self.box.size),
            },
            "brain_lowest_mm": None if self.brain_lowest_mm is None else list(self.brain_lowest_mm),
            "checks": [{"name": n, "passed": p} for n, p in self.checks],
        }


def _structure(connectivity: int) -> np.ndarray:
    rank = {6: 1, 18: 2, 26: 3}[connectivity]
    return ndi.generate_binary_structure(3, rank)


def detect_brain(
    pet: VoxelGrid,
    suv_threshold: float = DEFAULT_SUV_THRESHOLD,
    top_fraction: float = DEFAULT_TOP_FRACTION,
) -> BrainRegion:
    """Largest 26-connected hot component within the superior slices.

    Only the superior ``top_fraction`` of axial slices are searched. The
    inferior pole is the mean world position of the component's voxels on its
    most inferior slice.
    """
    if not 0 < top_fraction <= 1:
        raise ValueError("top_fraction must be in (0, 1]")
    geo = pet.geometry
    axis, sign = geo.superior_axis()
    n_slices = geo.dims[axis]
    n_top = max(1, math.ceil(top_fraction * n_slices - 1e-9))
    region = np.zeros(geo.dims, dtype=bool)
    sl = [slice(None)] * 3
    sl[axis] = slice(n_slices - n_top, n_slices) if sign > 0 else slice(0, n_top)
    region[tuple(sl)] = True

    hot = region & (pet.values > suv_threshold)
    if not hot.any():
        raise DetectionError(f"no voxel above SUV {suv_threshold} in the superior slices")
    labels, n = ndi.label(hot, structure=_structure(26))
    sizes = np.bincount(labels.ravel())[1:]
    biggest = int(np.argmax(sizes)) + 1  # ties resolve to the lowest label id
    voxels = np.argwhere(labels == biggest)
    world = geo.world(voxels)
    z = world[:, 2]
    lowest = world[np.isclose(z, z.min(), atol=1e-6)].mean(axis=0)
    return BrainRegion(voxels=voxels, lowest_mm=lowest)


def place_box(brain_lowest_mm) -> BoundingBoxMM:
    """Box centre = brain pole moved 30 mm inferior (-z) and 30 mm anterior (+y)."""
    p = np.asarray(brain_lowest_mm, dtype=float)
    center = p + np.array([0.0, SHIFT_ANTERIOR_MM, -SHIFT_INFERIOR_MM])
    return BoundingBoxMM(tuple(center), BOX_SIZE_MM)


def validate_containment(box: BoundingBoxMM, mask: LabelMask) -> ContainmentReport:
    outside = {}
    for label in (1, 2):
        idx = np.argwhere(mask.labels == label)
        if len(idx) == 0:
            outside[label] = 0
            continue
        inside = box.contains(mask.geometry.world(idx))
        outside[label] = int((~inside).sum())
    return ContainmentReport(passed=all(v == 0 for v in outside.values()), outside=outside)


def sanity_check(pet: VoxelGrid, ct: VoxelGrid) -> SanityReport:
    p, c = pet.values, ct.values
    flags = []
    if not np.any(p):
        flags.append("pet_all_zero")
    if not np.any(c):
        flags.append("ct_all_zero")
    if np.any(p < 0):
        flags.append("pet_negative_values")
    if p.max() < 0.5:
        flags.append("pet_suv_max_below")
    if c.max() < -500 or c.min() > 500:
        flags.append("ct_range_implausible")
    return SanityReport(passed=not flags, flags=flags)


def override_box(center_mm) -> LocatorResult:
    box = BoundingBoxMM(tuple(float(c) for c in center_mm), BOX_SIZE_MM)
    return LocatorResult(box=box, mode="override")


def locate(
    pet: VoxelGrid,
    ct: VoxelGrid,
    mask: Optional[LabelMask] = None,
    suv_threshold: float = DEFAULT_SUV_THRESHOLD,
    top_fraction: float = DEFAULT_TOP_FRACTION,
    override_center=None,
) -> LocatorResult:
    """Run the full locate step for one patient.

    Any failed check marks the result ``failed`` so the patient is routed to
    manual override; the batch is never aborted.
    """
    if override_center is not None:
        return override_box(override_center)

    checks = []
    sanity = sanity_check(pet, ct)
    checks.append(("sanity", sanity.passed))
    checks.extend((f, False) for f in sanity.flags)
    try:
        brain = detect_brain(pet, suv_threshold, top_fraction)
    except DetectionError:
        checks.append(("brain_detected", False))
        return LocatorResult(box=None, mode="failed", checks=checks)
    checks.append(("brain_detected", True))
    box = place_box(brain.lowest_mm)
    ok = sanity.passed
    if mask is not None:
        report = validate_containment(box, mask)
        checks.append(("containment", report.passed))
        ok = ok and report.passed
    return LocatorResult(
        box=box,
        mode="automatic" if ok else "failed",
        brain_lowest_mm=tuple(float(v) for v in brain.lowest_mm),
        checks=checks,
    )
