"""3D volumes and label masks with physical-space geometry.

World coordinates follow the NIfTI RAS+ convention: +x right, +y anterior,
+z superior, all in mm. Every world-space computation goes through the
affine; raw indices are never compared across grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence, Union

import nibabel as nib
import numpy as np
from scipy import ndimage as ndi

from .errors import (
    DimensionalityError,
    GeometryError,
    LabelError,
    MethodError,
    VolumeFormatError,
)

VALID_LABELS = (0, 1, 2)
_ORTHO_TOL = 1e-4


@dataclass(frozen=True)
class GridGeometry:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(s) for s in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        orientation = np.array(self.orientation, dtype=float).reshape(3, 3)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise GeometryError(f"dims must be 3 positive integers, got {self.dims}")
        if len(spacing) != 3 or any(not s > 0 for s in spacing):
            raise GeometryError(f"spacing must be 3 positive reals, got {self.spacing}")
        norms = np.linalg.norm(orientation, axis=0)
        if np.any(np.abs(norms - 1.0) > _ORTHO_TOL):
            raise GeometryError("orientation columns must be unit vectors")
        if abs(np.linalg.det(orientation)) < 1e-8:
            raise GeometryError("orientation matrix is singular")
        orientation.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "orientation", orientation)

    @property
    def affine(self) -> np.ndarray:
        aff = np.eye(4)
        aff[:3, :3] = self.orientation * np.asarray(self.spacing)
        aff[:3, 3] = self.origin
        return aff

    @property
    def voxel_volume_mm3(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def extent_mm(self) -> np.ndarray:
        return np.asarray(self.dims) * np.asarray(self.spacing)

    def world(self, ijk) -> np.ndarray:
        """Map voxel indices (..., 3) to world mm (..., 3)."""
        ijk = np.asarray(ijk, dtype=float)
        return ijk @ self.affine[:3, :3].T + self.affine[:3, 3]

    def index(self, xyz) -> np.ndarray:
        """Map world mm (..., 3) to continuous voxel indices (..., 3)."""
        xyz = np.asarray(xyz, dtype=float)
        inv = np.linalg.inv(self.affine)
        return xyz @ inv[:3, :3].T + inv[:3, 3]

    def same_as(self, other: "GridGeometry", atol: float = 1e-5) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.affine, other.affine, atol=atol)
        )

    def superior_axis(self) -> tuple[int, int]:
        """Voxel axis most aligned with world +z, and its sign (+1 / -1)."""
        zrow = self.orientation[2]
        axis = int(np.argmax(np.abs(zrow)))
        return axis, int(np.sign(zrow[axis]))


@dataclass(frozen=True)
class VoxelGrid:
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.geometry.dims:
            raise GeometryError(
                f"values shape {values.shape} does not match dims {self.geometry.dims}"
            )
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class LabelMask:
    geometry: GridGeometry
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.shape != self.geometry.dims:
            raise GeometryError(
                f"labels shape {labels.shape} does not match dims {self.geometry.dims}"
            )
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise LabelError("mask labels must be integers")
        bad = np.setdiff1d(np.unique(labels), VALID_LABELS)
        if bad.size:
            raise LabelError(f"mask contains labels outside {{0,1,2}}: {bad.tolist()}")
        labels = labels.astype(np.uint8)
        object.__setattr__(self, "labels", labels)


Grid = Union[VoxelGrid, LabelMask]


@dataclass(frozen=True)
class BoundingBoxMM:
    center: tuple[float, float, float]
    size: tuple[float, float, float] = (224.0, 224.0, 224.0)

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "size", tuple(float(s) for s in self.size))
        if any(not s > 0 for s in self.size):
            raise GeometryError("box size must be positive")

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - np.asarray(self.size) / 2

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + np.asarray(self.size) / 2

    def contains(self, xyz) -> np.ndarray:
        xyz = np.asarray(xyz, dtype=float)
        return np.all((xyz >= self.lower) & (xyz <= self.upper), axis=-1)


def geometry_from_affine(affine: np.ndarray, dims: Sequence[int]) -> GridGeometry:
    affine = np.asarray(affine, dtype=float)
    rot = affine[:3, :3]
    spacing = np.linalg.norm(rot, axis=0)
    if np.any(spacing <= 0):
        raise VolumeFormatError("affine has a zero-length axis")
    return GridGeometry(
        dims=tuple(dims), spacing=tuple(spacing), origin=tuple(affine[:3, 3]),
        orientation=rot / spacing,
    )


def load_volume(path, kind: Literal["scalar", "mask"] = "scalar") -> Grid:
    """Read a 3D NIfTI-1 file as a VoxelGrid (``kind="scalar"``) or LabelMask.

    Scalar values are returned exactly as stored, without any intensity
    normalization. Mask values are rounded to the nearest integer and must
    lie in {0, 1, 2}.
    """
    path = Path(path)
    if not path.exists():
        raise VolumeFormatError(f"no such file: {path}")
    try:
        img = nib.load(str(path))
        data = np.asanyarray(img.dataobj)
    except Exception as exc:  # nibabel raises a zoo of types on bad input
        raise VolumeFormatError(f"cannot read {path}: {exc}") from exc
    if data.ndim > 3 and all(s == 1 for s in data.shape[3:]):
        data = data.reshape(data.shape[:3])
    if data.ndim != 3:
        raise DimensionalityError(f"{path}: expected a 3D volume, got {data.ndim}D")
    geometry = geometry_from_affine(img.affine, data.shape)
    if kind == "mask":
        labels = np.rint(np.asarray(data, dtype=float))
        if not np.all(np.isfinite(labels)):
            raise LabelError(f"{path}: mask contains non-finite values")
        return LabelMask(geometry, labels.astype(np.int64))
    values = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(values)):
        raise VolumeFormatError(f"{path}: volume contains NaN or Inf")
    return VoxelGrid(geometry, values)


def save_volume(grid: Grid, path) -> None:
    """Write a grid as NIfTI-1; scalars as float32, masks as uint8."""
    path = Path(path)
    if isinstance(grid, LabelMask):
        data = grid.labels.astype(np.uint8)
    else:
        data = grid.values.astype(np.float32)
    img = nib.Nifti1Image(data, grid.geometry.affine)
    img.set_qform(grid.geometry.affine, code=1)
    img.set_sform(grid.geometry.affine, code=1)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        nib.save(img, str(path))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _sample(grid: Grid, target: GridGeometry, method: str, fill_outside: bool) -> Grid:
    is_mask = isinstance(grid, LabelMask)
    if method not in ("linear", "nearest"):
        raise MethodError(f"unknown interpolation method {method!r}")
    if is_mask and method != "nearest":
        raise MethodError("label masks can only be resampled with nearest interpolation")
    # target index -> source index
    mapping = np.linalg.inv(grid.geometry.affine) @ target.affine
    matrix, offset = mapping[:3, :3], mapping[:3, 3]
    src = grid.labels if is_mask else grid.values
    order = 0 if method == "nearest" else 1
    out = ndi.affine_transform(
        src.astype(float), matrix, offset, output_shape=target.dims,
        order=order, mode="nearest",
    )
    if fill_outside:
        support = ndi.affine_transform(
            np.ones(grid.geometry.dims), matrix, offset, output_shape=target.dims,
            order=0, mode="grid-constant", cval=0.0,
        )
        out[support < 0.5] = 0.0
    if is_mask:
        return LabelMask(target, np.rint(out).astype(np.uint8))
    return VoxelGrid(target, out)


def resample(grid: Grid, target_spacing, method: str = "linear") -> Grid:
    """Resample onto a grid with ``target_spacing`` sharing origin and orientation.

    Output dims are ``ceil(extent / target_spacing)`` per axis, so the output
    covers the input extent; samples beyond the last input voxel center are
    clamped to the edge value.
    """
    spacing = np.broadcast_to(np.asarray(target_spacing, dtype=float), (3,))
    if np.any(spacing <= 0):
        raise GeometryError("target spacing must be positive")
    if isinstance(grid, LabelMask) and method != "nearest":
        raise MethodError("label masks can only be resampled with nearest interpolation")
    geo = grid.geometry
    ratio = geo.extent_mm / spacing
    dims = tuple(max(1, math.ceil(r - 1e-9)) for r in ratio)
    target = GridGeometry(dims, tuple(spacing), geo.origin, geo.orientation)
    return _sample(grid, target, method, fill_outside=False)


def box_geometry(box: BoundingBoxMM, out_spacing) -> GridGeometry:
    spacing = np.broadcast_to(np.asarray(out_spacing, dtype=float), (3,))
    size = np.asarray(box.size)
    counts = size / spacing
    if np.any(np.abs(counts - np.round(counts)) > 1e-6):
        raise GeometryError(f"box size {box.size} not divisible by spacing {tuple(spacing)}")
    dims = tuple(int(round(c)) for c in counts)
    origin = box.lower + spacing / 2
    return GridGeometry(dims, tuple(spacing), tuple(origin), np.eye(3))


def crop_to_box(grid: Grid, box: BoundingBoxMM, out_spacing=1.0, method: str | None = None) -> Grid:
    """Sample ``grid`` over a world-aligned box; outside the input is 0/background.

    ``method`` defaults to linear for scalar grids and nearest for masks.
    """
    if method is None:
        method = "nearest" if isinstance(grid, LabelMask) else "linear"
    target = box_geometry(box, out_spacing)
    return _sample(grid, target, method, fill_outside=True)


def check_same_geometry(a: GridGeometry, b: GridGeometry) -> None:
    if not a.same_as(b):
        raise GeometryError("grids do not share geometry")
