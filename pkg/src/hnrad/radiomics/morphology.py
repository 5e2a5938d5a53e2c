"""Shape features from a marching-cubes mesh of the binary ROI."""

from __future__ import annotations

import math

import numpy as np
from skimage import measure

from ..conventional import max_diameter


def _mesh(roi: np.ndarray, spacing):
    padded = np.pad(roi.astype(float), 1)
    verts, faces, _, _ = measure.marching_cubes(padded, level=0.5, spacing=tuple(spacing))
    return verts, faces


def mesh_volume(verts: np.ndarray, faces: np.ndarray) -> float:
    """Absolute signed volume of a closed triangle mesh."""
    tri = verts[faces]
    signed = np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2])).sum() / 6.0
    return abs(float(signed))


def _voxel_faces_area(roi: np.ndarray, spacing) -> float:
    """Area of the exposed voxel faces (face-counting surface)."""
    sx, sy, sz = spacing
    face_area = (sy * sz, sx * sz, sx * sy)
    padded = np.pad(roi, 1)
    area = 0.0
    for axis in range(3):
        area += np.count_nonzero(np.diff(padded.astype(np.int8), axis=axis)) * face_area[axis]
    return area


def morphology_features(roi: np.ndarray, spacing=(2.0, 2.0, 2.0)) -> tuple[dict[str, float], list[str]]:
    """Volume, surface and sphericity-type features of a boolean ROI.

    Single-voxel ROIs (and any mesh that comes out empty or flat) fall back to
    voxel counting for volume and exposed faces for area; this is flagged.
    """
    spacing = tuple(float(s) for s in spacing)
    flags: list[str] = []
    n = int(np.count_nonzero(roi))
    voxel_volume = n * float(np.prod(spacing))
    idx = np.argwhere(roi)
    sub = roi[tuple(slice(a, b + 1) for a, b in zip(idx.min(axis=0), idx.max(axis=0)))]

    volume = area = 0.0
    verts = None
    if n > 1:
        verts, faces = _mesh(sub, spacing)
        volume = mesh_volume(verts, faces)
        area = float(measure.mesh_surface_area(verts, faces))
    if volume <= 0 or area <= 0:
        volume, area = voxel_volume, _voxel_faces_area(sub, spacing)
        flags.append("Morphology:approximate_voxel_surface")

    disprop = area / (36.0 * math.pi * volume ** 2) ** (1.0 / 3.0)
    f = {
        "volume": volume,
        "approx volume": voxel_volume,
        "surface area": area,
        "surface to volume ratio": area / volume,
        "compactness1": volume / (math.sqrt(math.pi) * area ** 1.5),
        "compactness2": 36.0 * math.pi * volume ** 2 / area ** 3,
        "spherical disproportion": disprop,
        "sphericity": 1.0 / disprop,
        "asphericity": disprop - 1.0,
    }
    if verts is not None:
        f["max 3d diameter"] = max_diameter(verts)
    else:
        f["max 3d diameter"] = float(np.linalg.norm(spacing))

    pts = idx * np.asarray(spacing)
    if n > 1:
        eig = np.sort(np.linalg.eigvalsh(np.cov(pts.T, bias=True)))[::-1]
        eig = np.clip(eig, 0.0, None)
    else:
        eig = np.zeros(3)
    f["major axis"] = 4.0 * math.sqrt(eig[0])
    f["minor axis"] = 4.0 * math.sqrt(eig[1])
    f["least axis"] = 4.0 * math.sqrt(eig[2])
    if eig[0] > 0:
        f["elongation"] = math.sqrt(eig[1] / eig[0])
        f["flatness"] = math.sqrt(eig[2] / eig[0])
    else:
        f["elongation"] = f["flatness"] = 1.0
        flags.append("Morphology-elongation:single_voxel")
    return f, flags
