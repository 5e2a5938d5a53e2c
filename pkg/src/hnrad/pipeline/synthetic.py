"""Generators for synthetic phantoms and survival cohorts used in tests and demos."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from ..conventional import FEATURE_NAMES as CONVENTIONAL_NAMES
from ..volume import GridGeometry, LabelMask, VoxelGrid, save_volume

CENTERS = ("CHUM", "CHUS", "HGJ", "HMR", "CHUP", "CHUV", "MDA")


@dataclass
class Phantom:
    pet: VoxelGrid
    ct: VoxelGrid
    mask: LabelMask
    brain_center_mm: np.ndarray
    brain_radii_mm: np.ndarray
    expected_pole_mm: np.ndarray  # exact mean of the lowest brain slice


def _ellipsoid(world: np.ndarray, center, radii) -> np.ndarray:
    d = (world - np.asarray(center)) / np.asarray(radii)
    return (d ** 2).sum(axis=-1) <= 1.0


def make_phantom(seed: int, dims=(64, 64, 96), spacing=(4.0, 4.0, 3.0)) -> Phantom:
    """Head-and-neck PET/CT phantom with a hot brain blob at a random position.

    The brain sits inside the superior slices; a primary tumour and one node
    are placed below and anterior of it so they fall inside the standard box.
    """
    rng = np.random.default_rng(seed)
    geo = GridGeometry(dims, spacing, origin=(-(dims[0] - 1) * spacing[0] / 2, -(dims[1] - 1) * spacing[1] / 2, 0.0))
    idx = np.stack(np.meshgrid(*[np.arange(d) for d in dims], indexing="ij"), axis=-1)
    world = geo.world(idx)
    top = (dims[2] - 1) * spacing[2]
    radii = np.array([rng.uniform(45, 60), rng.uniform(55, 70), rng.uniform(30, 38)])
    # keep the whole blob inside the superior 30% of slices, where the locator searches
    slab_bottom = (dims[2] - math.ceil(0.3 * dims[2])) * spacing[2] + 1.0
    room = top - slab_bottom - 2 * radii[2]
    center = np.array([rng.uniform(-20, 20), rng.uniform(-20, 20), top - radii[2] - rng.uniform(0.1, 0.9) * room])

    body = _ellipsoid(world[..., :2], (0.0, 0.0), (110.0, 110.0))
    pet = np.where(body, 1.0, 0.0) + rng.normal(0, 0.05, dims)
    pet = np.clip(pet, 0, None)
    brain = _ellipsoid(world, center, radii)
    pet[brain] = 8.0
    ct = np.where(body, 40.0, -1000.0) + rng.normal(0, 5, dims)

    lowest_z = world[..., 2][brain].min()
    pole = world[brain & np.isclose(world[..., 2], lowest_z)].mean(axis=0)

    labels = np.zeros(dims, dtype=np.uint8)
    t_center = pole + np.array([rng.uniform(-10, 10), 30 + rng.uniform(-10, 10), -30 - rng.uniform(10, 30)])
    tumour = _ellipsoid(world, t_center, (12.0, 12.0, 12.0))
    n_center = t_center + np.array([rng.choice([-1, 1]) * 30.0, -10.0, -15.0])
    node = _ellipsoid(world, n_center, (7.0, 7.0, 7.0))
    labels[node] = 2
    labels[tumour] = 1
    # a graded hot lesion so MTV thresholds cut at different levels
    r = np.linalg.norm(world - t_center, axis=-1)
    pet[tumour] = 4.0 + 8.0 * np.clip(1 - r[tumour] / 12.0, 0, 1)
    pet[node] = 3.0
    ct[tumour | node] = 60.0
    return Phantom(VoxelGrid(geo, pet), VoxelGrid(geo, ct), LabelMask(geo, labels), center, radii, pole)


def write_phantom_batch(out_dir, seeds: Sequence[int], centers: Sequence[str] | None = None) -> Path:
    """Write NIfTI phantoms and an image manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, seed in enumerate(seeds):
        pid = f"P{seed:04d}"
        ph = make_phantom(seed)
        for name, grid in (("pet", ph.pet), ("ct", ph.ct), ("mask", ph.mask)):
            save_volume(grid, out / f"{pid}_{name}.nii.gz")
        rows.append({"patient_id": pid, "center": (centers[k] if centers else "MDA"),
                     "pet": f"{pid}_pet.nii.gz", "ct": f"{pid}_ct.nii.gz", "mask": f"{pid}_mask.nii.gz"})
    manifest = out / "manifest.csv"
    pd.DataFrame(rows).to_csv(manifest, index=False)
    return manifest


@dataclass
class SyntheticCohort:
    features: pd.DataFrame  # index patient_id
    clinical: pd.DataFrame  # index patient_id, fixed schema
    signal: tuple[str, ...]
    linear_predictor: np.ndarray


def synthetic_cohort(
    n: int = 500,
    n_radiomics: int = 30,
    signal: Sequence[str] = ("rad_000", "rad_001"),
    beta: Sequence[float] = (1.5, 1.5),
    centers: Sequence[str] = CENTERS,
    center_weights: Sequence[float] | None = None,
    shift_sd: float = 1.0,
    scale_sd: float = 0.2,
    censor_fraction: float = 0.3,
    seed: int = 0,
) -> SyntheticCohort:
    """Patients with a known proportional-hazards signal and center effects.

    Every feature is built from a standard-normal latent value. Radiomics
    columns (``rad_###``) receive a per-center shift and scale; conventional
    columns do not. Hazard is ``exp(sum beta_k * latent_k)`` over the ``signal``
    columns, so ComBat has to undo the center effects to recover the signal.
    """
    rng = np.random.default_rng(seed)
    centers = list(centers)
    w = np.ones(len(centers)) if center_weights is None else np.asarray(center_weights, float)
    center = rng.choice(centers, size=n, p=w / w.sum())
    ids = [f"S{i:04d}" for i in range(n)]

    rad_names = [f"rad_{k:03d}" for k in range(n_radiomics)]
    names = list(CONVENTIONAL_NAMES) + rad_names
    latent = rng.normal(size=(n, len(names)))
    # mild redundancy between neighbouring noise features
    for j in range(1, len(names)):
        if names[j] not in signal and names[j - 1] not in signal and j % 3 == 0:
            latent[:, j] = 0.8 * latent[:, j - 1] + 0.6 * latent[:, j]

    values = latent.copy()
    shifts = rng.normal(0, shift_sd, size=(len(centers), n_radiomics))
    scales = np.exp(rng.normal(0, scale_sd, size=(len(centers), n_radiomics)))
    ci = np.array([centers.index(c) for c in center])
    rad = slice(len(CONVENTIONAL_NAMES), len(names))
    values[:, rad] = latent[:, rad] * scales[ci] + shifts[ci]
    conv = values[:, : len(CONVENTIONAL_NAMES)]
    values[:, : len(CONVENTIONAL_NAMES)] = 10.0 + 2.0 * conv
    nn = CONVENTIONAL_NAMES.index("num_nodes")
    if CONVENTIONAL_NAMES[nn] not in signal:
        values[:, nn] = rng.poisson(2, size=n)

    lp = np.zeros(n)
    for name, b in zip(signal, beta):
        lp += b * latent[:, names.index(name)]
    t_event = rng.exponential(1.0 / np.exp(lp))
    horizon = np.quantile(t_event, 1 - censor_fraction)
    t_censor = rng.uniform(0, 2 * horizon, size=n)
    time = np.minimum(t_event, t_censor)
    event = (t_event <= t_censor).astype(int)
    time = np.maximum(time, 1e-6) * 1000.0  # days-like scale, strictly positive

    features = pd.DataFrame(values, index=pd.Index(ids, name="patient_id"), columns=names)
    clinical = pd.DataFrame(
        {
            "center": center,
            "gender": rng.binomial(1, 0.8, size=n),
            "age": np.round(rng.normal(61, 9, size=n), 1),
            "weight": np.round(rng.normal(80, 16, size=n), 1),
            "rfs_time": time,
            "rfs_event": event,
        },
        index=pd.Index(ids, name="patient_id"),
    )
    return SyntheticCohort(features, clinical, tuple(signal), lp)


def fold_manifest(n: int = 489, n_mda: int = 197, seed: int = 0) -> pd.DataFrame:
    """Clinical-style table with a fixed number of MDA patients."""
    rng = np.random.default_rng(seed)
    others = [c for c in CENTERS if c != "MDA"]
    center = np.array(["MDA"] * n_mda + list(rng.choice(others, size=n - n_mda)))
    center = center[rng.permutation(n)]
    return pd.DataFrame({"patient_id": [f"T{i:04d}" for i in range(n)], "center": center})
