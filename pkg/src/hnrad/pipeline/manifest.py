"""Clinical table and image manifest ingestion."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from ..errors import SchemaError

CLINICAL_COLUMNS = ("patient_id", "center", "gender", "age", "weight", "rfs_time", "rfs_event")
IMAGE_COLUMNS = ("patient_id", "pet", "ct", "mask")


def validate_clinical(df: pd.DataFrame, require_survival: bool = False) -> pd.DataFrame:
    """Check the fixed schema; returns a copy indexed by patient_id.

    Survival columns may be blank (test patients). Extra columns are dropped
    with a warning.
    """
    df = df.reset_index() if df.index.name == "patient_id" else df.copy()
    missing = [c for c in CLINICAL_COLUMNS[:5] if c not in df.columns]
    if missing:
        raise SchemaError(f"clinical table missing columns: {missing}")
    for c in ("rfs_time", "rfs_event"):
        if c not in df.columns:
            df[c] = np.nan
    extra = [c for c in df.columns if c not in CLINICAL_COLUMNS]
    if extra:
        warnings.warn(f"ignoring extra clinical columns: {extra}", UserWarning, stacklevel=2)
        df = df.drop(columns=extra)
    df["patient_id"] = df["patient_id"].astype(str)
    if df["patient_id"].duplicated().any():
        raise SchemaError(f"duplicate patient ids: {df.loc[df['patient_id'].duplicated(), 'patient_id'].tolist()[:5]}")
    df["center"] = df["center"].astype(str)
    if not set(pd.unique(df["gender"].dropna())) <= {0, 1}:
        raise SchemaError("gender must be encoded 0/1")
    has_time = df["rfs_time"].notna()
    if (df.loc[has_time, "rfs_time"] <= 0).any():
        raise SchemaError("rfs_time must be > 0")
    if not set(pd.unique(df.loc[has_time, "rfs_event"])) <= {0, 1, True, False}:
        raise SchemaError("rfs_event must be 0/1")
    if require_survival and not has_time.all():
        raise SchemaError("survival missing for some patients")
    return df.set_index("patient_id")[list(CLINICAL_COLUMNS[1:])]


def load_clinical(path, require_survival: bool = False) -> pd.DataFrame:
    df = pd.read_csv(path, comment="#", dtype={"patient_id": str, "center": str})
    return validate_clinical(df, require_survival)


@dataclass
class PatientEntry:
    patient_id: str
    center: str
    pet: Path
    ct: Path
    mask: Path
    truth: Optional[Path] = None
    override_center: Optional[tuple[float, float, float]] = None


def load_manifest(path, check_files: bool = True) -> list[PatientEntry]:
    """Image manifest CSV: patient_id, center, pet, ct, mask[, truth, override_x/y/z].

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path)
    df = pd.read_csv(path, comment="#", dtype=str).fillna("")
    missing = [c for c in IMAGE_COLUMNS if c not in df.columns]
    if missing:
        raise SchemaError(f"manifest missing columns: {missing}")
    if df["patient_id"].duplicated().any():
        raise SchemaError("duplicate patient ids in manifest")
    base = path.parent
    entries = []
    for row in df.to_dict("records"):
        def p(col):
            v = row.get(col, "")
            return (base / v) if v else None
        override = None
        if all(row.get(f"override_{a}", "") for a in "xyz"):
            override = tuple(float(row[f"override_{a}"]) for a in "xyz")
        e = PatientEntry(str(row["patient_id"]), str(row.get("center", "")), p("pet"), p("ct"), p("mask"),
                         p("truth"), override)
        if check_files:
            absent = [str(f) for f in (e.pet, e.ct, e.mask, e.truth) if f is not None and not f.exists()]
            if absent:
                raise SchemaError(f"{e.patient_id}: missing files {absent}")
        entries.append(e)
    return entries


def survival_arrays(clinical: pd.DataFrame, ids) -> tuple[np.ndarray, np.ndarray]:
    sub = clinical.loc[list(ids)]
    return sub["rfs_time"].to_numpy(dtype=float), sub["rfs_event"].to_numpy(dtype=float).astype(bool)
