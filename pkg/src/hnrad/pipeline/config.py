"""Run configuration, its hash, and CSV/JSON artifacts stamped with both."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_SEED = 20220901


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = DEFAULT_SEED
    n_bins: int = 64
    radiomics_spacing_mm: float = 2.0
    crop_spacing_mm: float = 1.0
    suv_threshold: float = 3.0
    top_fraction: float = 0.3
    cindex_threshold: float = 0.50
    rho_max: float = 0.60
    lasso_folds: int = 5
    combat_mode: str = "joint"  # joint | train-only
    ridge_eps: float = 0.0
    refit: bool = True
    workers: int = 1

    def hash(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **changes) -> "PipelineConfig":
        known = {f.name for f in fields(self)}
        return PipelineConfig(**{**asdict(self), **{k: v for k, v in changes.items() if k in known and v is not None}})

    def stamp(self) -> dict:
        return {"config_hash": self.hash(), "seed": self.seed}


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload: dict, config: PipelineConfig | None = None) -> None:
    data = dict(payload)
    if config is not None:
        data.update(config.stamp())
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=False) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path, table: pd.DataFrame, config: PipelineConfig | None = None, index: bool = True) -> None:
    """CSV with an optional leading ``# config_hash=...; seed=...`` line."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if config is not None:
            fh.write(f"# config_hash={config.hash()}; seed={config.seed}\n")
        table.to_csv(fh, index=index, float_format="%.17g")


def read_csv(path, index_col="patient_id") -> pd.DataFrame:
    df = pd.read_csv(path, comment="#", dtype={"patient_id": str, "center": str})
    if index_col is not None and index_col in df.columns:
        df = df.set_index(index_col)
    return df


def read_stamp(path) -> dict:
    """Parse the stamp line of a CSV written by ``write_csv``; empty if absent."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith("#"):
        return {}
    out = {}
    for part in first[1:].split(";"):
        if "=" in part:
            k, v = part.strip().split("=", 1)
            out[k] = v
    return out
