"""Per-patient locate -> crop -> extract, isolated so one bad case never stops a batch."""

from __future__ import annotations

import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import pandas as pd

from ..conventional import extract_conventional
from ..errors import PipelineError
from ..locator import locate
from ..radiomics import extract_all
from ..volume import crop_to_box, load_volume
from .config import PipelineConfig, write_csv, write_json
from .manifest import PatientEntry


@dataclass
class PatientOutcome:
    patient_id: str
    conventional: Optional[dict] = None
    radiomics: Optional[dict] = None
    locator: Optional[dict] = None
    stage: Optional[str] = None
    error: Optional[str] = None
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class BatchResult:
    conventional: pd.DataFrame
    radiomics: pd.DataFrame
    failures: pd.DataFrame
    locator: dict


def process_patient(entry: PatientEntry, config: PipelineConfig) -> PatientOutcome:
    out = PatientOutcome(entry.patient_id)
    stage = "load"
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            pet = load_volume(entry.pet, "scalar")
            ct = load_volume(entry.ct, "scalar")
            mask = load_volume(entry.mask, "mask")
            stage = "locate"
            loc = locate(pet, ct, mask, config.suv_threshold, config.top_fraction, entry.override_center)
            out.locator = loc.to_dict()
            if loc.mode == "failed":
                failed = [n for n, p in loc.checks if not p]
                raise PipelineError("locate", f"automatic localization failed ({', '.join(failed)}); manual override needed")
            stage = "crop"
            s = config.crop_spacing_mm
            pet_c = crop_to_box(pet, loc.box, s)
            ct_c = crop_to_box(ct, loc.box, s)
            mask_c = crop_to_box(mask, loc.box, s)
            stage = "conventional"
            out.conventional = extract_conventional(pet_c, mask_c).to_dict()
            stage = "radiomics"
            rad = extract_all(pet_c, ct_c, mask_c, config.n_bins, config.radiomics_spacing_mm)
            out.radiomics = rad.features
        out.warnings = [str(w.message) for w in caught]
    except Exception as exc:  # isolation: every per-patient error is recorded, never raised
        out.stage = exc.stage if isinstance(exc, PipelineError) else stage
        out.error = f"{type(exc).__name__}: {exc}"
        out.warnings.append(traceback.format_exc(limit=2))
    return out


def batch_extract(entries: list[PatientEntry], config: PipelineConfig = PipelineConfig(),
                  out_dir=None) -> BatchResult:
    """Process every patient, in manifest order, with ``config.workers`` processes."""
    if not entries:
        raise PipelineError("batch", "empty manifest")
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(process_patient, entries, [config] * len(entries)))
    else:
        outcomes = [process_patient(e, config) for e in entries]

    ok = [o for o in outcomes if o.ok]
    conv = pd.DataFrame([o.conventional for o in ok], index=pd.Index([o.patient_id for o in ok], name="patient_id"))
    rad = pd.DataFrame([o.radiomics for o in ok], index=pd.Index([o.patient_id for o in ok], name="patient_id"))
    fails = pd.DataFrame(
        [{"patient_id": o.patient_id, "stage": o.stage, "error": o.error} for o in outcomes if not o.ok],
        columns=["patient_id", "stage", "error"],
    ).set_index("patient_id")
    locator = {o.patient_id: o.locator for o in outcomes}
    result = BatchResult(conv, rad, fails, locator)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "conventional.csv", conv, config)
        write_csv(out / "radiomics.csv", rad, config)
        write_csv(out / "failures.csv", fails, config)
        write_json(out / "locator.json", {"patients": locator}, config)
    return result
