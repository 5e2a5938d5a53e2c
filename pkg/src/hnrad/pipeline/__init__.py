"""End-to-end orchestration: manifests, folds, batch extraction and model recipes."""

from .batch import BatchResult, PatientOutcome, batch_extract, process_patient
from .config import DEFAULT_SEED, PipelineConfig, read_csv, read_json, read_stamp, write_csv, write_json
from .folds import FoldAssignment, assign_folds
from .manifest import CLINICAL_COLUMNS, PatientEntry, load_clinical, load_manifest, validate_clinical
from .recipes import RECIPES, FitOutcome, ModelResult, fit_recipe, predict_from_dict, run_model, split_feature_sets

__all__ = [
    "BatchResult", "PatientOutcome", "batch_extract", "process_patient",
    "DEFAULT_SEED", "PipelineConfig", "read_csv", "read_json", "read_stamp", "write_csv", "write_json",
    "FoldAssignment", "assign_folds",
    "CLINICAL_COLUMNS", "PatientEntry", "load_clinical", "load_manifest", "validate_clinical",
    "RECIPES", "FitOutcome", "ModelResult", "fit_recipe", "predict_from_dict", "run_model", "split_feature_sets",
]
