"""Command-line entry point: ``hnrad <subcommand> [options]``.

Every option can also come from a TOML file passed with ``--config``. Top-level
keys apply to all subcommands; a table named after the subcommand (e.g.
``[fit]``) overrides them. Command-line flags win over the file. Keys use the
option's long name with underscores (``--out-dir`` -> ``out_dir``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import HnradError, SchemaError
from .pipeline.config import (
    DEFAULT_SEED,
    PipelineConfig,
    load_toml,
    read_csv,
    read_json,
    write_csv,
    write_json,
)

log = logging.getLogger("hnrad")

# options every subcommand needs after merging the config file
REQUIRED = {
    "locate": ["pet", "ct", "out"],
    "crop": ["image", "box", "out"],
    "extract-conventional": ["pet", "mask", "out"],
    "extract-radiomics": ["pet", "ct", "mask", "out"],
    "harmonize": ["features", "clinical", "out"],
    "folds": ["clinical", "out"],
    "fit": ["features", "clinical", "model", "out"],
    "predict": ["model", "features", "out"],
    "evaluate-seg": ["pred_dir", "truth_dir", "out"],
    "evaluate-prognosis": ["risks", "clinical", "out"],
    "batch-extract": ["manifest", "out_dir"],
    "synth-cohort": ["out_dir"],
}


def _triple(text: str) -> tuple[float, float, float]:
    parts = [float(v) for v in str(text).replace(" ", "").split(",")]
    if len(parts) == 1:
        parts *= 3
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected one value or three comma-separated values")
    return tuple(parts)


def _config(args) -> PipelineConfig:
    return PipelineConfig().replace(**vars(args))


def cmd_locate(args):
    from .locator import locate
    from .volume import load_volume

    pet = load_volume(args.pet, "scalar")
    ct = load_volume(args.ct, "scalar")
    mask = load_volume(args.mask, "mask") if args.mask else None
    cfg = _config(args)
    res = locate(pet, ct, mask, cfg.suv_threshold, cfg.top_fraction, args.override_center)
    write_json(args.out, res.to_dict(), cfg)
    if res.mode == "failed":
        log.warning("automatic localization failed: %s", [n for n, p in res.checks if not p])
        return 3
    return 0


def cmd_crop(args):
    from .volume import BoundingBoxMM, crop_to_box, load_volume, save_volume

    box_json = read_json(args.box)
    box = box_json.get("box", box_json)
    if box is None:
        raise SchemaError("box file holds no box (localization failed)")
    grid = load_volume(args.image, args.kind or "scalar")
    spacing = args.spacing or (1.0, 1.0, 1.0)
    out = crop_to_box(grid, BoundingBoxMM(box["center"], box.get("size", (224.0,) * 3)), spacing, args.method)
    save_volume(out, args.out)
    return 0


def cmd_extract_conventional(args):
    from .conventional import extract_conventional
    from .volume import load_volume

    feats = extract_conventional(load_volume(args.pet, "scalar"), load_volume(args.mask, "mask"))
    df = pd.DataFrame([feats.to_dict()], index=pd.Index([args.patient_id or "patient"], name="patient_id"))
    write_csv(args.out, df, _config(args))
    return 0


def cmd_extract_radiomics(args):
    from .radiomics import extract_all
    from .volume import load_volume

    cfg = _config(args)
    res = extract_all(load_volume(args.pet, "scalar"), load_volume(args.ct, "scalar"),
                      load_volume(args.mask, "mask"), cfg.n_bins, cfg.radiomics_spacing_mm)
    df = pd.DataFrame([res.features], index=pd.Index([args.patient_id or "patient"], name="patient_id"))
    write_csv(args.out, df, cfg)
    for f in res.flags:
        log.info("flag: %s", f)
    return 0


def cmd_harmonize(args):
    from .combat import FeatureMatrix, combat_harmonize, joint_fit_transform
    from .pipeline.manifest import load_clinical

    cfg = _config(args)
    clinical = load_clinical(args.clinical)
    train = FeatureMatrix.from_frames(read_csv(args.features), clinical.reset_index())
    mode = args.mode or "joint"
    if args.test_features:
        test = FeatureMatrix.from_frames(read_csv(args.test_features), clinical.reset_index())
        a, b = joint_fit_transform(train, test, train_only=(mode == "train-only"))
        write_csv(args.out, a.to_frame(), cfg)
        write_csv(args.out_test or Path(args.out).with_name("harmonized_test.csv"), b.to_frame(), cfg)
    else:
        if mode == "train-only":
            raise SchemaError("--mode train-only needs --test-features")
        write_csv(args.out, combat_harmonize(train).to_frame(), cfg)
    return 0


def cmd_folds(args):
    from .pipeline.folds import assign_folds
    from .pipeline.manifest import load_clinical

    cfg = _config(args)
    clinical = load_clinical(args.clinical)
    fa = assign_folds(clinical.index, clinical["center"], cfg.seed)
    write_csv(args.out, fa.to_frame(), cfg)
    log.info("fold sizes: %s", fa.sizes())
    return 0


def _load_features(paths) -> pd.DataFrame:
    if isinstance(paths, (str, Path)):
        paths = [paths]
    tables = [read_csv(p) for p in paths]
    return pd.concat(tables, axis=1) if len(tables) > 1 else tables[0]


def cmd_fit(args):
    from .pipeline.manifest import load_clinical
    from .pipeline.recipes import run_model

    cfg = _config(args)
    clinical = load_clinical(args.clinical)
    train = _load_features(args.features)
    test = _load_features(args.test_features) if args.test_features else None
    recipe = args.model.replace("-", "_")
    res = run_model(recipe, train, clinical, test, cfg, cross_validate=not args.no_cv)
    write_json(args.out, res.to_dict(), cfg)
    if args.risks_out:
        write_csv(args.risks_out, res.risks_frame(), cfg)
    log.info("selected %s; mean CV C-index %.4f; test C-index %s",
             res.model.feature_names, res.mean_cv_cindex, res.test_cindex)
    return 0


def cmd_predict(args):
    from .pipeline.manifest import load_clinical
    from .pipeline.recipes import predict_from_dict

    cfg = _config(args)
    clinical = load_clinical(args.clinical) if args.clinical else None
    risks = predict_from_dict(read_json(args.model), _load_features(args.features), clinical)
    write_csv(args.out, risks.to_frame(), cfg)
    return 0


def _mask_files(directory) -> dict[str, Path]:
    out = {}
    for p in sorted(Path(directory).iterdir()):
        name = p.name
        for ext in (".nii.gz", ".nii"):
            if name.endswith(ext):
                out[name[: -len(ext)]] = p
    return out


def cmd_evaluate_seg(args):
    from .metrics import aggregated_dice
    from .volume import load_volume

    pred = _mask_files(args.pred_dir)
    truth = _mask_files(args.truth_dir)
    common = sorted(set(pred) & set(truth))
    unmatched = sorted(set(pred) ^ set(truth))
    if unmatched:
        log.warning("skipping unmatched cases: %s", unmatched)
    if not common:
        raise SchemaError("no case present in both directories")
    cases = [(load_volume(pred[c], "mask"), load_volume(truth[c], "mask")) for c in common]
    report = aggregated_dice(cases, case_ids=common)
    write_json(args.out, {**report.to_dict(), "unmatched": unmatched}, _config(args))
    return 0


def cmd_evaluate_prognosis(args):
    from .pipeline.manifest import load_clinical
    from .survival import concordance_index

    clinical = load_clinical(args.clinical)
    risks = read_csv(args.risks)
    ids = [p for p in risks.index if p in clinical.index and pd.notna(clinical.loc[p, "rfs_time"])]
    if not ids:
        raise SchemaError("no patient has both a risk and survival data")
    sub = clinical.loc[ids]
    c = concordance_index(risks.loc[ids, "risk"].to_numpy(dtype=float), sub["rfs_time"].to_numpy(dtype=float),
                          sub["rfs_event"].to_numpy(dtype=float).astype(bool))
    write_json(args.out, {"cindex": c, "n_patients": len(ids)}, _config(args))
    print(f"C-index: {c:.4f} (n={len(ids)})")
    return 0


def cmd_batch_extract(args):
    from .pipeline.batch import batch_extract
    from .pipeline.manifest import load_manifest

    cfg = _config(args)
    res = batch_extract(load_manifest(args.manifest), cfg, args.out_dir)
    print(f"{len(res.conventional)} patients extracted, {len(res.failures)} failed")
    for pid, row in res.failures.iterrows():
        print(f"  {pid}: [{row['stage']}] {row['error']}")
    return 0 if len(res.conventional) else 1


def cmd_synth_cohort(args):
    from .pipeline.synthetic import synthetic_cohort

    cfg = _config(args)
    n = args.n or 500
    cohort = synthetic_cohort(n=n, seed=cfg.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    test = set(rng.choice(cohort.features.index, size=n // 5, replace=False).tolist())
    is_test = cohort.features.index.isin(test)
    write_csv(out / "features_train.csv", cohort.features[~is_test], cfg)
    write_csv(out / "features_test.csv", cohort.features[is_test], cfg)
    write_csv(out / "clinical.csv", cohort.clinical, cfg)
    print(f"wrote {n} patients to {out} (signal features: {', '.join(cohort.signal)})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with option defaults")
    common.add_argument("--seed", type=int, help=f"random seed (default {DEFAULT_SEED})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="hnrad", description="Head-and-neck PET/CT radiomics and survival pipeline.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text)
        sp.set_defaults(func=func)
        return sp

    sp = add("locate", cmd_locate, "place the 224 mm box from the brain position")
    sp.add_argument("--pet")
    sp.add_argument("--ct")
    sp.add_argument("--mask", help="optional mask for the containment check")
    sp.add_argument("--override-center", type=_triple, help="manual box centre x,y,z in mm")
    sp.add_argument("--suv-threshold", type=float)
    sp.add_argument("--top-fraction", type=float)
    sp.add_argument("--out")

    sp = add("crop", cmd_crop, "crop and resample a volume to a box")
    sp.add_argument("--image")
    sp.add_argument("--kind", choices=["scalar", "mask"], help="default scalar")
    sp.add_argument("--box", help="JSON written by locate")
    sp.add_argument("--spacing", type=_triple, help="output spacing in mm (default 1)")
    sp.add_argument("--method", choices=["linear", "nearest"])
    sp.add_argument("--out")

    sp = add("extract-conventional", cmd_extract_conventional, "ten conventional PET features")
    sp.add_argument("--pet")
    sp.add_argument("--mask")
    sp.add_argument("--patient-id", help="row id (default patient)")
    sp.add_argument("--out")

    sp = add("extract-radiomics", cmd_extract_radiomics, "PET and CT radiomics features")
    sp.add_argument("--pet")
    sp.add_argument("--ct")
    sp.add_argument("--mask")
    sp.add_argument("--patient-id", help="row id (default patient)")
    sp.add_argument("--n-bins", "--bins", dest="n_bins", type=int)
    sp.add_argument("--radiomics-spacing-mm", "--spacing", dest="radiomics_spacing_mm", type=float)
    sp.add_argument("--out")

    sp = add("harmonize", cmd_harmonize, "non-parametric ComBat across centers")
    sp.add_argument("--features")
    sp.add_argument("--test-features")
    sp.add_argument("--clinical")
    sp.add_argument("--mode", choices=["joint", "train-only"], help="default joint")
    sp.add_argument("--out")
    sp.add_argument("--out-test")

    sp = add("folds", cmd_folds, "assign the five cross-validation folds")
    sp.add_argument("--clinical")
    sp.add_argument("--out")

    sp = add("fit", cmd_fit, "select features and fit a Cox model")
    sp.add_argument("--features", nargs="+", help="one or more feature CSVs joined on patient_id")
    sp.add_argument("--test-features", nargs="+")
    sp.add_argument("--clinical")
    sp.add_argument("--model", choices=["conventional", "radiomics-combat", "combined"])
    sp.add_argument("--cindex-threshold", type=float)
    sp.add_argument("--rho-max", type=float)
    sp.add_argument("--lasso-folds", type=int)
    sp.add_argument("--combat-mode", choices=["joint", "train-only"])
    sp.add_argument("--ridge-eps", type=float)
    sp.add_argument("--no-cv", action="store_true", help="skip the five-fold evaluation")
    sp.add_argument("--risks-out")
    sp.add_argument("--out")

    sp = add("predict", cmd_predict, "risk scores from a saved model")
    sp.add_argument("--model")
    sp.add_argument("--features", nargs="+")
    sp.add_argument("--clinical", help="needed for ComBat-harmonized models")
    sp.add_argument("--out")

    sp = add("evaluate-seg", cmd_evaluate_seg, "per-case and aggregated Dice")
    sp.add_argument("--pred-dir")
    sp.add_argument("--truth-dir")
    sp.add_argument("--out")

    sp = add("evaluate-prognosis", cmd_evaluate_prognosis, "C-index of risk scores")
    sp.add_argument("--risks")
    sp.add_argument("--clinical")
    sp.add_argument("--out")

    sp = add("batch-extract", cmd_batch_extract, "locate, crop and extract a whole manifest")
    sp.add_argument("--manifest")
    sp.add_argument("--out-dir")
    sp.add_argument("--workers", type=int)
    sp.add_argument("--crop-spacing-mm", type=float)
    sp.add_argument("--n-bins", type=int)
    sp.add_argument("--radiomics-spacing-mm", type=float)

    sp = add("synth-cohort", cmd_synth_cohort, "write a synthetic feature cohort for demos")
    sp.add_argument("--n", type=int, help="cohort size (default 500)")
    sp.add_argument("--out-dir")
    return p


def _all_option_names(parser: argparse.ArgumentParser) -> set[str]:
    names = set()
    for action in parser._subparsers._group_actions:
        for sp in action.choices.values():
            names.update(a.dest for a in sp._actions)
    return names


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config:
        raw = load_toml(args.config)
        given = vars(args)
        known = _all_option_names(parser)
        shared = {k.replace("-", "_"): v for k, v in raw.items() if not isinstance(v, dict)}
        own = {k.replace("-", "_"): v for k, v in raw.get(args.command, {}).items()}
        for k in shared:
            if k not in known:
                raise SchemaError(f"unknown config key {k!r}")
        for k in own:
            if k not in given:
                raise SchemaError(f"unknown config key {k!r} for {args.command}")
        # top-level keys only reach subcommands that have the option
        defaults = {k: v for k, v in shared.items() if k in given}
        defaults.update(own)
        for k, v in defaults.items():
            if given[k] is None or given[k] is False:
                if k in ("override_center", "spacing"):
                    v = _triple(",".join(str(x) for x in v) if isinstance(v, list) else v)
                setattr(args, k, v)
    missing = [k for k in REQUIRED[args.command] if getattr(args, k, None) in (None, [])]
    if missing:
        parser.error(f"{args.command}: missing required option(s): "
                     + ", ".join("--" + m.replace("_", "-") for m in missing))
    return args


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return int(args.func(args) or 0)
    except HnradError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
