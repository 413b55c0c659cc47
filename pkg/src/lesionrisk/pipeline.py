"""End-to-end orchestration: train, calibrate, predict, and evaluate.

These functions are the shared substance behind the CLI subcommands and the
HTTP service, so library users, scripts, and the server all produce
identical numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .bundle import ModelBundle, validate_bundle
from .conformal import (DEFAULT_ALPHA, DEFAULT_MIN_LEAF_CALIBRATION, LeafCalibration,
                        PredictionSet, compute_residuals, coverage_report, predict_set,
                        split_residuals)
from .encoding import DEFAULT_FEATURES, fit_encoder
from .logistic import (DEFAULT_C_GRID, GridSearchReport, RiskModel, grid_search,
                       predict_proba_dataset)
from .metrics import (ThresholdDecision, calibration_curve, optimize_threshold,
                      scalar_metrics, threshold_curve)
from .records import BIRADS_CATEGORIES, Dataset, LesionRecord, ValidationError, dataset_hash
from .tree import (DEFAULT_DEPTH_GRID, DEFAULT_MIN_LEAF_GRID, PartitionTree,
                   TreeGridReport, leaf_profiles, rule_path, tree_grid_search)


def train_risk_model(train: Dataset, features: Sequence[str] = DEFAULT_FEATURES,
                     Cs: Sequence[float] = DEFAULT_C_GRID, k: int = 5,
                     seed: int = 0) -> tuple[RiskModel, GridSearchReport]:
    """Fit the encoder on train, then grid-search C with k-fold CV."""
    enc = fit_encoder(train, features)
    return grid_search(train, enc, Cs=Cs, k=k, seed=seed)


@dataclass(frozen=True)
class CalibrationResult:
    tree: PartitionTree
    calibrations: dict[int, LeafCalibration]
    tree_report: TreeGridReport
    profiles: list
    n_tree_half: int
    n_quantile_half: int


def calibrate_model(model: RiskModel, cal: Dataset, alpha: float = DEFAULT_ALPHA,
                    fraction: float = 0.5, seed: int = 0,
                    depths: Sequence[int] = DEFAULT_DEPTH_GRID,
                    min_leaves: Sequence[int] = DEFAULT_MIN_LEAF_GRID,
                    cv_folds: int = 5, k_min: int = DEFAULT_MIN_LEAF_CALIBRATION,
                    conservative_level: bool = False,
                    tree_features: Optional[Sequence[str]] = None) -> CalibrationResult:
    """Residuals -> stratified split -> tree grid search -> per-leaf cutoffs."""
    from .conformal import calibrate_leaves

    rd = compute_residuals(model, cal)
    d0, d1 = split_residuals(rd, fraction=fraction, seed=seed)
    features = tuple(tree_features) if tree_features is not None else model.encoder.features
    tree, tree_report = tree_grid_search(d0.records, d0.residuals,
                                         depths=depths, min_leaves=min_leaves,
                                         k=cv_folds, seed=seed, features=features)
    calibrations = calibrate_leaves(tree, d1, alpha=alpha, k_min=k_min,
                                    conservative_level=conservative_level)
    profiles = leaf_profiles(tree, cal, model)
    return CalibrationResult(tree=tree, calibrations=calibrations,
                             tree_report=tree_report, profiles=profiles,
                             n_tree_half=len(d0), n_quantile_half=len(d1))


def build_bundle(model: RiskModel, calibration: Optional[CalibrationResult] = None,
                 alpha: Optional[float] = None, metadata: Optional[dict] = None) -> ModelBundle:
    b = ModelBundle(
        model=model,
        tree=calibration.tree if calibration else None,
        calibrations=calibration.calibrations if calibration else None,
        alpha=alpha if calibration else None,
        leaf_profiles=calibration.profiles if calibration else None,
        metadata=dict(metadata or {}),
    )
    validate_bundle(b)
    return b


def predict_response(bundle: ModelBundle, record: LesionRecord) -> dict:
    """The full per-lesion answer: risk, set, subgroup, and provenance."""
    if not bundle.is_calibrated:
        raise ValidationError.single("bundle", "bundle is not calibrated; run calibrate first")
    assert bundle.tree is not None and bundle.calibrations is not None
    ps: PredictionSet = predict_set(bundle.model, bundle.tree, bundle.calibrations, record)
    return {
        "risk": ps.risk,
        "prediction_set": list(ps.labels),
        "leaf_id": ps.leaf_id,
        "leaf_rule_path": rule_path(bundle.tree, ps.leaf_id),
        "cutoff": ps.cutoff,
        "alpha": float(bundle.alpha),
        "model_version": bundle.version(),
    }


def prediction_sets(bundle: ModelBundle, ds: Dataset) -> list[PredictionSet]:
    if not bundle.is_calibrated:
        raise ValidationError.single("bundle", "bundle is not calibrated; run calibrate first")
    assert bundle.tree is not None and bundle.calibrations is not None
    return [predict_set(bundle.model, bundle.tree, bundle.calibrations, r) for r in ds]


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def leaf_profiles_csv(profiles: Sequence) -> str:
    cols = ["leaf", "n", *[f"birads_{c}" for c in BIRADS_CATEGORIES],
            "malignancy_rate", "accuracy", "mean_residual"]
    lines = [",".join(cols)]
    for p in profiles:
        cells = [str(p.leaf_id), str(p.count),
                 *[str(p.birads_counts.get(c, 0)) for c in BIRADS_CATEGORIES],
                 repr(p.malignancy_rate), repr(p.accuracy), repr(p.mean_residual)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def evaluate_bundle(bundle: ModelBundle, test: Dataset, out_dir: str | Path,
                    threshold_grid_points: int = 101, n_calibration_bins: int = 10,
                    optimize: bool = False, ppv_floor: Optional[float] = None,
                    birads_filter: Optional[Sequence[str]] = None) -> dict:
    """Write every evaluation artifact for a labeled test set into ``out_dir``.

    Emits scalar metrics (JSON), the threshold curve, calibration bins, the
    per-leaf coverage report, leaf profiles, and optionally the
    threshold-optimization decision restricted to a BI-RADS subset.
    """
    if not bundle.is_calibrated:
        raise ValidationError.single("bundle", "bundle is not calibrated; run calibrate first")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    y = test.labels()
    probs = predict_proba_dataset(bundle.model, test)

    sm = scalar_metrics(probs, y)
    _write(out / "metrics.json", json.dumps(
        {"auroc": sm.auroc, "auprc": sm.auprc, "log_loss": sm.log_loss}, indent=2) + "\n")

    grid = np.linspace(0.0, 1.0, threshold_grid_points)
    _write(out / "threshold_curve.csv", threshold_curve(probs, y, grid).to_csv())

    _write(out / "calibration_curve.csv",
           calibration_curve(probs, y, n_calibration_bins).to_csv())

    sets = prediction_sets(bundle, test)
    report = coverage_report(sets, list(y), alpha=float(bundle.alpha))
    _write(out / "coverage_report.csv", report.to_csv())

    assert bundle.tree is not None
    profs = leaf_profiles(bundle.tree, test, bundle.model)
    _write(out / "leaf_profiles.csv", leaf_profiles_csv(profs))

    summary = {
        "n_test": len(test),
        "auroc": sm.auroc,
        "auprc": sm.auprc,
        "log_loss": sm.log_loss,
        "marginal_coverage_pct": report.marginal().coverage_pct,
        "avg_set_size": report.marginal().avg_set_size,
    }

    if optimize:
        if ppv_floor is None:
            raise ValidationError.single("ppv_floor", "--optimize-threshold needs a PPV floor")
        if birads_filter:
            keep = [i for i, r in enumerate(test) if r.birads in set(birads_filter)]
            if not keep:
                raise ValidationError.single(
                    "birads", f"no test records in categories {list(birads_filter)}")
            sub_probs = probs[keep]
            sub_y = y[keep]
        else:
            sub_probs, sub_y = probs, y
        decision: ThresholdDecision = optimize_threshold(sub_probs, sub_y, ppv_floor)
        doc = decision.to_json_dict()
        doc["birads_filter"] = list(birads_filter) if birads_filter else None
        _write(out / "threshold_decision.json", json.dumps(doc, indent=2) + "\n")
        summary["threshold_decision"] = doc

    return summary


def training_metadata(data: Dataset, split_doc: dict, seed: int,
                      grid_report: GridSearchReport) -> dict:
    return {
        "dataset_hash": dataset_hash(data),
        "split": split_doc,
        "seed": seed,
        "grid_report": grid_report.to_json_dict(),
    }
