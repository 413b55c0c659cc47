"""Command-line workflow: synth, train, calibrate, evaluate, predict, serve.

Every failure exits nonzero with a structured ``error:`` line on stderr.
The train step records its split specification and dataset hash in the
bundle, so calibrate and evaluate recompute the identical partition without
re-passing flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from .bundle import BundleError, load_bundle, save_bundle
from .logistic import ConvergenceError
from .metrics import MetricsError
from .records import (Dataset, LesionRecord, SplitSpec, ValidationError, dataset_hash,
                      parse_csv, serialize_csv, split_dataset)
from .synth import GeneratorConfig, synthesize
from . import pipeline

DEFAULT_TRAIN_FRACTION = 0.265   # mirrors the published 513/1059/364 proportions
DEFAULT_TEST_FRACTION = 0.188


def _split_sizes(n: int, args: argparse.Namespace) -> tuple[int, int, int]:
    if args.n_train is not None or args.n_test is not None or args.n_cal is not None:
        if None in (args.n_train, args.n_cal, args.n_test):
            raise ValidationError.single(
                "sizes", "--n-train/--n-cal/--n-test must be given together")
        return args.n_train, args.n_cal, args.n_test
    n_train = round(DEFAULT_TRAIN_FRACTION * n)
    n_test = round(DEFAULT_TEST_FRACTION * n)
    return n_train, n - n_train - n_test, n_test


def _load_and_split(data_path: str, split_doc: dict) -> tuple[Dataset, Dataset, Dataset, Dataset]:
    ds = parse_csv(data_path)
    if split_doc.get("dataset_hash") and split_doc["dataset_hash"] != dataset_hash(ds):
        raise ValidationError.single(
            "data", "dataset does not match the one the bundle was trained on "
                    "(hash mismatch)")
    spec = SplitSpec(n_train=split_doc["n_train"], n_cal=split_doc["n_cal"],
                     n_test=split_doc["n_test"], strategy=split_doc["strategy"],
                     seed=split_doc["seed"])
    train, cal, test = split_dataset(ds, spec)
    return ds, train, cal, test


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = GeneratorConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    ds, _ = synthesize(cfg)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        serialize_csv(ds, fh)
    meta_path = args.meta or (args.out + ".meta.json")
    Path(meta_path).write_text(cfg.to_json() + "\n", encoding="utf-8")
    print(f"wrote {len(ds)} synthetic records to {args.out} (oracle config: {meta_path})")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    ds = parse_csv(args.data)
    n_train, n_cal, n_test = _split_sizes(len(ds), args)
    spec = SplitSpec(n_train=n_train, n_cal=n_cal, n_test=n_test,
                     strategy=args.split, seed=args.seed)
    train, _, _ = split_dataset(ds, spec)
    Cs = tuple(float(c) for c in args.c_grid.split(",")) if args.c_grid else None
    model, report = pipeline.train_risk_model(
        train, Cs=Cs or (0.01, 0.1, 1.0, 10.0, 100.0), k=args.cv_folds, seed=args.seed)
    split_doc = {"n_train": n_train, "n_cal": n_cal, "n_test": n_test,
                 "strategy": args.split, "seed": args.seed,
                 "dataset_hash": dataset_hash(ds)}
    metadata = pipeline.training_metadata(ds, split_doc, args.seed, report)
    metadata["created"] = datetime.now(timezone.utc).isoformat()
    bundle = pipeline.build_bundle(model, metadata=metadata)
    save_bundle(bundle, args.out)

    print(f"trained on {n_train} records; 5-fold CV over C grid:")
    for row in report.rows:
        status = "" if row.converged else "  [disqualified: no convergence]"
        loss = "n/a" if row.mean_log_loss != row.mean_log_loss else f"{row.mean_log_loss:.4f}"
        sd = "n/a" if row.sd_log_loss != row.sd_log_loss else f"{row.sd_log_loss:.4f}"
        print(f"  C={row.C:<8g} log-loss {loss} ± {sd}{status}")
    print(f"chosen C = {report.chosen_C:g}; bundle written to {args.out}")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle)
    split_doc = bundle.metadata.get("split")
    if not split_doc:
        raise ValidationError.single("bundle", "bundle carries no split metadata; retrain first")
    _, _, cal, _ = _load_and_split(args.data, split_doc)
    result = pipeline.calibrate_model(
        bundle.model, cal, alpha=args.alpha, fraction=args.fraction, seed=args.seed,
        conservative_level=args.conservative_level)
    metadata = dict(bundle.metadata)
    metadata["calibration"] = {
        "alpha": args.alpha,
        "fraction": args.fraction,
        "seed": args.seed,
        "n_tree_half": result.n_tree_half,
        "n_quantile_half": result.n_quantile_half,
        "tree_grid_report": result.tree_report.to_json_dict(),
    }
    calibrated = pipeline.build_bundle(bundle.model, result, alpha=args.alpha,
                                       metadata=metadata)
    save_bundle(calibrated, args.out or args.bundle)
    n_fallback = sum(1 for c in result.calibrations.values() if c.fallback_used)
    print(f"calibrated {result.tree.n_leaves} leaves at alpha={args.alpha} "
          f"({n_fallback} using the pooled fallback); "
          f"tree depth {result.tree_report.chosen_depth}, "
          f"min leaf {result.tree_report.chosen_min_samples_leaf}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle)
    split_doc = bundle.metadata.get("split")
    if not split_doc:
        raise ValidationError.single("bundle", "bundle carries no split metadata; retrain first")
    _, _, _, test = _load_and_split(args.data, split_doc)
    birads_filter = args.birads.split(",") if args.birads else None
    summary = pipeline.evaluate_bundle(
        bundle, test, args.out_dir,
        optimize=args.optimize_threshold, ppv_floor=args.ppv_floor,
        birads_filter=birads_filter)
    print(json.dumps(summary, indent=2))
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    bundle = load_bundle(args.bundle)
    payload = json.loads(Path(args.input).read_text(encoding="utf-8"))
    record = LesionRecord.from_dict(payload)
    print(json.dumps(pipeline.predict_response(bundle, record), indent=2, ensure_ascii=False))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    bundle = load_bundle(args.bundle)
    addr = os.environ.get("LESIONRISK_ADDR", args.addr)
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValidationError.single("addr", f"bind address must be host:port (got {addr!r})")
    uvicorn.run(create_app(bundle), host=host, port=int(port), log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lesionrisk",
                                description="breast-lesion risk assessment toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic cohort CSV from a config")
    s.add_argument("--config", required=True, help="generator config JSON")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--meta", help="oracle metadata path (default: <out>.meta.json)")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="split the data and fit the risk model")
    s.add_argument("--data", required=True, help="lesion CSV")
    s.add_argument("--split", choices=("by_cohort", "random"), default="by_cohort")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-train", type=int, dest="n_train")
    s.add_argument("--n-cal", type=int, dest="n_cal")
    s.add_argument("--n-test", type=int, dest="n_test")
    s.add_argument("--c-grid", dest="c_grid", help="comma-separated C values")
    s.add_argument("--cv-folds", type=int, default=5)
    s.add_argument("--out", required=True, help="bundle output path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("calibrate", help="fit the residual tree and per-leaf cutoffs")
    s.add_argument("--bundle", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--fraction", type=float, default=0.5,
                   help="share of the calibration split used for the tree")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--conservative-level", action="store_true",
                   help="use the classical split-conformal quantile index")
    s.add_argument("--out", help="output bundle (default: overwrite --bundle)")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("evaluate", help="write evaluation reports for the test split")
    s.add_argument("--bundle", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--optimize-threshold", action="store_true")
    s.add_argument("--ppv-floor", type=float)
    s.add_argument("--birads", help="comma-separated categories to restrict "
                                    "threshold optimization to, e.g. 4a,4b")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("predict", help="prediction set for one record JSON")
    s.add_argument("--bundle", required=True)
    s.add_argument("--input", required=True, help="record JSON file")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("serve", help="start the HTTP inference service")
    s.add_argument("--bundle", required=True)
    s.add_argument("--addr", default="127.0.0.1:8000")
    s.set_defaults(func=cmd_serve)

    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        fields = ", ".join(f for f, _ in exc.errors)
        print(f"error: validation failed [{fields}]: {exc}", file=sys.stderr)
        return 2
    except (BundleError, MetricsError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
