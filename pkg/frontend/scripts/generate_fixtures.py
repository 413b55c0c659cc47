"""Regenerate the test fixtures the web UI is contract-tested against.

Validation fixtures are produced by running candidate payloads through the
backend validator, so the expected outcomes are authoritative; the bundle
export comes from a real (seeded) training + calibration run. Run from the
repository root:

    python frontend/scripts/generate_fixtures.py
"""

import json
from pathlib import Path

import lesionrisk as lr
from lesionrisk.records import validate_record_dict
from lesionrisk.tree import tree_to_dict

FIXTURES = Path(__file__).resolve().parent.parent / "test" / "fixtures"

BASE = {
    "id": "fx-1", "age": 51, "size_mm": 16.0, "ri": 0.4, "palpable": 1,
    "shape": "irregular", "margins": "spiculated", "orientation": "not_parallel",
    "birads": "5", "cohort": "prospective",
}


def variant(**overrides):
    rec = dict(BASE)
    for key, value in overrides.items():
        if value is _DROP:
            rec.pop(key, None)
        else:
            rec[key] = value
    return rec


_DROP = object()

CASES = [
    ("valid baseline", variant()),
    ("valid boundary age 18", variant(age=18)),
    ("valid boundary size 30", variant(size_mm=30)),
    ("valid boundary ri 0", variant(ri=0)),
    ("valid numeric strings", variant(age="47", size_mm="12.5", ri="0.25")),
    ("valid oval circumscribed", variant(shape="oval", margins="circumscribed",
                                         orientation="parallel", birads="3",
                                         cohort="retrospective", palpable=0)),
    ("age below exclusion", variant(age=17)),
    ("age just below", variant(age=17.999)),
    ("size above exclusion", variant(size_mm=31)),
    ("size slightly above", variant(size_mm=30.0001)),
    ("size zero", variant(size_mm=0)),
    ("negative ri", variant(ri=-0.1)),
    ("palpable out of range", variant(palpable=2)),
    ("palpable string ok", variant(palpable="1")),
    ("unknown shape", variant(shape="blobby")),
    ("unknown margins", variant(margins="fuzzy")),
    ("unknown orientation", variant(orientation="diagonal")),
    ("excluded birads category", variant(birads="2")),
    ("unknown cohort", variant(cohort="external")),
    ("malformed age", variant(age="abc")),
    ("missing age", variant(age=_DROP)),
    ("missing margins", variant(margins=_DROP)),
    ("empty id", variant(id="")),
    ("several violations at once", variant(age=17, size_mm=44, ri=-1)),
]


def build_validation_fixtures() -> list[dict]:
    out = []
    for name, payload in CASES:
        errors = validate_record_dict(payload)
        out.append({
            "name": name,
            "record": payload,
            "valid": not errors,
            "error_fields": sorted({f for f, _ in errors}),
        })
    return out


def build_bundle_export() -> dict:
    ds, _ = lr.synthesize(lr.GeneratorConfig(n=1500, seed=424))
    train, cal, _ = lr.split_dataset(ds, lr.SplitSpec(400, 800, 300, "random", 4))
    model, _ = lr.train_risk_model(train, Cs=(0.1, 1.0), k=3, seed=4)
    calres = lr.calibrate_model(model, cal, alpha=0.1, seed=4,
                                depths=(2, 3), min_leaves=(60, 100))
    bundle = lr.build_bundle(model, calres, alpha=0.1)
    return {
        "alpha": bundle.alpha,
        "model_version": bundle.version(),
        "coefficients": model.coefficient_table(),
        "intercept": model.intercept,
        "numeric_stats": {f: [mu, sd] for f, (mu, sd) in model.encoder.numeric_stats.items()},
        "features": list(model.encoder.features),
        "tree": tree_to_dict(bundle.tree),
        "leaf_calibrations": {str(k): {"k": c.k, "alpha_tilde": c.alpha_tilde, "q": c.q,
                                       "fallback_used": c.fallback_used}
                              for k, c in bundle.calibrations.items()},
    }


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    (FIXTURES / "validation_fixtures.json").write_text(
        json.dumps(build_validation_fixtures(), indent=2, ensure_ascii=False) + "\n")
    export = build_bundle_export()
    (FIXTURES / "bundle_export.json").write_text(
        json.dumps(export, indent=2, ensure_ascii=False) + "\n")
    n_leaves = sum(1 for n in export["tree"]["nodes"].values() if "mean" in n)
    print(f"wrote validation fixtures ({len(CASES)} cases) and bundle export "
          f"({n_leaves} leaves)")


if __name__ == "__main__":
    main()
