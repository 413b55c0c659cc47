"""Single-file JSON persistence for the deployable model bundle.

A bundle ties together the fitted encoder, logistic coefficients, partition
tree, per-leaf conformal cutoffs, and training metadata. JSON keeps it
human-inspectable and diffable; floats are emitted with shortest round-trip
precision, so save/load is numerically exact.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Optional, Union

import numpy as np

from .conformal import LeafCalibration
from .encoding import EncoderSpec
from .logistic import RiskModel
from .records import ValidationError
from .tree import LeafProfile, PartitionTree, tree_from_dict, tree_to_dict

SCHEMA_VERSION = 1


class BundleError(ValueError):
    pass


@dataclass(eq=False)
class ModelBundle:
    """Everything the inference service needs, as one immutable snapshot.

    ``tree``/``calibrations``/``alpha`` are None until the calibrate step has
    run; prediction-set queries require a calibrated bundle.
    """

    model: RiskModel
    tree: Optional[PartitionTree] = None
    calibrations: Optional[dict[int, LeafCalibration]] = None
    alpha: Optional[float] = None
    leaf_profiles: Optional[list[LeafProfile]] = None
    metadata: dict = field(default_factory=dict)

    @property
    def is_calibrated(self) -> bool:
        return self.tree is not None and self.calibrations is not None and self.alpha is not None

    def version(self) -> str:
        """Content hash of the predictive parameters (metadata excluded)."""
        doc = _bundle_core_dict(self)
        text = json.dumps(doc, sort_keys=True)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def validate_bundle(b: ModelBundle) -> None:
    """Check mutual consistency; raises BundleError naming the violated invariant."""
    n_cols = len(b.model.encoder.columns)
    if b.model.weights.shape != (n_cols,):
        raise BundleError(
            f"weight length {b.model.weights.shape[0]} does not match encoder "
            f"dimension {n_cols}")
    has_any = b.tree is not None or b.calibrations is not None or b.alpha is not None
    if has_any and not b.is_calibrated:
        raise BundleError("partially calibrated bundle: tree, calibrations, and alpha "
                          "must all be present or all absent")
    if b.is_calibrated:
        assert b.tree is not None and b.calibrations is not None
        if not (0.0 < float(b.alpha) < 1.0):
            raise BundleError(f"alpha must lie in (0, 1) (got {b.alpha})")
        missing = [leaf for leaf in b.tree.leaf_ids() if leaf not in b.calibrations]
        if missing:
            raise BundleError(f"leaves without a calibration entry: {missing}")


def _encoder_to_dict(enc: EncoderSpec) -> dict:
    return {
        "features": list(enc.features),
        "numeric_stats": {f: [m, s] for f, (m, s) in enc.numeric_stats.items()},
        "columns": list(enc.columns),
    }


def _encoder_from_dict(doc: dict) -> EncoderSpec:
    return EncoderSpec(
        features=tuple(doc["features"]),
        numeric_stats={f: (float(m), float(s)) for f, (m, s) in doc["numeric_stats"].items()},
        columns=tuple(doc["columns"]),
    )


def _bundle_core_dict(b: ModelBundle) -> dict:
    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "risk_model": {
            "encoder": _encoder_to_dict(b.model.encoder),
            "weights": [float(w) for w in b.model.weights],
            "intercept": float(b.model.intercept),
            "C": float(b.model.C),
        },
        "partition_tree": tree_to_dict(b.tree) if b.tree is not None else None,
        "leaf_calibrations": None,
        "alpha": None if b.alpha is None else float(b.alpha),
        "leaf_profiles": None,
    }
    if b.calibrations is not None:
        doc["leaf_calibrations"] = {
            str(leaf): {"k": lc.k, "alpha": lc.alpha, "alpha_tilde": lc.alpha_tilde,
                        "q": lc.q, "fallback_used": lc.fallback_used}
            for leaf, lc in sorted(b.calibrations.items())
        }
    if b.leaf_profiles is not None:
        doc["leaf_profiles"] = [
            {"leaf_id": p.leaf_id, "count": p.count, "birads_counts": p.birads_counts,
             "malignancy_rate": p.malignancy_rate, "accuracy": p.accuracy,
             "mean_residual": p.mean_residual}
            for p in b.leaf_profiles
        ]
    return doc


def bundle_to_dict(b: ModelBundle) -> dict:
    doc = _bundle_core_dict(b)
    doc["risk_model"]["metadata"] = dict(b.model.metadata)
    doc["metadata"] = dict(b.metadata)
    return doc


def bundle_from_dict(doc: dict) -> ModelBundle:
    if not isinstance(doc, dict) or "schema_version" not in doc:
        raise BundleError("not a model bundle: missing schema_version")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise BundleError(
            f"unsupported bundle schema version {doc['schema_version']!r} "
            f"(this build reads version {SCHEMA_VERSION})")
    try:
        rm = doc["risk_model"]
        enc = _encoder_from_dict(rm["encoder"])
        try:
            model = RiskModel(encoder=enc,
                              weights=np.asarray(rm["weights"], dtype=float),
                              intercept=float(rm["intercept"]),
                              C=float(rm["C"]),
                              metadata=dict(rm.get("metadata", {})))
        except ValidationError as exc:
            raise BundleError(str(exc)) from None
        tree = tree_from_dict(doc["partition_tree"]) if doc.get("partition_tree") else None
        calibrations = None
        if doc.get("leaf_calibrations") is not None:
            calibrations = {
                int(leaf): LeafCalibration(leaf_id=int(leaf), k=int(c["k"]),
                                           alpha=float(c["alpha"]),
                                           alpha_tilde=float(c["alpha_tilde"]),
                                           q=float(c["q"]),
                                           fallback_used=bool(c["fallback_used"]))
                for leaf, c in doc["leaf_calibrations"].items()
            }
        profiles = None
        if doc.get("leaf_profiles") is not None:
            profiles = [
                LeafProfile(leaf_id=int(p["leaf_id"]), count=int(p["count"]),
                            birads_counts={k: int(v) for k, v in p["birads_counts"].items()},
                            malignancy_rate=float(p["malignancy_rate"]),
                            accuracy=float(p["accuracy"]),
                            mean_residual=float(p["mean_residual"]))
                for p in doc["leaf_profiles"]
            ]
        bundle = ModelBundle(model=model, tree=tree, calibrations=calibrations,
                             alpha=doc.get("alpha"), leaf_profiles=profiles,
                             metadata=dict(doc.get("metadata", {})))
    except (KeyError, TypeError) as exc:
        raise BundleError(f"malformed bundle document: {exc!r}") from None
    validate_bundle(bundle)
    return bundle


Sink = Union[str, Path, IO[str]]


def save_bundle(b: ModelBundle, sink: Sink) -> None:
    validate_bundle(b)
    text = json.dumps(bundle_to_dict(b), indent=2, ensure_ascii=False)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text + "\n", encoding="utf-8")
    else:
        sink.write(text + "\n")


def load_bundle(source: Sink) -> ModelBundle:
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleError(f"could not parse bundle JSON: {exc}") from None
    return bundle_from_dict(doc)
