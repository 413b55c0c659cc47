"""Feature encoders: standardized one-hot design matrix for the risk model,
ordinal integer codes for the partition tree.

One-hot blocks always cover the full fixed vocabulary, regardless of which
categories appear in the training split, and no reference category is
dropped; the L2 penalty of the risk model absorbs the resulting
collinearity and keeps every descriptor coefficient directly readable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .records import (MARGINS, ORIENTATIONS, SHAPES, Dataset, LesionRecord,
                      ValidationError)

NUMERIC_FEATURES = ("age", "size", "ri")
BINARY_FEATURES = ("palpable",)
CATEGORICAL_VOCAB = {"shape": SHAPES, "margins": MARGINS, "orientation": ORIENTATIONS}

#: Model features named by the study design; orientation is selectable, the
#: final assessment category never is (it is the target construct itself).
DEFAULT_FEATURES = ("age", "size", "ri", "palpable", "shape", "margins")

# Ordinal codes for the tree encoder, ordered by increasing suspicion.
SHAPE_CODES = {"oval": 0, "round": 1, "irregular": 2}
MARGIN_CODES = {"circumscribed": 0, "indistinct": 1, "angular": 2,
                "microlobulated": 3, "spiculated": 4}
ORIENTATION_CODES = {"parallel": 0, "not_parallel": 1}
_ORDINAL_CODES = {"shape": SHAPE_CODES, "margins": MARGIN_CODES,
                  "orientation": ORIENTATION_CODES}


def _check_features(features: Sequence[str]) -> tuple[str, ...]:
    feats = tuple(features)
    if not feats:
        raise ValidationError.single("features", "feature list must be nonempty")
    for f in feats:
        if f == "birads":
            raise ValidationError.single(
                "features", "the final assessment category is metadata, not a model feature")
        if f not in NUMERIC_FEATURES + BINARY_FEATURES and f not in CATEGORICAL_VOCAB:
            raise ValidationError.single("features", f"unknown feature {f!r}")
    if len(set(feats)) != len(feats):
        raise ValidationError.single("features", "duplicate feature names")
    return feats


@dataclass(frozen=True)
class EncoderSpec:
    """Fitted one-hot + standardization map from records to model columns."""

    features: tuple[str, ...]
    numeric_stats: dict[str, tuple[float, float]]   # feature -> (mean, sample sd)
    columns: tuple[str, ...]

    def encode(self, record: LesionRecord) -> np.ndarray:
        out = np.empty(len(self.columns), dtype=float)
        i = 0
        for f in self.features:
            if f in NUMERIC_FEATURES:
                mean, sd = self.numeric_stats[f]
                out[i] = (getattr(record, f) - mean) / sd
                i += 1
            elif f in BINARY_FEATURES:
                out[i] = float(getattr(record, f))
                i += 1
            else:
                vocab = CATEGORICAL_VOCAB[f]
                value = getattr(record, f)
                for cat in vocab:
                    out[i] = 1.0 if value == cat else 0.0
                    i += 1
        return out

    def encode_dataset(self, ds: Dataset | Iterable[LesionRecord]) -> np.ndarray:
        records = list(ds)
        X = np.empty((len(records), len(self.columns)), dtype=float)
        for i, r in enumerate(records):
            X[i] = self.encode(r)
        return X


def _build_columns(features: tuple[str, ...]) -> tuple[str, ...]:
    cols: list[str] = []
    for f in features:
        if f in NUMERIC_FEATURES or f in BINARY_FEATURES:
            cols.append(f)
        else:
            cols.extend(f"{f}={cat}" for cat in CATEGORICAL_VOCAB[f])
    return tuple(cols)


def fit_encoder(train: Dataset, features: Sequence[str] = DEFAULT_FEATURES) -> EncoderSpec:
    """Fit standardization statistics on the training split only.

    Raises when a numeric feature has zero variance in train, since its
    standardized column would be degenerate.
    """
    feats = _check_features(features)
    if len(train) == 0:
        raise ValidationError.single("train", "cannot fit an encoder on an empty dataset")
    stats: dict[str, tuple[float, float]] = {}
    for f in feats:
        if f in NUMERIC_FEATURES:
            values = np.array([getattr(r, f) for r in train], dtype=float)
            mean = float(values.mean())
            sd = float(values.std(ddof=1)) if len(values) > 1 else 0.0
            if not sd > 0.0:
                raise ValidationError.single(
                    f, f"numeric feature {f!r} has zero variance in the training split")
            stats[f] = (mean, sd)
    return EncoderSpec(features=feats, numeric_stats=stats, columns=_build_columns(feats))


@dataclass(frozen=True)
class OrdinalEncoderSpec:
    """Tree-side encoder: numerics pass through, categories get ordinal codes."""

    features: tuple[str, ...]

    def encode(self, record: LesionRecord) -> np.ndarray:
        out = np.empty(len(self.features), dtype=float)
        for i, f in enumerate(self.features):
            if f in _ORDINAL_CODES:
                out[i] = float(_ORDINAL_CODES[f][getattr(record, f)])
            else:
                out[i] = float(getattr(record, f))
        return out

    def encode_records(self, records: Iterable[LesionRecord]) -> np.ndarray:
        recs = list(records)
        X = np.empty((len(recs), len(self.features)), dtype=float)
        for i, r in enumerate(recs):
            X[i] = self.encode(r)
        return X

    def describe_split(self, feature: str, threshold: float, left: bool) -> str:
        """Human-readable condition for one side of a tree split."""
        if feature in _ORDINAL_CODES:
            by_code = {code: cat for cat, code in _ORDINAL_CODES[feature].items()}
            max_code = max(by_code)
            if left:
                # left side is value < threshold; an integer threshold excludes itself
                code = math.floor(threshold)
                if threshold == code:
                    code -= 1
                code = min(max(code, 0), max_code)
                return (f"{feature} = {by_code[0]}" if code == 0
                        else f"{feature} ≤ {by_code[code]}")
            code = min(max(math.ceil(threshold), 0), max_code)
            return (f"{feature} = {by_code[max_code]}" if code == max_code
                    else f"{feature} ≥ {by_code[code]}")
        if feature in BINARY_FEATURES:
            return f"{feature} = 0" if left else f"{feature} = 1"
        return f"{feature} < {threshold:.6g}" if left else f"{feature} ≥ {threshold:.6g}"


def make_ordinal_encoder(features: Sequence[str] = DEFAULT_FEATURES) -> OrdinalEncoderSpec:
    return OrdinalEncoderSpec(features=_check_features(features))
