"""Synthetic lesion cohorts drawn from a documented generative model.

The generator exists so that every downstream claim (coverage, calibration,
threshold accounting) can be checked against a *known* conditional
malignancy probability. Feature marginals mimic the published cohort
statistics; the label follows a logistic link over a fixed feature map,
optionally distorted inside planted feature regions by label-flip noise so
that some subgroups are genuinely harder to predict than others.

For flip rate rho the true conditional probability becomes
``rho + (1 - 2*rho) * sigmoid(z)``, which is what the returned oracle reports.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .records import (COHORTS, MARGINS, ORIENTATIONS, SHAPES, BIRADS_CATEGORIES,
                      Dataset, LesionRecord, ValidationError)

# Fixed standardization constants of the generative link (independent of any
# fitted encoder): value -> (value - center) / scale.
LINK_NUMERIC_SCALE = {"age": (52.0, 14.0), "size": (16.7, 7.0), "ri": (0.45, 0.4)}

#: Columns a link coefficient may refer to.
LINK_COLUMNS = (
    "age", "size", "ri", "palpable",
    *[f"shape={s}" for s in SHAPES],
    *[f"margins={m}" for m in MARGINS],
    *[f"orientation={o}" for o in ORIENTATIONS],
)

DEFAULT_INTERCEPT = -0.4

DEFAULT_COEFFICIENTS: dict[str, float] = {
    "age": 0.8,
    "size": 0.7,
    "ri": 0.5,
    "palpable": 0.4,
    "shape=oval": -0.8,
    "shape=round": -0.3,
    "shape=irregular": 0.9,
    "margins=circumscribed": -1.2,
    "margins=indistinct": 0.2,
    "margins=angular": 0.5,
    "margins=microlobulated": 0.7,
    "margins=spiculated": 1.3,
    "orientation=not_parallel": 0.3,
}

# Population category frequencies used to sample the synthetic cohorts.
# Where the published cohort summaries give a number it is used; the
# remaining mass is split across the unreported categories.
_CATEGORY_FREQS = {
    "retrospective": {
        "palpable": 0.6417,
        "shape": {"oval": 0.36, "round": 0.12, "irregular": 0.52},
        "margins": {"circumscribed": 0.365, "indistinct": 0.225, "angular": 0.10,
                    "microlobulated": 0.14, "spiculated": 0.17},
        "orientation": {"parallel": 0.6719, "not_parallel": 0.3281},
        "birads": {"3": 0.15, "4a": 0.30, "4b": 0.25, "4c": 0.17, "5": 0.13},
    },
    "prospective": {
        "palpable": 0.5512,
        "shape": {"oval": 0.28, "round": 0.11, "irregular": 0.61},
        "margins": {"circumscribed": 0.30, "indistinct": 0.25, "angular": 0.11,
                    "microlobulated": 0.15, "spiculated": 0.19},
        "orientation": {"parallel": 0.7382, "not_parallel": 0.2618},
        "birads": {"3": 0.15, "4a": 0.30, "4b": 0.25, "4c": 0.17, "5": 0.13},
    },
}

_CONDITION_OPS = ("<", "<=", ">", ">=", "==")
_NUMERIC_FEATURES = ("age", "size", "ri")


def _sigmoid(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass(frozen=True)
class SubgroupRule:
    """A feature region (conjunction of conditions) with a label-flip rate."""

    name: str
    conditions: tuple[tuple[str, str, object], ...]
    noise_rate: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "conditions",
                           tuple((f, op, v) for f, op, v in self.conditions))
        if not (0.0 <= self.noise_rate <= 0.5):
            raise ValidationError.single(
                "noise_rate", f"noise rate must lie in [0, 0.5] (got {self.noise_rate})")
        for feat, op, value in self.conditions:
            if op not in _CONDITION_OPS:
                raise ValidationError.single(
                    "conditions", f"unknown condition operator {op!r}")
            if feat in _NUMERIC_FEATURES or feat == "palpable":
                if not isinstance(value, (int, float)):
                    raise ValidationError.single(
                        "conditions", f"condition on {feat!r} needs a numeric value")
            elif feat in ("shape", "margins", "orientation", "birads", "cohort"):
                if op != "==":
                    raise ValidationError.single(
                        "conditions", f"categorical condition on {feat!r} only supports '=='")
            else:
                raise ValidationError.single("conditions", f"unknown feature {feat!r}")

    def matches(self, r: LesionRecord) -> bool:
        for feat, op, value in self.conditions:
            x = getattr(r, feat)
            if op == "<" and not x < value:
                return False
            if op == "<=" and not x <= value:
                return False
            if op == ">" and not x > value:
                return False
            if op == ">=" and not x >= value:
                return False
            if op == "==" and x != value:
                return False
        return True


@dataclass(frozen=True)
class GeneratorConfig:
    """Size, seed, link coefficients, and planted subgroups of a synthetic cohort."""

    n: int
    seed: int
    retrospective_fraction: float = 0.5
    intercept: float = DEFAULT_INTERCEPT
    coefficients: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_COEFFICIENTS))
    subgroups: tuple[SubgroupRule, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", dict(self.coefficients))
        object.__setattr__(self, "subgroups", tuple(self.subgroups))
        if self.n < 1:
            raise ValidationError.single("n", f"n must be positive (got {self.n})")
        if not (0.0 <= self.retrospective_fraction <= 1.0):
            raise ValidationError.single(
                "retrospective_fraction", "retrospective_fraction must lie in [0, 1]")
        unknown = set(self.coefficients) - set(LINK_COLUMNS)
        if unknown:
            raise ValidationError.single(
                "coefficients", f"unknown link columns: {', '.join(sorted(unknown))}")

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "seed": self.seed,
            "retrospective_fraction": self.retrospective_fraction,
            "intercept": self.intercept,
            "coefficients": dict(self.coefficients),
            "subgroups": [
                {"name": g.name,
                 "where": [[f, op, v] for f, op, v in g.conditions],
                 "noise_rate": g.noise_rate}
                for g in self.subgroups
            ],
        }
        return json.dumps(doc, indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError.single("config", f"malformed generator config JSON: {exc}") from None
        try:
            groups = tuple(
                SubgroupRule(name=g["name"],
                             conditions=tuple((f, op, v) for f, op, v in g.get("where", [])),
                             noise_rate=g["noise_rate"])
                for g in doc.get("subgroups", [])
            )
            return cls(
                n=doc["n"],
                seed=doc["seed"],
                retrospective_fraction=doc.get("retrospective_fraction", 0.5),
                intercept=doc.get("intercept", DEFAULT_INTERCEPT),
                coefficients=doc.get("coefficients", dict(DEFAULT_COEFFICIENTS)),
                subgroups=groups,
            )
        except KeyError as exc:
            raise ValidationError.single("config", f"generator config missing key: {exc}") from None


def link_value(record: LesionRecord, column: str) -> float:
    """Value of one generative-link column for a record."""
    if column in LINK_NUMERIC_SCALE:
        center, scale = LINK_NUMERIC_SCALE[column]
        return (getattr(record, column) - center) / scale
    if column == "palpable":
        return float(record.palpable)
    feat, _, cat = column.partition("=")
    return 1.0 if getattr(record, feat) == cat else 0.0


def subgroup_of(cfg: GeneratorConfig, record: LesionRecord) -> Optional[str]:
    """Name of the first matching planted subgroup, if any."""
    for g in cfg.subgroups:
        if g.matches(record):
            return g.name
    return None


def make_oracle(cfg: GeneratorConfig) -> Callable[[LesionRecord], float]:
    """True conditional malignancy probability under ``cfg``."""
    coeffs = dict(cfg.coefficients)

    def oracle(record: LesionRecord) -> float:
        z = cfg.intercept
        for col, w in coeffs.items():
            if w != 0.0:
                z += w * link_value(record, col)
        p = _sigmoid(z)
        for g in cfg.subgroups:
            if g.matches(record):
                return g.noise_rate + (1.0 - 2.0 * g.noise_rate) * p
        return p

    return oracle


def _sample_categorical(rng_u: np.ndarray, freq_by_cohort: dict[str, dict[str, float]],
                        cohorts: list[str], vocab: Sequence[str]) -> list[str]:
    out = []
    cumsums = {c: np.cumsum([freq_by_cohort[c][v] for v in vocab]) for c in COHORTS}
    for u, cohort in zip(rng_u, cohorts):
        idx = int(np.searchsorted(cumsums[cohort], u, side="right"))
        out.append(vocab[min(idx, len(vocab) - 1)])
    return out


def synthesize(cfg: GeneratorConfig) -> tuple[Dataset, Callable[[LesionRecord], float]]:
    """Draw a labeled synthetic dataset; returns it with its probability oracle.

    Deterministic given the seed: the random stream is consumed in a fixed
    field order, so equal configs produce bit-identical datasets.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n

    u_cohort = rng.random(n)
    age = np.maximum(18.0, rng.normal(52.0, 14.0, n))
    size = np.clip(rng.normal(16.7, 7.0, n), 0.5, 30.0)
    ri = np.maximum(0.0, rng.normal(0.45, 0.4, n))
    u_palp = rng.random(n)
    u_shape = rng.random(n)
    u_margins = rng.random(n)
    u_orient = rng.random(n)
    u_birads = rng.random(n)
    u_label = rng.random(n)

    cohorts = ["retrospective" if u < cfg.retrospective_fraction else "prospective"
               for u in u_cohort]
    palpable = [int(u < _CATEGORY_FREQS[c]["palpable"]) for u, c in zip(u_palp, cohorts)]
    shapes = _sample_categorical(u_shape, {c: _CATEGORY_FREQS[c]["shape"] for c in COHORTS},
                                 cohorts, SHAPES)
    margins = _sample_categorical(u_margins, {c: _CATEGORY_FREQS[c]["margins"] for c in COHORTS},
                                  cohorts, MARGINS)
    orients = _sample_categorical(u_orient, {c: _CATEGORY_FREQS[c]["orientation"] for c in COHORTS},
                                  cohorts, ORIENTATIONS)
    birads = _sample_categorical(u_birads, {c: _CATEGORY_FREQS[c]["birads"] for c in COHORTS},
                                 cohorts, BIRADS_CATEGORIES)

    oracle = make_oracle(cfg)
    width = max(6, len(str(n)))
    records = []
    for i in range(n):
        unlabeled = LesionRecord(
            id=f"syn-{i:0{width}d}",
            age=float(age[i]), size=float(size[i]), ri=float(ri[i]),
            palpable=palpable[i], shape=shapes[i], margins=margins[i],
            orientation=orients[i], birads=birads[i], cohort=cohorts[i],
        )
        p = oracle(unlabeled)
        fields = unlabeled.to_dict()
        fields["label"] = int(u_label[i] < p)
        records.append(LesionRecord.from_dict(fields))
    ds = Dataset(tuple(records), provenance=f"synthetic:seed={cfg.seed}")
    return ds, oracle
