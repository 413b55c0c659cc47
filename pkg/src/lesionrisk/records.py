"""Lesion record schema, CSV ingestion, deterministic splits, and cohort summaries.

A record describes one biopsied breast lesion: patient age, lesion size and
Doppler resistance index, palpability, the standard sonographic descriptors
(shape, margins, orientation), the examiner's final assessment category, the
study cohort it came from, and an optional biopsy outcome label.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Optional, Union

import numpy as np

SHAPES = ("oval", "round", "irregular")
MARGINS = ("circumscribed", "indistinct", "angular", "microlobulated", "spiculated")
ORIENTATIONS = ("parallel", "not_parallel")
BIRADS_CATEGORIES = ("3", "4a", "4b", "4c", "5")
COHORTS = ("retrospective", "prospective")

AGE_MIN = 18.0
SIZE_MAX = 30.0

#: Exact column set of the interchange CSV, one row per lesion.
CSV_COLUMNS = ("id", "age", "size_mm", "ri", "palpable", "shape", "margins",
               "orientation", "birads", "cohort", "label")


class ValidationError(ValueError):
    """A record, dataset, or argument violated a schema rule.

    ``errors`` holds (field, message) pairs; ``row`` is the 1-based physical
    CSV line when raised during parsing (the header is line 1).
    """

    def __init__(self, errors: Iterable[tuple[str, str]], row: Optional[int] = None):
        self.errors = [(f, m) for f, m in errors]
        self.row = row
        prefix = f"row {row}: " if row is not None else ""
        super().__init__(prefix + "; ".join(m for _, m in self.errors))

    @classmethod
    def single(cls, field_name: str, message: str, row: Optional[int] = None) -> "ValidationError":
        return cls([(field_name, message)], row=row)


@dataclass(frozen=True)
class LesionRecord:
    """One lesion with its clinical, descriptor, and Doppler features."""

    id: str
    age: float
    size: float          # greatest diameter, millimeters, in (0, 30]
    ri: float            # Doppler resistance index, dimensionless, >= 0
    palpable: int        # 0/1
    shape: str
    margins: str
    orientation: str
    birads: str
    cohort: str
    label: Optional[int] = None   # 0 benign, 1 malignant, None unlabeled

    def __post_init__(self) -> None:
        object.__setattr__(self, "age", float(self.age))
        object.__setattr__(self, "size", float(self.size))
        object.__setattr__(self, "ri", float(self.ri))
        object.__setattr__(self, "palpable", int(self.palpable))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))
        errors = _rule_errors(self)
        if errors:
            raise ValidationError(errors)

    @classmethod
    def from_dict(cls, data: Mapping[str, object], row: Optional[int] = None) -> "LesionRecord":
        """Build a record from CSV/JSON field names, collecting every field error."""
        values, errors = _coerce_fields(data)
        if errors:
            raise ValidationError(errors, row=row)
        try:
            return cls(**values)
        except ValidationError as exc:
            raise ValidationError(exc.errors, row=row) from None

    def to_dict(self) -> dict[str, object]:
        return {
            "id": self.id,
            "age": self.age,
            "size_mm": self.size,
            "ri": self.ri,
            "palpable": self.palpable,
            "shape": self.shape,
            "margins": self.margins,
            "orientation": self.orientation,
            "birads": self.birads,
            "cohort": self.cohort,
            "label": self.label,
        }


def validate_record_dict(data: Mapping[str, object]) -> list[tuple[str, str]]:
    """All (field, message) problems with ``data``, empty when it is a valid record."""
    try:
        LesionRecord.from_dict(data)
    except ValidationError as exc:
        return exc.errors
    return []


def _rule_errors(r: LesionRecord) -> list[tuple[str, str]]:
    errs: list[tuple[str, str]] = []
    if not isinstance(r.id, str) or not r.id:
        errs.append(("id", "id must be a nonempty string"))
    if not np.isfinite(r.age):
        errs.append(("age", f"age must be finite (got {r.age!r})"))
    elif r.age < AGE_MIN:
        errs.append(("age", f"age ≥ 18 violated (got {r.age:g})"))
    if not np.isfinite(r.size):
        errs.append(("size", f"size must be finite (got {r.size!r})"))
    elif r.size <= 0.0:
        errs.append(("size", f"size > 0 violated (got {r.size:g})"))
    elif r.size > SIZE_MAX:
        errs.append(("size", f"size ≤ 30 violated (got {r.size:g})"))
    if not np.isfinite(r.ri):
        errs.append(("ri", f"ri must be finite (got {r.ri!r})"))
    elif r.ri < 0.0:
        errs.append(("ri", f"ri ≥ 0 violated (got {r.ri:g})"))
    if r.palpable not in (0, 1):
        errs.append(("palpable", f"palpable must be 0 or 1 (got {r.palpable!r})"))
    if r.shape not in SHAPES:
        errs.append(("shape", f"unknown shape {r.shape!r} (expected one of {', '.join(SHAPES)})"))
    if r.margins not in MARGINS:
        errs.append(("margins", f"unknown margins {r.margins!r} (expected one of {', '.join(MARGINS)})"))
    if r.orientation not in ORIENTATIONS:
        errs.append(("orientation",
                     f"unknown orientation {r.orientation!r} (expected one of {', '.join(ORIENTATIONS)})"))
    if r.birads not in BIRADS_CATEGORIES:
        errs.append(("birads",
                     f"unknown birads {r.birads!r} (expected one of {', '.join(BIRADS_CATEGORIES)})"))
    if r.cohort not in COHORTS:
        errs.append(("cohort", f"unknown cohort {r.cohort!r} (expected one of {', '.join(COHORTS)})"))
    if r.label is not None and r.label not in (0, 1):
        errs.append(("label", f"label must be 0, 1, or absent (got {r.label!r})"))
    return errs


_NUMERIC_FIELDS = {"age": "age", "size_mm": "size", "ri": "ri"}
_STRING_FIELDS = ("shape", "margins", "orientation", "birads", "cohort")


def _coerce_fields(data: Mapping[str, object]) -> tuple[dict[str, object], list[tuple[str, str]]]:
    values: dict[str, object] = {}
    errors: list[tuple[str, str]] = []

    def raw(key: str, alias: Optional[str] = None):
        if key in data:
            return data[key]
        if alias is not None and alias in data:
            return data[alias]
        return None

    ident = raw("id")
    if ident is None or str(ident).strip() == "":
        errors.append(("id", "missing value for required field 'id'"))
    else:
        values["id"] = str(ident).strip()

    for key, attr in _NUMERIC_FIELDS.items():
        v = raw(key, "size" if key == "size_mm" else None)
        if v is None or (isinstance(v, str) and v.strip() == ""):
            errors.append((attr, f"missing value for required field '{attr}'"))
            continue
        try:
            values[attr] = float(v)
        except (TypeError, ValueError):
            errors.append((attr, f"malformed value {v!r} for field '{attr}' (expected a number)"))

    v = raw("palpable")
    if v is None or (isinstance(v, str) and v.strip() == ""):
        errors.append(("palpable", "missing value for required field 'palpable'"))
    else:
        try:
            values["palpable"] = int(v)
        except (TypeError, ValueError):
            errors.append(("palpable", f"malformed value {v!r} for field 'palpable' (expected 0 or 1)"))

    for key in _STRING_FIELDS:
        v = raw(key)
        if v is None or str(v).strip() == "":
            errors.append((key, f"missing value for required field '{key}'"))
        else:
            values[key] = str(v).strip()

    v = raw("label")
    if v is None or (isinstance(v, str) and v.strip() == ""):
        values["label"] = None
    else:
        try:
            values["label"] = int(v)
        except (TypeError, ValueError):
            errors.append(("label", f"malformed value {v!r} for field 'label' (expected 0 or 1)"))

    return values, errors


@dataclass(frozen=True)
class Dataset:
    """Immutable, ordered collection of lesion records with unique ids."""

    records: tuple[LesionRecord, ...]
    provenance: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for r in self.records:
            if r.id in seen:
                raise ValidationError.single("id", f"duplicate id {r.id!r} within dataset")
            seen.add(r.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LesionRecord]:
        return iter(self.records)

    def __getitem__(self, i: int) -> LesionRecord:
        return self.records[i]

    @property
    def is_labeled(self) -> bool:
        return all(r.label is not None for r in self.records)

    def labels(self) -> np.ndarray:
        """Label vector; raises if any record is unlabeled."""
        out = np.empty(len(self.records), dtype=np.int64)
        for i, r in enumerate(self.records):
            if r.label is None:
                raise ValidationError.single("label", f"record {r.id!r} is unlabeled")
            out[i] = r.label
        return out


Source = Union[str, Path, bytes, IO[str], IO[bytes]]


def _as_text_stream(source: Source) -> IO[str]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, bytes):
        return io.StringIO(source.decode("utf-8"))
    if isinstance(source, io.TextIOBase):
        return source
    # binary file object
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def parse_csv(source: Source, provenance: Optional[str] = None) -> Dataset:
    """Parse and validate an interchange CSV into a Dataset, preserving row order.

    The header must name exactly the columns in ``CSV_COLUMNS`` (any order).
    The first row violating the schema aborts parsing with its physical line
    number and every offending field of that row.
    """
    if provenance is None:
        provenance = str(source) if isinstance(source, (str, Path)) else "<stream>"
    stream = _as_text_stream(source)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError.single("header", "empty CSV: missing header row") from None
    header = [h.strip() for h in header]
    missing = set(CSV_COLUMNS) - set(header)
    unknown = set(header) - set(CSV_COLUMNS)
    if missing or unknown:
        parts = []
        if missing:
            parts.append(f"missing columns: {', '.join(sorted(missing))}")
        if unknown:
            parts.append(f"unknown columns: {', '.join(sorted(unknown))}")
        raise ValidationError.single("header", "bad CSV header: " + "; ".join(parts))

    records = []
    for lineno, cells in enumerate(reader, start=2):
        if not cells:
            continue  # tolerate a trailing blank line
        if len(cells) != len(header):
            raise ValidationError.single(
                "row", f"expected {len(header)} fields, got {len(cells)}", row=lineno)
        records.append(LesionRecord.from_dict(dict(zip(header, cells)), row=lineno))
    return Dataset(tuple(records), provenance=provenance)


def _fmt_cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_csv(ds: Dataset, sink: Optional[IO[str]] = None) -> Optional[str]:
    """Write ``ds`` as the interchange CSV; returns the text when ``sink`` is None.

    Floats are rendered with shortest round-trip precision so that
    ``parse_csv(serialize_csv(ds)) == ds`` holds exactly.
    """
    out = sink if sink is not None else io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in ds:
        d = r.to_dict()
        writer.writerow([_fmt_cell(d[c]) for c in CSV_COLUMNS])
    if sink is None:
        return out.getvalue()
    return None


def dataset_hash(ds: Dataset) -> str:
    """sha256 of the canonical CSV serialization."""
    text = serialize_csv(ds)
    assert text is not None
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


SPLIT_STRATEGIES = ("by_cohort", "random")


@dataclass(frozen=True)
class SplitSpec:
    """Sizes, strategy, and seed of a train/calibration/test partition."""

    n_train: int
    n_cal: int
    n_test: int
    strategy: str = "random"
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_train", "n_cal", "n_test"):
            if getattr(self, name) <= 0:
                raise ValidationError.single(name, f"{name} must be positive")
        if self.strategy not in SPLIT_STRATEGIES:
            raise ValidationError.single(
                "strategy", f"unknown strategy {self.strategy!r} (expected one of {SPLIT_STRATEGIES})")


def _take(ds: Dataset, idx: np.ndarray, tag: str) -> Dataset:
    return Dataset(tuple(ds.records[i] for i in idx), provenance=f"{ds.provenance}#{tag}")


def split_dataset(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Deterministic disjoint (train, calibration, test) partition of ``ds``.

    ``by_cohort`` puts only retrospective records in train and only
    prospective records in test; everything left over forms the calibration
    split. ``random`` shuffles with the seed and slices.
    """
    n = len(ds)
    total = spec.n_train + spec.n_cal + spec.n_test
    if total != n:
        raise ValidationError.single(
            "sizes", f"split sizes sum to {total}, dataset has {n} records")
    rng = np.random.default_rng(spec.seed)
    if spec.strategy == "random":
        order = rng.permutation(n)
        tr = order[:spec.n_train]
        ca = order[spec.n_train:spec.n_train + spec.n_cal]
        te = order[spec.n_train + spec.n_cal:]
    else:
        retro = np.array([i for i, r in enumerate(ds) if r.cohort == "retrospective"], dtype=int)
        pros = np.array([i for i, r in enumerate(ds) if r.cohort == "prospective"], dtype=int)
        if len(retro) < spec.n_train:
            raise ValidationError.single(
                "n_train", f"by_cohort needs {spec.n_train} retrospective records, have {len(retro)}")
        if len(pros) < spec.n_test:
            raise ValidationError.single(
                "n_test", f"by_cohort needs {spec.n_test} prospective records, have {len(pros)}")
        retro = retro[rng.permutation(len(retro))]
        pros = pros[rng.permutation(len(pros))]
        tr = retro[:spec.n_train]
        te = pros[:spec.n_test]
        ca = np.concatenate([retro[spec.n_train:], pros[spec.n_test:]])
    return _take(ds, tr, "train"), _take(ds, ca, "cal"), _take(ds, te, "test")


@dataclass(frozen=True)
class CohortSummary:
    n: int
    age_mean: float
    age_sd: float
    size_mean: float
    size_sd: float
    ri_mean: float
    ri_sd: float
    palpable_rate: float
    shape_props: dict[str, float]
    margins_props: dict[str, float]
    orientation_props: dict[str, float]
    malignancy_rate: Optional[float]   # None when the cohort has no labels


@dataclass(frozen=True)
class SummaryStats:
    per_cohort: dict[str, CohortSummary]


def _mean_sd(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mean, sd


def _props(values: list[str], vocab: tuple[str, ...]) -> dict[str, float]:
    n = len(values)
    return {v: sum(1 for x in values if x == v) / n for v in vocab}


def summarize(ds: Dataset) -> SummaryStats:
    """Per-cohort means (sample sd), category proportions, and malignancy rate."""
    if len(ds) == 0:
        raise ValidationError.single("dataset", "cannot summarize an empty dataset")
    per_cohort: dict[str, CohortSummary] = {}
    for cohort in COHORTS:
        recs = [r for r in ds if r.cohort == cohort]
        if not recs:
            continue
        age_mean, age_sd = _mean_sd([r.age for r in recs])
        size_mean, size_sd = _mean_sd([r.size for r in recs])
        ri_mean, ri_sd = _mean_sd([r.ri for r in recs])
        labels = [r.label for r in recs if r.label is not None]
        per_cohort[cohort] = CohortSummary(
            n=len(recs),
            age_mean=age_mean, age_sd=age_sd,
            size_mean=size_mean, size_sd=size_sd,
            ri_mean=ri_mean, ri_sd=ri_sd,
            palpable_rate=sum(r.palpable for r in recs) / len(recs),
            shape_props=_props([r.shape for r in recs], SHAPES),
            margins_props=_props([r.margins for r in recs], MARGINS),
            orientation_props=_props([r.orientation for r in recs], ORIENTATIONS),
            malignancy_rate=(sum(labels) / len(labels)) if labels else None,
        )
    return SummaryStats(per_cohort=per_cohort)
