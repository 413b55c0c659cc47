"""Leaf-local conformal calibration for binary malignancy prediction sets.

The nonconformity score of a labeled case is r = 1 - p_hat(true label | x),
small exactly when the risk model was confident and right. Scores from a
held-out half of the calibration data are grouped by partition-tree leaf;
each leaf gets its own adjusted quantile, and a prediction set keeps every
label whose predicted probability clears 1 - q for the leaf the case lands
in. Because "truth in the set" is equivalent to "score <= q", the per-leaf
quantile directly yields leaf-conditional coverage under exchangeability.

The default adjusted level is alpha_tilde = ceil((k+1) * alpha) / k with the
cutoff at the ceil((1 - alpha_tilde) * k)-th smallest score (clamped into
[1, k]); a ``conservative_level`` switch substitutes the classical
split-conformal index ceil((k+1) * (1 - alpha)) instead, which sits at most
one order statistic higher.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import IO, Mapping, Optional, Sequence

import numpy as np

from .logistic import RiskModel, predict_proba, predict_proba_dataset
from .records import Dataset, LesionRecord, ValidationError
from .tree import PartitionTree, assign_leaf, assign_matrix

DEFAULT_ALPHA = 0.1
DEFAULT_MIN_LEAF_CALIBRATION = 20

RESIDUAL_ROLES = ("full", "tree_half", "quantile_half")


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ResidualSample:
    record: LesionRecord
    residual: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.residual <= 1.0):
            raise ValidationError.single(
                "residual", f"residual must lie in [0, 1] (got {self.residual})")


@dataclass(frozen=True)
class ResidualDataset:
    samples: tuple[ResidualSample, ...]
    role: str = "full"

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.role not in RESIDUAL_ROLES:
            raise ValidationError.single("role", f"unknown residual-dataset role {self.role!r}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def records(self) -> list[LesionRecord]:
        return [s.record for s in self.samples]

    @property
    def residuals(self) -> np.ndarray:
        return np.array([s.residual for s in self.samples], dtype=float)


def compute_residuals(model: RiskModel, cal: Dataset) -> ResidualDataset:
    """Score every calibration case: r = 1 - p_hat(true label | x)."""
    if len(cal) == 0:
        raise ValidationError.single("cal", "calibration dataset is empty")
    y = cal.labels()
    p1 = predict_proba_dataset(model, cal)
    r = np.where(y == 1, 1.0 - p1, p1)
    samples = tuple(ResidualSample(record=rec, residual=float(ri))
                    for rec, ri in zip(cal.records, r))
    return ResidualDataset(samples=samples, role="full")


def split_residuals(rd: ResidualDataset, fraction: float = 0.5,
                    seed: int = 0) -> tuple[ResidualDataset, ResidualDataset]:
    """Label-stratified split into (tree half, quantile half).

    The tree half receives exactly floor(fraction * n) samples: each label
    group contributes its floor share after a seeded shuffle, and leftover
    slots go to the groups with the largest fractional remainders.
    """
    if not (0.0 < fraction < 1.0):
        raise ValidationError.single("fraction", "fraction must lie strictly in (0, 1)")
    n = len(rd)
    if n < 2:
        raise ValidationError.single("rd", "need at least 2 residual samples to split")
    target = int(math.floor(fraction * n))
    if target == 0 or target == n:
        raise ValidationError.single("fraction", f"fraction {fraction} degenerates for n={n}")

    rng = np.random.default_rng(seed)
    groups: dict[object, list[int]] = {}
    for i, s in enumerate(rd.samples):
        groups.setdefault(s.record.label, []).append(i)

    take: dict[object, int] = {}
    remainders: list[tuple[float, object]] = []
    for lab in sorted(groups, key=lambda v: (v is None, v)):
        exact = fraction * len(groups[lab])
        take[lab] = int(math.floor(exact))
        remainders.append((exact - take[lab], lab))
    short = target - sum(take.values())
    for _, lab in sorted(remainders, key=lambda t: (-t[0], str(t[1]))):
        if short <= 0:
            break
        if take[lab] < len(groups[lab]):
            take[lab] += 1
            short -= 1

    first_idx: list[int] = []
    second_idx: list[int] = []
    for lab in sorted(groups, key=lambda v: (v is None, v)):
        idx = np.array(groups[lab], dtype=int)
        idx = idx[rng.permutation(len(idx))]
        first_idx.extend(idx[:take[lab]])
        second_idx.extend(idx[take[lab]:])
    first_idx.sort()
    second_idx.sort()
    d0 = ResidualDataset(tuple(rd.samples[i] for i in first_idx), role="tree_half")
    d1 = ResidualDataset(tuple(rd.samples[i] for i in second_idx), role="quantile_half")
    return d0, d1


@dataclass(frozen=True)
class LeafCalibration:
    """Per-leaf conformal cutoff.

    ``k`` counts the quantile-half samples in this leaf. When that count is
    below the calibration minimum, the pooled (global) quantile is used and
    ``fallback_used`` is set; ``alpha_tilde`` then reports the pooled level
    actually applied.
    """

    leaf_id: int
    k: int
    alpha: float
    alpha_tilde: float
    q: float
    fallback_used: bool = False


def _ceil_near_int(x: float) -> int:
    """ceil() that forgives float noise around exact integers.

    Products like (k+1) * alpha are exact integers for many textbook
    (k, alpha) pairs but land a few ulp above them in binary floating point,
    where a raw ceil would overshoot by one order statistic.
    """
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


def quantile_index(k: int, alpha: float, conservative: bool = False) -> tuple[float, int]:
    """(adjusted level alpha_tilde, 1-based order-statistic index m) for a leaf of size k."""
    if k < 1:
        raise ValidationError.single("k", "quantile index needs k >= 1")
    if conservative:
        m = min(max(_ceil_near_int((k + 1) * (1.0 - alpha)), 1), k)
        return 1.0 - m / k, m
    c = _ceil_near_int((k + 1) * alpha)
    m = min(max(k - c, 1), k)
    return min(1.0, c / k), m


def conformal_cutoff(residuals: np.ndarray, alpha: float,
                     conservative: bool = False) -> tuple[float, float, int]:
    """(q, alpha_tilde, k): the m-th smallest residual at the adjusted level."""
    k = len(residuals)
    alpha_tilde, m = quantile_index(k, alpha, conservative)
    q = float(np.sort(residuals)[m - 1])
    return q, alpha_tilde, k


def calibrate_leaves(tree: PartitionTree, d1: ResidualDataset, alpha: float = DEFAULT_ALPHA,
                     k_min: int = DEFAULT_MIN_LEAF_CALIBRATION,
                     conservative_level: bool = False) -> dict[int, LeafCalibration]:
    """Adjusted conformal quantile for every leaf of the partition tree.

    Leaves with fewer than ``k_min`` quantile-half samples fall back to the
    cutoff pooled over all of ``d1``, flagged so reports can show it.
    """
    if not (0.0 < alpha < 1.0):
        raise ValidationError.single("alpha", f"alpha must lie in (0, 1) (got {alpha})")
    if len(d1) == 0:
        raise ValidationError.single("d1", "quantile half is empty")
    X = tree.encoder.encode_records(d1.records)
    leaves = assign_matrix(tree, X)
    residuals = d1.residuals
    q_glob, at_glob, _ = conformal_cutoff(residuals, alpha, conservative_level)

    out: dict[int, LeafCalibration] = {}
    for leaf in tree.leaf_ids():
        mask = leaves == leaf
        k_j = int(mask.sum())
        if k_j >= k_min:
            q, at, _ = conformal_cutoff(residuals[mask], alpha, conservative_level)
            out[leaf] = LeafCalibration(leaf_id=leaf, k=k_j, alpha=alpha,
                                        alpha_tilde=at, q=q)
        else:
            out[leaf] = LeafCalibration(leaf_id=leaf, k=k_j, alpha=alpha,
                                        alpha_tilde=at_glob, q=q_glob, fallback_used=True)
    return out


@dataclass(frozen=True)
class PredictionSet:
    """Subset of {benign=0, malignant=1} with its provenance."""

    labels: tuple[int, ...]
    leaf_id: int
    cutoff: float       # 1 - q for the leaf used
    risk: float         # point estimate p_hat(malignant | x)

    def __contains__(self, label: int) -> bool:
        return label in self.labels

    @property
    def size(self) -> int:
        return len(self.labels)


def predict_set(model: RiskModel, tree: PartitionTree,
                calibrations: Mapping[int, LeafCalibration],
                record: LesionRecord) -> PredictionSet:
    """Labels whose predicted probability clears the leaf's cutoff 1 - q."""
    leaf = assign_leaf(tree, record)
    lc = calibrations.get(leaf)
    if lc is None:
        raise CalibrationError(f"no calibration entry for leaf {leaf}")
    p1 = predict_proba(model, record)
    cutoff = 1.0 - lc.q
    labels = tuple(lab for lab, p in ((0, 1.0 - p1), (1, p1)) if p >= cutoff)
    return PredictionSet(labels=labels, leaf_id=leaf, cutoff=cutoff, risk=p1)


@dataclass(frozen=True)
class CoverageRow:
    leaf: object           # leaf id, or "all" for the marginal row
    n: int
    avg_set_size: float
    coverage_pct: float
    truth_only_pct: float


@dataclass(frozen=True)
class CoverageReport:
    rows: tuple[CoverageRow, ...]   # per-leaf rows sorted by id, marginal last
    alpha: float

    def marginal(self) -> CoverageRow:
        return self.rows[-1]

    def to_csv(self, sink: Optional[IO[str]] = None) -> Optional[str]:
        out = sink if sink is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["leaf", "avg_set_size", "empirical_coverage_pct", "truth_only_pct", "n"])
        for r in self.rows:
            w.writerow([r.leaf, f"{r.avg_set_size:.2f}", f"{r.coverage_pct:.2f}",
                        f"{r.truth_only_pct:.2f}", r.n])
        return out.getvalue() if sink is None else None


def _row_for(leaf: object, sets: Sequence[PredictionSet], labels: Sequence[int]) -> CoverageRow:
    n = len(sets)
    sizes = sum(s.size for s in sets)
    covered = sum(1 for s, y in zip(sets, labels) if y in s.labels)
    truth_only = sum(1 for s, y in zip(sets, labels) if s.labels == (y,))
    return CoverageRow(leaf=leaf, n=n, avg_set_size=sizes / n,
                       coverage_pct=100.0 * covered / n,
                       truth_only_pct=100.0 * truth_only / n)


def coverage_report(sets: Sequence[PredictionSet], labels: Sequence[int],
                    alpha: float = DEFAULT_ALPHA) -> CoverageReport:
    """Per-leaf and marginal set size, empirical coverage, and truth-only rates."""
    if len(sets) == 0:
        raise ValidationError.single("sets", "cannot report on zero prediction sets")
    if len(sets) != len(labels):
        raise ValidationError.single(
            "labels", f"{len(sets)} sets but {len(labels)} labels")
    by_leaf: dict[int, tuple[list[PredictionSet], list[int]]] = {}
    for s, y in zip(sets, labels):
        by_leaf.setdefault(s.leaf_id, ([], []))
        by_leaf[s.leaf_id][0].append(s)
        by_leaf[s.leaf_id][1].append(int(y))
    rows = [_row_for(leaf, ss, ys) for leaf, (ss, ys) in sorted(by_leaf.items())]
    rows.append(_row_for("all", list(sets), [int(y) for y in labels]))
    return CoverageReport(rows=tuple(rows), alpha=alpha)
