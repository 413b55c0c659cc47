"""Classification and calibration metrics over probability outputs, plus the
NPV-maximizing threshold search under a PPV floor.

Conventions, fixed once here so every report agrees: a case is called
positive when its probability is >= the threshold (closed at the threshold),
and a ratio with an empty denominator is reported as absent (None), never
coerced to 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np

LOG_LOSS_CLIP = 1e-15


class MetricsError(ValueError):
    pass


def _as_prob_array(probs: Sequence[float]) -> np.ndarray:
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise MetricsError("probabilities must be a nonempty 1-D sequence")
    if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
        raise MetricsError("probabilities must lie in [0, 1]")
    return p


def _as_label_array(labels: Sequence[int], n: int) -> np.ndarray:
    y = np.asarray(labels, dtype=int)
    if y.shape != (n,):
        raise MetricsError(f"labels length {y.shape} does not match probabilities ({n})")
    if np.any((y != 0) & (y != 1)):
        raise MetricsError("labels must be 0 or 1")
    return y


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


@dataclass(frozen=True)
class ThresholdCurve:
    thresholds: tuple[float, ...]
    sensitivity: tuple[Optional[float], ...]
    specificity: tuple[Optional[float], ...]
    ppv: tuple[Optional[float], ...]
    npv: tuple[Optional[float], ...]

    def to_csv(self, sink: Optional[IO[str]] = None) -> Optional[str]:
        out = sink if sink is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["threshold", "sensitivity", "specificity", "ppv", "npv"])
        for i, t in enumerate(self.thresholds):
            w.writerow([repr(float(t))] +
                       ["" if v is None else repr(float(v))
                        for v in (self.sensitivity[i], self.specificity[i],
                                  self.ppv[i], self.npv[i])])
        return out.getvalue() if sink is None else None


def confusion_counts(probs: np.ndarray, labels: np.ndarray, t: float) -> tuple[int, int, int, int]:
    """(TP, FP, TN, FN) with positive prediction at p >= t."""
    pred = probs >= t
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    tn = int(np.sum(~pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return tp, fp, tn, fn


def threshold_curve(probs: Sequence[float], labels: Sequence[int],
                    grid: Sequence[float]) -> ThresholdCurve:
    """Sensitivity / specificity / PPV / NPV along an ascending threshold grid."""
    p = _as_prob_array(probs)
    y = _as_label_array(labels, len(p))
    ts = np.asarray(grid, dtype=float)
    if ts.ndim != 1 or len(ts) == 0:
        raise MetricsError("threshold grid must be a nonempty 1-D sequence")
    if np.any(ts < 0.0) or np.any(ts > 1.0):
        raise MetricsError("thresholds must lie in [0, 1]")
    if np.any(np.diff(ts) < 0):
        raise MetricsError("threshold grid must be ascending")
    sens, spec, ppv, npv = [], [], [], []
    for t in ts:
        tp, fp, tn, fn = confusion_counts(p, y, float(t))
        sens.append(_ratio(tp, tp + fn))
        spec.append(_ratio(tn, tn + fp))
        ppv.append(_ratio(tp, tp + fp))
        npv.append(_ratio(tn, tn + fn))
    return ThresholdCurve(tuple(float(t) for t in ts), tuple(sens), tuple(spec),
                          tuple(ppv), tuple(npv))


@dataclass(frozen=True)
class ScalarMetrics:
    auroc: float
    auprc: float
    log_loss: float


def log_loss(probs: Sequence[float], labels: Sequence[int]) -> float:
    """Mean negative log-likelihood with probabilities clipped at 1e-15."""
    p = _as_prob_array(probs)
    y = _as_label_array(labels, len(p))
    q = np.clip(p, LOG_LOSS_CLIP, 1.0 - LOG_LOSS_CLIP)
    return float(-np.mean(y * np.log(q) + (1 - y) * np.log(1.0 - q)))


def auroc_score(probs: Sequence[float], labels: Sequence[int]) -> float:
    """P(score_pos > score_neg) + 0.5 * P(tie), computed via mid-ranks.

    The mid-rank sum is an exact multiple of 0.5 for realistic sizes, so the
    result equals exhaustive pair counting bit for bit.
    """
    p = _as_prob_array(probs)
    y = _as_label_array(labels, len(p))
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("AUROC needs both classes present")
    order = np.argsort(p, kind="mergesort")
    sorted_p = p[order]
    ranks = np.empty(len(p), dtype=float)
    i = 0
    while i < len(p):
        j = i
        while j + 1 < len(p) and sorted_p[j + 1] == sorted_p[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * ((i + 1) + (j + 1))   # mid-rank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[y == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auprc_score(probs: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the precision-recall curve by step interpolation.

    Walking thresholds down through the distinct scores, each recall
    increment contributes its precision: sum over steps of
    (R_i - R_{i-1}) * P_i.
    """
    p = _as_prob_array(probs)
    y = _as_label_array(labels, len(p))
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise MetricsError("AUPRC needs both classes present")
    order = np.argsort(-p, kind="mergesort")
    ps = p[order]
    ys = y[order]
    area = 0.0
    tp = 0
    prev_recall = 0.0
    i = 0
    n = len(ps)
    while i < n:
        j = i
        while j + 1 < n and ps[j + 1] == ps[i]:
            j += 1
        tp += int(ys[i:j + 1].sum())
        precision = tp / (j + 1)
        recall = tp / n_pos
        area += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return area


def scalar_metrics(probs: Sequence[float], labels: Sequence[int]) -> ScalarMetrics:
    return ScalarMetrics(
        auroc=auroc_score(probs, labels),
        auprc=auprc_score(probs, labels),
        log_loss=log_loss(probs, labels),
    )


@dataclass(frozen=True)
class CalibrationBin:
    mean_predicted: float
    observed_rate: float
    count: int


@dataclass(frozen=True)
class CalibrationCurve:
    bins: tuple[CalibrationBin, ...]

    def to_csv(self, sink: Optional[IO[str]] = None) -> Optional[str]:
        out = sink if sink is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["mean_predicted", "observed_rate", "count"])
        for b in self.bins:
            w.writerow([repr(b.mean_predicted), repr(b.observed_rate), b.count])
        return out.getvalue() if sink is None else None


def calibration_curve(probs: Sequence[float], labels: Sequence[int],
                      n_bins: int = 10) -> CalibrationCurve:
    """Reliability bins: equal-width on [0, 1], empty bins omitted."""
    if n_bins < 2:
        raise MetricsError("n_bins must be at least 2")
    p = _as_prob_array(probs)
    y = _as_label_array(labels, len(p))
    idx = np.minimum((p * n_bins).astype(int), n_bins - 1)
    bins = []
    for b in range(n_bins):
        mask = idx == b
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        bins.append(CalibrationBin(
            mean_predicted=float(p[mask].mean()),
            observed_rate=float(y[mask].mean()),
            count=cnt,
        ))
    return CalibrationCurve(tuple(bins))


@dataclass(frozen=True)
class ThresholdDecision:
    """Outcome of the NPV-maximizing search constrained by a PPV floor.

    ``feasible`` is False when no candidate threshold attains the floor; the
    remaining fields are then None. A biopsy is requested at p >= threshold;
    a missed cancer is a positive case below it.
    """

    feasible: bool
    ppv_floor: float
    n: int
    threshold: Optional[float] = None
    npv: Optional[float] = None
    ppv: Optional[float] = None
    biopsies_requested: Optional[int] = None
    biopsies_avoided: Optional[int] = None
    missed_cancers: Optional[int] = None

    def to_json_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "ppv_floor": self.ppv_floor,
            "n": self.n,
            "threshold": self.threshold,
            "npv": self.npv,
            "ppv": self.ppv,
            "biopsies_requested": self.biopsies_requested,
            "biopsies_avoided": self.biopsies_avoided,
            "missed_cancers": self.missed_cancers,
        }


def candidate_thresholds(probs: np.ndarray) -> list[float]:
    """Midpoints of consecutive sorted distinct probabilities, plus {0, 1}."""
    distinct = np.unique(probs)
    mids = [(float(a) + float(b)) / 2.0 for a, b in zip(distinct[:-1], distinct[1:])]
    return sorted({0.0, 1.0, *mids})


def optimize_threshold(probs: Sequence[float], labels: Sequence[int],
                       ppv_floor: float) -> ThresholdDecision:
    """Among thresholds with PPV >= floor, maximize NPV; ties go to the larger
    threshold (fewer biopsies). Returns an explicit infeasibility result when
    the floor cannot be met."""
    p = _as_prob_array(probs)
    y = _as_label_array(labels, len(p))
    if y.sum() == 0 or y.sum() == len(y):
        raise MetricsError("threshold optimization needs both classes present")
    if not (0.0 <= ppv_floor <= 1.0):
        raise MetricsError("ppv_floor must lie in [0, 1]")

    best: Optional[tuple[float, float]] = None   # (npv, threshold)
    best_stats: Optional[tuple[float, Optional[float], int, int, int]] = None
    for t in candidate_thresholds(p):
        tp, fp, tn, fn = confusion_counts(p, y, t)
        ppv = _ratio(tp, tp + fp)
        if ppv is None or ppv < ppv_floor:
            continue
        npv = _ratio(tn, tn + fn)
        key = (-math.inf if npv is None else npv, t)
        if best is None or key > best:
            best = key
            best_stats = (ppv, npv, tp + fp, tn + fn, fn)
    if best is None:
        return ThresholdDecision(feasible=False, ppv_floor=ppv_floor, n=len(y))
    ppv, npv, requested, avoided, missed = best_stats
    return ThresholdDecision(
        feasible=True, ppv_floor=ppv_floor, n=len(y),
        threshold=best[1], npv=npv, ppv=ppv,
        biopsies_requested=requested, biopsies_avoided=avoided, missed_cancers=missed,
    )
