"""Greedy CART regression tree over model residuals.

Leaves partition the lesion space into subgroups that share a difficulty
level for the risk model. Node ids follow the breadth-first numbering of the
implicit full binary tree (root 0, children of node i at 2i+1 and 2i+2), so
leaf ids are sparse but stable for a given fit. At every split the left
child takes strictly-less-than the threshold.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from .encoding import DEFAULT_FEATURES, OrdinalEncoderSpec, make_ordinal_encoder
from .logistic import RiskModel, predict_proba_dataset
from .records import BIRADS_CATEGORIES, Dataset, LesionRecord, ValidationError

MIN_MSE_GAIN = 1e-12


@dataclass(frozen=True)
class SplitNode:
    feature_index: int
    threshold: float


@dataclass(frozen=True)
class LeafNode:
    mean: float
    count: int


@dataclass(frozen=True, eq=False)
class PartitionTree:
    nodes: dict[int, SplitNode | LeafNode]
    encoder: OrdinalEncoderSpec
    max_depth: int
    min_samples_leaf: int

    @property
    def features(self) -> tuple[str, ...]:
        return self.encoder.features

    def leaf_ids(self) -> list[int]:
        return sorted(nid for nid, node in self.nodes.items() if isinstance(node, LeafNode))

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids())


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray,
                min_samples_leaf: int) -> Optional[tuple[float, int, float]]:
    """Lowest total child SSE over midpoint thresholds, or None when no candidate.

    Returns (child_sse, feature_index, threshold); ties resolve to the first
    feature in order and then the smallest threshold.
    """
    n = len(idx)
    best: Optional[tuple[float, int, float]] = None
    for f in range(X.shape[1]):
        xs_all = X[idx, f]
        order = np.argsort(xs_all, kind="mergesort")
        xs = xs_all[order]
        ys = y[idx][order]
        c1 = np.cumsum(ys)
        c2 = np.cumsum(ys * ys)
        pos = np.nonzero(xs[:-1] < xs[1:])[0]
        if len(pos):
            n_left = pos + 1
            n_right = n - n_left
            pos = pos[(n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)]
        if len(pos) == 0:
            continue
        n_left = pos + 1
        n_right = n - n_left
        s1, s2 = c1[-1], c2[-1]
        sse_left = c2[pos] - c1[pos] ** 2 / n_left
        sse_right = (s2 - c2[pos]) - (s1 - c1[pos]) ** 2 / n_right
        total = sse_left + sse_right
        j = int(np.argmin(total))
        if best is None or total[j] < best[0]:
            lo, hi = xs[pos[j]], xs[pos[j] + 1]
            thr = (lo + hi) / 2.0
            if not lo < thr:       # midpoint rounded onto lo: use hi, same partition
                thr = hi
            best = (float(total[j]), f, float(thr))
    return best


def _grow(X: np.ndarray, y: np.ndarray, max_depth: int, min_samples_leaf: int,
          ) -> dict[int, SplitNode | LeafNode]:
    nodes: dict[int, SplitNode | LeafNode] = {}
    queue: deque[tuple[int, np.ndarray, int]] = deque([(0, np.arange(len(y)), 0)])
    while queue:
        nid, idx, depth = queue.popleft()
        yn = y[idx]
        mean = float(yn.mean())
        sse_parent = float(((yn - mean) ** 2).sum())
        best = None
        if depth < max_depth and len(idx) >= 2 * min_samples_leaf:
            best = _best_split(X, y, idx, min_samples_leaf)
        if best is not None and (sse_parent - best[0]) / len(idx) > MIN_MSE_GAIN:
            _, f, thr = best
            nodes[nid] = SplitNode(feature_index=f, threshold=thr)
            mask = X[idx, f] < thr
            queue.append((2 * nid + 1, idx[mask], depth + 1))
            queue.append((2 * nid + 2, idx[~mask], depth + 1))
        else:
            nodes[nid] = LeafNode(mean=mean, count=int(len(idx)))
    return nodes


def fit_tree_matrix(X: np.ndarray, y: np.ndarray, max_depth: int, min_samples_leaf: int,
                    encoder: OrdinalEncoderSpec) -> PartitionTree:
    if len(y) == 0:
        raise ValidationError.single("data", "cannot fit a tree on empty data")
    if max_depth < 0:
        raise ValidationError.single("max_depth", "max_depth must be >= 0")
    if min_samples_leaf < 1:
        raise ValidationError.single("min_samples_leaf", "min_samples_leaf must be >= 1")
    nodes = _grow(np.asarray(X, dtype=float), np.asarray(y, dtype=float),
                  max_depth, min_samples_leaf)
    return PartitionTree(nodes=nodes, encoder=encoder,
                         max_depth=max_depth, min_samples_leaf=min_samples_leaf)


def fit_tree(records: Sequence[LesionRecord], residuals: Sequence[float],
             max_depth: int, min_samples_leaf: int,
             features: Sequence[str] = DEFAULT_FEATURES) -> PartitionTree:
    """Grow the residual tree on ordinal-encoded records.

    Too few samples to split is not an error: the result is a single leaf.
    """
    records = list(records)
    if len(records) != len(residuals):
        raise ValidationError.single("residuals", "records and residuals must align")
    enc = make_ordinal_encoder(features)
    X = enc.encode_records(records)
    return fit_tree_matrix(X, np.asarray(residuals, dtype=float),
                           max_depth, min_samples_leaf, enc)


def assign_matrix(tree: PartitionTree, X: np.ndarray) -> np.ndarray:
    """Leaf id of every row, by deterministic descent (left iff value < threshold)."""
    out = np.zeros(len(X), dtype=int)
    stack = [(0, np.arange(len(X)))]
    while stack:
        nid, idx = stack.pop()
        if len(idx) == 0:
            continue
        node = tree.nodes[nid]
        if isinstance(node, LeafNode):
            out[idx] = nid
            continue
        mask = X[idx, node.feature_index] < node.threshold
        stack.append((2 * nid + 1, idx[mask]))
        stack.append((2 * nid + 2, idx[~mask]))
    return out


def assign_leaf(tree: PartitionTree, record: LesionRecord) -> int:
    x = tree.encoder.encode(record)
    nid = 0
    while True:
        node = tree.nodes[nid]
        if isinstance(node, LeafNode):
            return nid
        nid = 2 * nid + 1 if x[node.feature_index] < node.threshold else 2 * nid + 2


def predict_residual(tree: PartitionTree, record: LesionRecord) -> float:
    node = tree.nodes[assign_leaf(tree, record)]
    assert isinstance(node, LeafNode)
    return node.mean


def predict_matrix(tree: PartitionTree, X: np.ndarray) -> np.ndarray:
    leaves = assign_matrix(tree, X)
    means = {nid: node.mean for nid, node in tree.nodes.items() if isinstance(node, LeafNode)}
    return np.array([means[l] for l in leaves])


@dataclass(frozen=True)
class TreeGridCell:
    max_depth: int
    min_samples_leaf: int
    mean_mse: float
    sd_mse: float


@dataclass(frozen=True)
class TreeGridReport:
    rows: tuple[TreeGridCell, ...]
    chosen_depth: int
    chosen_min_samples_leaf: int
    k: int
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "chosen_max_depth": self.chosen_depth,
            "chosen_min_samples_leaf": self.chosen_min_samples_leaf,
            "k": self.k,
            "seed": self.seed,
            "rows": [{"max_depth": r.max_depth, "min_samples_leaf": r.min_samples_leaf,
                      "mean_mse": r.mean_mse, "sd_mse": r.sd_mse} for r in self.rows],
        }


DEFAULT_DEPTH_GRID = (3, 4, 5, 6)
DEFAULT_MIN_LEAF_GRID = (70, 80, 90, 100)


def tree_grid_search(records: Sequence[LesionRecord], residuals: Sequence[float],
                     depths: Sequence[int] = DEFAULT_DEPTH_GRID,
                     min_leaves: Sequence[int] = DEFAULT_MIN_LEAF_GRID,
                     k: int = 5, seed: int = 0,
                     features: Sequence[str] = DEFAULT_FEATURES,
                     ) -> tuple[PartitionTree, TreeGridReport]:
    """Cross-validated search over (max_depth, min_samples_leaf).

    Picks the cell with the lowest mean held-out MSE; ties break toward the
    smaller depth, then the larger min_samples_leaf. Refits on all the data.
    """
    from .logistic import cv_folds   # same fold convention as the C search

    records = list(records)
    y = np.asarray(residuals, dtype=float)
    if len(records) < k:
        raise ValidationError.single("data", f"need at least {k} samples for {k}-fold CV")
    enc = make_ordinal_encoder(features)
    X = enc.encode_records(records)
    folds = cv_folds(len(records), k, seed)
    all_idx = np.arange(len(records))

    rows: list[TreeGridCell] = []
    best_key: Optional[tuple[float, int, int]] = None
    best_cell: Optional[tuple[int, int]] = None
    for depth, ml in product(depths, min_leaves):
        fold_mse = []
        for held in folds:
            tr = np.setdiff1d(all_idx, held)
            t = fit_tree_matrix(X[tr], y[tr], depth, ml, enc)
            pred = predict_matrix(t, X[held])
            fold_mse.append(float(np.mean((pred - y[held]) ** 2)))
        arr = np.asarray(fold_mse)
        mean_mse = float(arr.mean())
        rows.append(TreeGridCell(depth, ml, mean_mse,
                                 float(arr.std(ddof=1)) if len(arr) > 1 else 0.0))
        key = (mean_mse, depth, -ml)
        if best_key is None or key < best_key:
            best_key = key
            best_cell = (depth, ml)

    assert best_cell is not None
    depth, ml = best_cell
    tree = fit_tree_matrix(X, y, depth, ml, enc)
    report = TreeGridReport(rows=tuple(rows), chosen_depth=depth,
                            chosen_min_samples_leaf=ml, k=k, seed=seed)
    return tree, report


@dataclass(frozen=True)
class LeafProfile:
    """Descriptive profile of one subgroup on a labeled dataset."""

    leaf_id: int
    count: int
    birads_counts: dict[str, int]
    malignancy_rate: float
    accuracy: float            # risk-model accuracy at threshold 0.5
    mean_residual: float


def leaf_profiles(tree: PartitionTree, ds: Dataset, model: RiskModel) -> list[LeafProfile]:
    """One profile per leaf that captures at least one record of ``ds``."""
    if len(ds) == 0:
        raise ValidationError.single("dataset", "cannot profile an empty dataset")
    y = ds.labels()
    X = tree.encoder.encode_records(ds.records)
    leaves = assign_matrix(tree, X)
    probs = predict_proba_dataset(model, ds)
    residuals = np.where(y == 1, 1.0 - probs, probs)
    correct = (probs >= 0.5).astype(int) == y

    profiles = []
    for leaf in tree.leaf_ids():
        mask = leaves == leaf
        cnt = int(mask.sum())
        if cnt == 0:
            continue
        birads = [ds[i].birads for i in np.nonzero(mask)[0]]
        profiles.append(LeafProfile(
            leaf_id=leaf,
            count=cnt,
            birads_counts={c: birads.count(c) for c in BIRADS_CATEGORIES},
            malignancy_rate=float(y[mask].mean()),
            accuracy=float(correct[mask].mean()),
            mean_residual=float(residuals[mask].mean()),
        ))
    return profiles


def rule_path(tree: PartitionTree, leaf_id: int) -> list[str]:
    """Ordered human-readable conditions from the root down to a leaf."""
    if leaf_id not in tree.nodes or not isinstance(tree.nodes[leaf_id], LeafNode):
        raise ValidationError.single("leaf_id", f"unknown leaf id {leaf_id}")
    chain = []
    nid = leaf_id
    while nid != 0:
        parent = (nid - 1) // 2
        chain.append((parent, nid == 2 * parent + 1))
        nid = parent
    conditions = []
    for parent, is_left in reversed(chain):
        node = tree.nodes[parent]
        assert isinstance(node, SplitNode)
        conditions.append(tree.encoder.describe_split(
            tree.features[node.feature_index], node.threshold, is_left))
    return conditions


def format_rules(tree: PartitionTree) -> str:
    """Indented rule list for the whole tree, leaves annotated with their stats."""
    lines: list[str] = []

    def walk(nid: int, depth: int) -> None:
        node = tree.nodes[nid]
        pad = "  " * depth
        if isinstance(node, LeafNode):
            lines.append(f"{pad}leaf {nid}: mean residual {node.mean:.4f} (n={node.count})")
            return
        feat = tree.features[node.feature_index]
        lines.append(f"{pad}node {nid}: {tree.encoder.describe_split(feat, node.threshold, True)}")
        walk(2 * nid + 1, depth + 1)
        lines.append(f"{pad}node {nid}: {tree.encoder.describe_split(feat, node.threshold, False)}")
        walk(2 * nid + 2, depth + 1)

    walk(0, 0)
    return "\n".join(lines)


def tree_to_dict(tree: PartitionTree) -> dict:
    nodes = {}
    for nid, node in tree.nodes.items():
        if isinstance(node, SplitNode):
            nodes[str(nid)] = {"feature": tree.features[node.feature_index],
                               "threshold": node.threshold}
        else:
            nodes[str(nid)] = {"mean": node.mean, "count": node.count}
    return {
        "features": list(tree.features),
        "max_depth": tree.max_depth,
        "min_samples_leaf": tree.min_samples_leaf,
        "nodes": nodes,
    }


def tree_from_dict(doc: dict) -> PartitionTree:
    features = tuple(doc["features"])
    enc = make_ordinal_encoder(features)
    nodes: dict[int, SplitNode | LeafNode] = {}
    for key, nd in doc["nodes"].items():
        nid = int(key)
        if "threshold" in nd:
            nodes[nid] = SplitNode(feature_index=features.index(nd["feature"]),
                                   threshold=float(nd["threshold"]))
        else:
            nodes[nid] = LeafNode(mean=float(nd["mean"]), count=int(nd["count"]))
    return PartitionTree(nodes=nodes, encoder=enc,
                         max_depth=int(doc["max_depth"]),
                         min_samples_leaf=int(doc["min_samples_leaf"]))
