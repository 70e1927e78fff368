"""Random-forest training and large-spread enforcement.

A from-scratch CART forest (gini impurity, bootstrap resampling, per-split
feature subsampling, midpoint thresholds) provides the candidate pool.  The
large-spread trainer then grows an ensemble greedily: it always picks the
pool tree with the fewest feature overlaps against the current selection and
repairs remaining overlaps by pushing conflicting threshold pairs apart, one
random offset per conflict, until the spread condition holds or the sweep
budget runs out.  Trees whose repair fails are discarded, so every returned
ensemble is large-spread by construction.

Hierarchical training partitions the features round-robin, trains an
independent sub-ensemble per partition on the projected data, and merges:
trees built on disjoint features cannot violate the spread condition across
partitions.

All randomness flows through one seeded ``random.Random`` stream per
training call, so identical inputs give byte-identical ensembles.
"""

from __future__ import annotations

import math
import random
from bisect import bisect_left
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

from .core import (
    DecisionTree,
    Ensemble,
    Leaf,
    NormOrder,
    Node,
    Split,
    check_norm_order,
    iter_splits,
    tree_sequence,
)

__all__ = [
    "Dataset",
    "TrainConfig",
    "train_random_forest",
    "get_best_tree",
    "fix_forest",
    "train_large_spread",
    "train_hierarchical",
]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus {+1, -1} labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if labels.shape != (features.shape[0],):
            raise ValueError("labels must be one per feature row")
        if features.size and not np.all(np.isfinite(features)):
            raise ValueError("feature values must be finite")
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("labels must be +1 or -1")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    @property
    def dimensionality(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def rows(self) -> Iterator[tuple[tuple[float, ...], int]]:
        for i in range(len(self)):
            yield tuple(float(v) for v in self.features[i]), int(self.labels[i])

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx])


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters for large-spread training."""

    num_trees: int
    max_depth: int
    p: NormOrder
    k: float
    max_iter: int = 100
    partitions: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_trees < 1 or self.num_trees % 2 == 0:
            raise ValueError(f"num_trees must be odd and >= 1, got {self.num_trees}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        p = check_norm_order(self.p)
        if p == 0:
            raise ValueError("training targets p >= 1 or inf attackers, not p = 0")
        object.__setattr__(self, "p", p)
        k = float(self.k)
        if not math.isfinite(k) or k <= 0.0:
            raise ValueError(f"k must be finite and > 0, got {self.k!r}")
        object.__setattr__(self, "k", k)
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.partitions < 1:
            raise ValueError("partitions must be >= 1")


# ---------------------------------------------------------------------------
# CART forest
# ---------------------------------------------------------------------------


def _best_split(
    X: np.ndarray, y: np.ndarray, candidates: Sequence[int]
) -> Optional[tuple[int, float]]:
    """Feature/threshold with minimum weighted gini over the candidates.

    Thresholds are midpoints between consecutive distinct sorted values.
    Ties keep the first candidate feature and the smallest threshold.
    """
    n = len(y)
    best_score = math.inf
    best: Optional[tuple[int, float]] = None
    for f in candidates:
        col = X[:, f]
        order = np.argsort(col, kind="stable")
        v = col[order]
        pos = np.cumsum(y[order] == 1)
        cut = np.nonzero(v[:-1] < v[1:])[0]  # split after index i
        if cut.size == 0:
            continue
        left_n = cut + 1
        right_n = n - left_n
        left_pos = pos[cut]
        right_pos = pos[-1] - left_pos
        gini_left = 1.0 - (left_pos / left_n) ** 2 - ((left_n - left_pos) / left_n) ** 2
        gini_right = (
            1.0 - (right_pos / right_n) ** 2 - ((right_n - right_pos) / right_n) ** 2
        )
        weighted = (left_n * gini_left + right_n * gini_right) / n
        j = int(np.argmin(weighted))
        if weighted[j] < best_score:
            i = int(cut[j])
            threshold = float((v[i] + v[i + 1]) / 2.0)
            if threshold >= v[i + 1]:  # midpoint rounded up between adjacent floats
                threshold = float(v[i])
            best_score = float(weighted[j])
            best = (int(f), threshold)
    return best


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    depth: int,
    max_depth: int,
    n_candidates: int,
    rng: random.Random,
) -> Node:
    n = len(y)
    pos = int((y == 1).sum())
    majority = 1 if 2 * pos >= n else -1
    if depth >= max_depth or n < 2 or pos == 0 or pos == n:
        return Leaf(majority)
    candidates = rng.sample(range(X.shape[1]), n_candidates)
    found = _best_split(X, y, candidates)
    if found is None:
        return Leaf(majority)
    f, threshold = found
    mask = X[:, f] <= threshold
    return Split(
        f,
        threshold,
        _grow_tree(X[mask], y[mask], depth + 1, max_depth, n_candidates, rng),
        _grow_tree(X[~mask], y[~mask], depth + 1, max_depth, n_candidates, rng),
    )


def _train_forest(
    X: np.ndarray, y: np.ndarray, count: int, max_depth: int, rng: random.Random
) -> list[DecisionTree]:
    n, d = X.shape
    n_candidates = max(1, math.ceil(math.sqrt(d)))
    trees = []
    for _ in range(count):
        idx = [rng.randrange(n) for _ in range(n)]
        sample = np.asarray(idx, dtype=np.int64)
        trees.append(
            DecisionTree(_grow_tree(X[sample], y[sample], 0, max_depth, n_candidates, rng))
        )
    return trees


def _check_trainable(dataset: Dataset) -> None:
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    labels = set(int(v) for v in np.unique(dataset.labels))
    if labels != {-1, 1}:
        raise ValueError("training data must contain both labels")


def train_random_forest(
    dataset: Dataset, num_trees: int, max_depth: int, seed: int
) -> Ensemble:
    """Plain CART forest; deterministic for a fixed seed."""
    _check_trainable(dataset)
    if max_depth < 1:
        raise ValueError("max_depth must be >= 1")
    rng = random.Random(seed)
    trees = _train_forest(dataset.features, dataset.labels, num_trees, max_depth, rng)
    return Ensemble(tuple(trees), dataset.dimensionality)


# ---------------------------------------------------------------------------
# Overlap counting and threshold repair
# ---------------------------------------------------------------------------


class _MutableNode:
    """Threshold-mutable mirror of a tree node used during repair."""

    __slots__ = ("feature", "threshold", "left", "right", "label")

    def __init__(self, feature=None, threshold=None, left=None, right=None, label=None):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.label = label


def _to_mutable(node: Node) -> _MutableNode:
    if isinstance(node, Leaf):
        return _MutableNode(label=node.label)
    return _MutableNode(
        feature=node.feature,
        threshold=node.threshold,
        left=_to_mutable(node.left),
        right=_to_mutable(node.right),
    )


def _copy_mutable(node: _MutableNode) -> _MutableNode:
    if node.label is not None:
        return _MutableNode(label=node.label)
    return _MutableNode(
        feature=node.feature,
        threshold=node.threshold,
        left=_copy_mutable(node.left),
        right=_copy_mutable(node.right),
    )


def _to_frozen(node: _MutableNode) -> Node:
    if node.label is not None:
        return Leaf(node.label)
    return Split(node.feature, node.threshold, _to_frozen(node.left), _to_frozen(node.right))


def _mutable_splits(root: _MutableNode) -> list[_MutableNode]:
    """Internal nodes in preorder."""
    out, stack = [], [root]
    while stack:
        node = stack.pop()
        if node.label is None:
            out.append(node)
            stack.append(node.right)
            stack.append(node.left)
    return out


def _min_gap_to(sorted_values: list[float], v: float) -> float:
    i = bisect_left(sorted_values, v)
    best = math.inf
    if i < len(sorted_values):
        best = sorted_values[i] - v
    if i > 0:
        best = min(best, v - sorted_values[i - 1])
    return best


def _select_best(
    node_lists: Sequence[Sequence[tuple[int, float]]],
    committed: dict[int, list[float]],
    gap: float,
) -> int:
    """Index of the tree with the fewest overlapping features; first wins ties."""
    best_idx, best_count = 0, math.inf
    for i, nodes in enumerate(node_lists):
        overlapping: set[int] = set()
        for f, v in nodes:
            if f in overlapping:
                continue
            values = committed.get(f)
            if values is not None and _min_gap_to(values, v) <= gap:
                overlapping.add(f)
        if len(overlapping) < best_count:
            best_count = len(overlapping)
            best_idx = i
    return best_idx


def get_best_tree(
    pool: "Ensemble | Sequence[DecisionTree]",
    current: "Ensemble | Sequence[DecisionTree]",
    p: NormOrder,
    k: float,
) -> DecisionTree:
    """Pool tree minimizing the number of features overlapping ``current``.

    A feature overlaps when the candidate tests it with a threshold within
    ``2k`` of some threshold already in ``current``.  Ties break to the first
    tree in pool order.
    """
    pool_seq = tree_sequence(pool)
    if not pool_seq:
        raise ValueError("pool must not be empty")
    p = check_norm_order(p)
    if p == 0:
        raise ValueError("overlap selection targets p >= 1 or inf attackers")
    committed: dict[int, list[float]] = {}
    for tree in tree_sequence(current):
        for split in iter_splits(tree):
            committed.setdefault(split.feature, []).append(split.threshold)
    for values in committed.values():
        values.sort()
    node_lists = [
        [(s.feature, s.threshold) for s in iter_splits(t)] for t in pool_seq
    ]
    return pool_seq[_select_best(node_lists, committed, 2.0 * float(k))]


def _live_spread_ok(roots: Sequence[_MutableNode], k: float) -> bool:
    by_feature: dict[int, list[tuple[float, int]]] = {}
    for i, root in enumerate(roots):
        for node in _mutable_splits(root):
            by_feature.setdefault(node.feature, []).append((node.threshold, i))
    gap = 2.0 * k
    for entries in by_feature.values():
        if len(entries) < 2:
            continue
        entries.sort()
        for (v1, i1), (v2, i2) in zip(entries, entries[1:]):
            if i1 != i2 and v2 - v1 <= gap:
                return False
    return True


def _fix_in_place(
    roots: Sequence[_MutableNode], k: float, max_iter: int, rng: random.Random
) -> bool:
    """Sweep conflicting cross-tree threshold pairs apart until large-spread.

    Pairs are visited in (tree index, preorder position) lexicographic order;
    each conflict draws one offset from (k, 2k] and moves the smaller
    threshold down and the larger one up, so a repaired pair ends strictly
    more than 2k apart.  Returns False when the spread condition still fails
    after ``max_iter`` sweeps.
    """
    ordered: list[tuple[int, int, _MutableNode]] = []
    by_feature: dict[int, list[tuple[int, int, _MutableNode]]] = {}
    for i, root in enumerate(roots):
        for pos, node in enumerate(_mutable_splits(root)):
            entry = (i, pos, node)
            ordered.append(entry)
            by_feature.setdefault(node.feature, []).append(entry)
    gap = 2.0 * k
    iteration = 0
    while not _live_spread_ok(roots, k) and iteration < max_iter:
        iteration += 1
        for ti, pi, node in ordered:
            for tj, pj, peer in by_feature[node.feature]:
                if (tj, pj) <= (ti, pi) or tj == ti:
                    continue
                v, w = node.threshold, peer.threshold
                if abs(v - w) <= gap:
                    offset = k + k * (1.0 - rng.random())  # uniform in (k, 2k]
                    if v <= w:
                        node.threshold = v - offset
                        peer.threshold = w + offset
                    else:
                        node.threshold = v + offset
                        peer.threshold = w - offset
    return _live_spread_ok(roots, k)


def fix_forest(
    ensemble: Ensemble, p: NormOrder, k: float, max_iter: int, seed: int
) -> Optional[Ensemble]:
    """Repair an ensemble's threshold overlaps; None when repair fails.

    Only thresholds move: topology, tested features and leaf labels are
    preserved.  An already large-spread ensemble is returned unchanged.
    """
    p = check_norm_order(p)
    if p == 0:
        raise ValueError("threshold repair targets p >= 1 or inf attackers")
    k = float(k)
    if not (k > 0.0) or not math.isfinite(k):
        raise ValueError(f"k must be finite and > 0, got {k!r}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    roots = [_to_mutable(t.root) for t in ensemble.trees]
    if not _fix_in_place(roots, k, max_iter, random.Random(seed)):
        return None
    trees = tuple(DecisionTree(_to_frozen(r)) for r in roots)
    return Ensemble(trees, ensemble.dimensionality)


# ---------------------------------------------------------------------------
# Large-spread training
# ---------------------------------------------------------------------------


def _train_large_spread_trees(
    X: np.ndarray,
    y: np.ndarray,
    m: int,
    config: TrainConfig,
    rng: random.Random,
) -> Optional[list[DecisionTree]]:
    pool = _train_forest(X, y, 2 * m, config.max_depth, rng)
    first = pool.pop(rng.randrange(len(pool)))
    selected = [_to_mutable(first.root)]
    pool_nodes = {
        id(t): [(s.feature, s.threshold) for s in iter_splits(t)] for t in pool
    }
    attempts = 1
    while attempts < 2 * m and len(selected) < m:
        attempts += 1
        committed: dict[int, list[float]] = {}
        for root in selected:
            for node in _mutable_splits(root):
                committed.setdefault(node.feature, []).append(node.threshold)
        for values in committed.values():
            values.sort()
        j = _select_best([pool_nodes[id(t)] for t in pool], committed, 2.0 * config.k)
        candidate = pool.pop(j)
        trial = [_copy_mutable(root) for root in selected]
        trial.append(_to_mutable(candidate.root))
        if _fix_in_place(trial, config.k, config.max_iter, rng):
            selected = trial
        # otherwise the candidate is discarded and the selection kept as-is
    if len(selected) != m:
        return None
    return [DecisionTree(_to_frozen(root)) for root in selected]


def train_large_spread(dataset: Dataset, config: TrainConfig) -> Optional[Ensemble]:
    """Train a large-spread ensemble by pruning and repairing a CART forest.

    Returns None (training failure) when fewer than ``config.num_trees``
    candidates survive the repair step; any returned ensemble satisfies the
    large-spread condition for ``(config.p, config.k)``.
    """
    _check_trainable(dataset)
    rng = random.Random(config.seed)
    trees = _train_large_spread_trees(
        dataset.features, dataset.labels, config.num_trees, config, rng
    )
    if trees is None:
        return None
    return Ensemble(tuple(trees), dataset.dimensionality)


def _remap_features(node: Node, mapping: Sequence[int]) -> Node:
    if isinstance(node, Leaf):
        return node
    return Split(
        mapping[node.feature],
        node.threshold,
        _remap_features(node.left, mapping),
        _remap_features(node.right, mapping),
    )


def train_hierarchical(dataset: Dataset, config: TrainConfig) -> Optional[Ensemble]:
    """Train per-partition sub-ensembles on disjoint features and merge.

    Features are assigned round-robin to ``config.partitions`` groups; each
    group trains independently on its projection of the data, and the merged
    ensemble is large-spread because cross-partition trees share no features.
    Sub-ensemble sizes are as equal as possible (first groups take the
    remainder) with an odd total.  Returns None when any sub-training fails.
    """
    _check_trainable(dataset)
    d = dataset.dimensionality
    l = config.partitions
    if l > d:
        raise ValueError(f"cannot split {d} features into {l} partitions")
    if l > config.num_trees:
        raise ValueError("more partitions than trees: some partition would be empty")
    rng = random.Random(config.seed)
    base, remainder = divmod(config.num_trees, l)
    merged: list[DecisionTree] = []
    for g in range(l):
        part = list(range(g, d, l))
        size = base + (1 if g < remainder else 0)
        sub = _train_large_spread_trees(
            dataset.features[:, part], dataset.labels, size, config, rng
        )
        if sub is None:
            return None
        merged.extend(DecisionTree(_remap_features(t.root, part)) for t in sub)
    return Ensemble(tuple(merged), d)
