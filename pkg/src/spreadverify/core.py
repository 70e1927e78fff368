"""Domain types and numeric primitives for tree-ensemble robustness checking.

This module holds the immutable model types (trees, ensembles), half-open
interval arithmetic, minimal-perturbation distances, L_p norm machinery
(including the power-domain helpers shared by the fast verifier and the
brute-force oracle so both sides compute bit-identical costs), and the
cross-tree threshold-spread metric that makes compositional verification
sound.

All types are immutable after construction and all functions are pure, so
everything here is safe for unrestricted concurrent use.
"""

from __future__ import annotations

import itertools
import math
import numbers
from dataclasses import dataclass, field
from functools import lru_cache
from math import fsum, inf, isfinite, nextafter
from typing import Iterable, Iterator, Sequence, Union

__all__ = [
    "SpreadVerifyError",
    "EmptyIntervalError",
    "CapacityError",
    "NormOrder",
    "check_norm_order",
    "AttackerModel",
    "Interval",
    "FULL_INTERVAL",
    "HyperRectangle",
    "Leaf",
    "Split",
    "Node",
    "DecisionTree",
    "Ensemble",
    "tree_sequence",
    "iter_splits",
    "predict_tree",
    "predict_ensemble",
    "dist_feature",
    "norm",
    "update_norm",
    "oplus",
    "spread",
    "is_large_spread",
]


class SpreadVerifyError(Exception):
    """Base class for errors raised by this package."""


class EmptyIntervalError(SpreadVerifyError):
    """A perturbation distance was requested for an empty interval."""


class CapacityError(SpreadVerifyError):
    """An exhaustive search would exceed its configured size bound."""


# ---------------------------------------------------------------------------
# Norm orders
# ---------------------------------------------------------------------------

#: A norm order is 0, a positive integer, or math.inf.
NormOrder = Union[int, float]


def check_norm_order(p: NormOrder) -> NormOrder:
    """Validate and normalize a norm order.

    Accepts 0, any positive integer (including numpy integers), or
    ``math.inf``; returns the canonical ``int`` / ``math.inf`` form.
    """
    if p == inf:
        return inf
    if isinstance(p, numbers.Integral) and not isinstance(p, bool) and p >= 0:
        return int(p)
    raise ValueError(f"norm order must be 0, a positive integer or inf, got {p!r}")


def _check_budget(k: float) -> float:
    k = float(k)
    if math.isnan(k) or k < 0.0:
        raise ValueError(f"perturbation budget must be >= 0, got {k!r}")
    return k


@dataclass(frozen=True)
class AttackerModel:
    """Threat model: all perturbations of L_p norm at most ``k``."""

    p: NormOrder
    k: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", check_norm_order(self.p))
        k = float(self.k)
        if not isfinite(k) or k < 0.0:
            raise ValueError(f"attacker budget must be finite and >= 0, got {self.k!r}")
        object.__setattr__(self, "k", k)


# ---------------------------------------------------------------------------
# Intervals and hyper-rectangles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    """Half-open interval ``(lo, hi]`` over the extended reals.

    ``lo >= hi`` is the distinguished empty interval; ``(-inf, +inf]`` is the
    distinguished full interval (no constraint).
    """

    lo: float = -inf
    hi: float = inf

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval bounds must not be NaN")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def is_empty(self) -> bool:
        return self.lo >= self.hi

    @property
    def is_full(self) -> bool:
        return self.lo == -inf and self.hi == inf

    def contains(self, x: float) -> bool:
        return self.lo < x <= self.hi

    def intersect_le(self, v: float) -> "Interval":
        """Intersection with ``(-inf, v]`` (the left branch of a split)."""
        return Interval(self.lo, min(self.hi, v))

    def intersect_gt(self, v: float) -> "Interval":
        """Intersection with ``(v, +inf)`` (the right branch of a split)."""
        return Interval(max(self.lo, v), self.hi)


FULL_INTERVAL = Interval()


def _dist_raw(x: float, lo: float, hi: float) -> float:
    # Signed minimal perturbation pushing x into (lo, hi].  Pushing up must
    # clear the open lower bound, so the target is the float successor of lo;
    # pushing down lands exactly on the closed upper bound.
    if lo < x <= hi:
        return 0.0
    if x <= lo:
        return nextafter(lo, inf) - x
    return hi - x


def dist_feature(x_i: float, interval: Interval) -> float:
    """Signed minimal perturbation moving ``x_i`` into ``interval``.

    Returns 0 when ``x_i`` is already inside.  The result may be negative;
    its magnitude is minimal among float values whose addition lands inside.
    """
    if interval.is_empty:
        raise EmptyIntervalError("no perturbation can reach an empty interval")
    return _dist_raw(x_i, interval.lo, interval.hi)


class HyperRectangle:
    """Sparse product of per-feature intervals; absent features are full.

    Normalized: full intervals are never stored, so emptiness and equality
    checks touch only the constrained features.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Iterable[tuple[int, Interval]] = ()) -> None:
        store: dict[int, Interval] = {}
        for f, iv in dict(entries).items():
            if f < 0:
                raise ValueError(f"feature index must be >= 0, got {f}")
            if not iv.is_full:
                store[int(f)] = iv
        self._entries = store

    def get(self, feature: int) -> Interval:
        return self._entries.get(feature, FULL_INTERVAL)

    def items(self) -> tuple[tuple[int, Interval], ...]:
        return tuple(sorted(self._entries.items()))

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def is_empty(self) -> bool:
        return any(iv.is_empty for iv in self._entries.values())

    def intersect(self, feature: int, interval: Interval) -> "HyperRectangle":
        cur = self.get(feature)
        new = Interval(max(cur.lo, interval.lo), min(cur.hi, interval.hi))
        out = HyperRectangle()
        out._entries = dict(self._entries)
        if new.is_full:
            out._entries.pop(feature, None)
        else:
            out._entries[feature] = new
        return out

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HyperRectangle):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self) -> str:
        parts = ", ".join(f"{f}: ({iv.lo}, {iv.hi}]" for f, iv in self.items())
        return f"HyperRectangle({{{parts}}})"


# ---------------------------------------------------------------------------
# Trees and ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Leaf:
    label: int

    def __post_init__(self) -> None:
        label = int(self.label)
        if label not in (-1, 1):
            raise ValueError(f"leaf label must be +1 or -1, got {self.label!r}")
        object.__setattr__(self, "label", label)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"

    def __post_init__(self) -> None:
        feature = int(self.feature)
        threshold = float(self.threshold)
        if feature < 0:
            raise ValueError(f"feature index must be >= 0, got {self.feature!r}")
        if not isfinite(threshold):
            raise ValueError(f"threshold must be finite, got {self.threshold!r}")
        for child in (self.left, self.right):
            if not isinstance(child, (Leaf, Split)):
                raise TypeError(f"child nodes must be Leaf or Split, got {child!r}")
        object.__setattr__(self, "feature", feature)
        object.__setattr__(self, "threshold", threshold)


Node = Union[Leaf, Split]


def _scan_node(node: Node) -> tuple[int, int]:
    """(node count, max feature index; -1 if the tree is a bare leaf)."""
    count, max_feature = 0, -1
    stack = [node]
    while stack:
        cur = stack.pop()
        count += 1
        if isinstance(cur, Split):
            max_feature = max(max_feature, cur.feature)
            stack.append(cur.left)
            stack.append(cur.right)
    return count, max_feature


@dataclass(frozen=True)
class DecisionTree:
    """Binary threshold tree over real features with labels in {+1, -1}.

    An instance descends left when ``x[feature] <= threshold`` and right
    otherwise.
    """

    root: Node
    node_count: int = field(init=False, compare=False)
    max_feature: int = field(init=False, compare=False)

    def __post_init__(self) -> None:
        if not isinstance(self.root, (Leaf, Split)):
            raise TypeError(f"tree root must be Leaf or Split, got {self.root!r}")
        count, max_feature = _scan_node(self.root)
        object.__setattr__(self, "node_count", count)
        object.__setattr__(self, "max_feature", max_feature)


@dataclass(frozen=True)
class Ensemble:
    """Majority-voted tree ensemble; the number of trees must be odd."""

    trees: tuple[DecisionTree, ...]
    dimensionality: int

    def __post_init__(self) -> None:
        trees = tuple(self.trees)
        d = int(self.dimensionality)
        if len(trees) % 2 == 0 or not trees:
            raise ValueError(f"ensemble needs an odd number of trees, got {len(trees)}")
        if d < 0:
            raise ValueError("dimensionality must be >= 0")
        for i, t in enumerate(trees):
            if not isinstance(t, DecisionTree):
                raise TypeError(f"tree {i} is not a DecisionTree")
            if t.max_feature >= d:
                raise ValueError(
                    f"tree {i} tests feature {t.max_feature}, but dimensionality is {d}"
                )
        object.__setattr__(self, "trees", trees)
        object.__setattr__(self, "dimensionality", d)

    @property
    def num_trees(self) -> int:
        return len(self.trees)

    @property
    def node_count(self) -> int:
        return sum(t.node_count for t in self.trees)


def tree_sequence(trees: "Ensemble | Sequence[DecisionTree]") -> tuple[DecisionTree, ...]:
    """Normalize an Ensemble or a plain tree sequence to a tuple of trees.

    Spread-style metrics are meaningful for tree collections of any size
    (including even ones), which a voting Ensemble deliberately rejects.
    """
    if isinstance(trees, Ensemble):
        return trees.trees
    out = tuple(trees)
    for t in out:
        if not isinstance(t, DecisionTree):
            raise TypeError("expected DecisionTree instances")
    return out


def iter_splits(tree: "DecisionTree | Node") -> Iterator[Split]:
    """Yield the internal nodes of a tree in preorder."""
    node = tree.root if isinstance(tree, DecisionTree) else tree
    stack = [node]
    while stack:
        cur = stack.pop()
        if isinstance(cur, Split):
            yield cur
            stack.append(cur.right)
            stack.append(cur.left)


def predict_tree(tree: DecisionTree, x: Sequence[float]) -> int:
    """Label assigned to ``x`` by descending the tree (ties go left)."""
    if tree.max_feature >= len(x):
        raise ValueError(
            f"instance has {len(x)} features but the tree tests feature {tree.max_feature}"
        )
    node = tree.root
    while isinstance(node, Split):
        node = node.left if x[node.feature] <= node.threshold else node.right
    return node.label


def predict_ensemble(ensemble: Ensemble, x: Sequence[float]) -> int:
    """Majority vote over the individual tree predictions."""
    if len(x) != ensemble.dimensionality:
        raise ValueError(
            f"instance has {len(x)} features, ensemble expects {ensemble.dimensionality}"
        )
    votes = sum(predict_tree(t, x) for t in ensemble.trees)
    return 1 if votes > 0 else -1


# ---------------------------------------------------------------------------
# L_p norm machinery
# ---------------------------------------------------------------------------
#
# The verifier compares costs against the budget in the "power domain"
# (|delta|^p contributions, summed; plain |delta| for p=inf; 0/1 counts for
# p=0) so p-th roots are taken only when reporting.  fsum makes the
# aggregation correctly rounded and therefore order-independent, which keeps
# the optimized traversal and the naive per-leaf recomputation bit-identical.


def power_contrib(delta: float, p: NormOrder) -> float:
    """Per-component contribution of ``delta`` in the power domain."""
    if p == inf:
        return abs(delta)
    if p == 0:
        return 0 if delta == 0.0 else 1
    if p == 1:
        return abs(delta)
    return abs(delta) ** p


def power_total(contribs: Iterable[float], p: NormOrder) -> float:
    """Aggregate power-domain contributions (sum, max, or count)."""
    if p == inf:
        return max(contribs, default=0.0)
    if p == 0:
        return sum(contribs)
    return fsum(contribs)


def power_to_norm(value: float, p: NormOrder) -> float:
    """Convert a power-domain total back to an L_p norm."""
    if p == 0:
        return float(value)
    if p == inf or p == 1:
        return value
    if value <= 0.0:
        return 0.0
    return value ** (1.0 / p)


def norm_to_power(value: float, p: NormOrder) -> float:
    """Convert an L_p norm (e.g. a budget) into the power domain."""
    if p == 0 or p == inf or p == 1:
        return value
    if value == inf:
        return inf
    return value ** p


def rect_cost_power(
    bounds: Iterable[tuple[int, float, float]], x: Sequence[float], p: NormOrder
) -> float:
    """Power-domain cost of moving ``x`` inside a hyper-rectangle.

    ``bounds`` iterates ``(feature, lo, hi)`` triples in ascending feature
    order; unconstrained features contribute nothing.
    """
    return power_total(
        (power_contrib(_dist_raw(x[f], lo, hi), p) for f, lo, hi in bounds), p
    )


def norm(deltas: Sequence[float], p: NormOrder) -> float:
    """L_p norm of a perturbation vector (L0 counts nonzero components)."""
    p = check_norm_order(p)
    return power_to_norm(power_total((power_contrib(d, p) for d in deltas), p), p)


def update_norm(p: NormOrder, delta_norm: float, old_comp: float, new_comp: float) -> float:
    """Norm of a vector after one component changes, in O(1).

    ``delta_norm`` must be the norm of the original vector whose affected
    component was ``old_comp``; ``new_comp`` is its replacement.  For p=inf
    this assumes ``|new_comp| >= |old_comp|``, which holds whenever the
    change comes from shrinking an interval constraint.
    """
    p = check_norm_order(p)
    if p == inf:
        return max(delta_norm, abs(new_comp))
    if p == 0:
        return delta_norm - (0 if old_comp == 0.0 else 1) + (0 if new_comp == 0.0 else 1)
    base = norm_to_power(delta_norm, p) - power_contrib(old_comp, p) + power_contrib(new_comp, p)
    return power_to_norm(max(base, 0.0), p)


def oplus(norms: Sequence[float], p: NormOrder) -> float:
    """Norm of a sum of support-disjoint vectors, from their norms alone.

    L0 norms add, L_inf norms take the max, and finite p >= 1 combines as
    ``(sum norm^p)^(1/p)``.  Entries must be finite.
    """
    p = check_norm_order(p)
    values = list(norms)
    for v in values:
        if v == inf:
            raise ValueError("oplus is undefined for infinite entries")
    if p == inf:
        return max(values, default=0.0)
    if p == 0:
        return float(sum(values))
    return power_to_norm(fsum(norm_to_power(v, p) for v in values), p)


# ---------------------------------------------------------------------------
# Threshold spread
# ---------------------------------------------------------------------------


def _scalar_gap(a: float, b: float, p: NormOrder) -> float:
    # Scalar L_p distance between two thresholds: |a - b| for every p >= 1
    # and for p = inf; for p = 0 it is 1 when they differ and 0 otherwise.
    if p == 0:
        return 0.0 if a == b else 1.0
    return abs(a - b)


@lru_cache(maxsize=65536)
def _spread_cached(trees: tuple[DecisionTree, ...], p: NormOrder) -> float:
    if len(trees) < 2:
        return inf
    by_feature: dict[int, list[tuple[float, int]]] = {}
    for i, tree in enumerate(trees):
        for split in iter_splits(tree):
            by_feature.setdefault(split.feature, []).append((split.threshold, i))
    best = inf
    for entries in by_feature.values():
        if len(entries) < 2:
            continue
        entries.sort()
        # The minimum cross-tree gap on a feature is realized by some
        # adjacent pair (in sorted threshold order) whose trees differ.
        for (v1, i1), (v2, i2) in itertools.pairwise(entries):
            if i1 != i2:
                gap = _scalar_gap(v1, v2, p)
                if gap < best:
                    best = gap
    return best


def spread(trees: "Ensemble | Sequence[DecisionTree]", p: NormOrder) -> float:
    """Minimum cross-tree distance between same-feature thresholds.

    Returns +inf when fewer than two trees are given or no feature is tested
    by two distinct trees.
    """
    p = check_norm_order(p)
    return _spread_cached(tree_sequence(trees), p)


def is_large_spread(trees: "Ensemble | Sequence[DecisionTree]", p: NormOrder, k: float) -> bool:
    """True when the spread strictly exceeds twice the attack budget.

    With ``k == 0`` the condition degenerates to "no two distinct trees share
    an identical threshold on a common feature", which is norm-independent
    (distance 0 is never positive), so any p is accepted.  For ``k > 0`` the
    L0 scalar distance only takes values in {0, 1}, making the condition
    unsatisfiable for k >= 0.5 and meaningless in general; p = 0 is rejected.
    """
    p = check_norm_order(p)
    k = _check_budget(k)
    seq = tree_sequence(trees)
    if k == 0.0:
        return _spread_cached(seq, p) > 0.0
    if p == 0:
        raise ValueError("large-spread verification is not defined for p=0 with k > 0")
    return _spread_cached(seq, p) > 2.0 * k
