"""Exhaustive ground-truth verification and attack construction.

Everything here is exponential-time by design and bounded by explicit
capacity limits: leaf tuples are enumerated one leaf per tree, each leaf's
hyper-rectangle recomputed independently top-down (the quadratic method the
fast verifier optimizes away), so the two sides share no traversal code and
can certify each other.  Per-feature distances and norm aggregation reuse the
same core primitives as the verifier, which keeps knife-edge instances
(values one ulp from a threshold) consistent across both.

Also provides the constructive split of a joint two-tree attack into
support-disjoint halves, and the exhaustive search for large-spread subsets
of a given size.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import inf, nextafter
from typing import Optional, Sequence

from .core import (
    CapacityError,
    DecisionTree,
    Ensemble,
    HyperRectangle,
    Interval,
    Leaf,
    NormOrder,
    Split,
    _check_budget,
    check_norm_order,
    is_large_spread,
    norm_to_power,
    power_to_norm,
    predict_ensemble,
    predict_tree,
    rect_cost_power,
    tree_sequence,
)

__all__ = [
    "AttackWitness",
    "DEFAULT_TUPLE_LIMIT",
    "leaf_regions",
    "exact_robust",
    "minimal_attack",
    "minimal_joint_attack",
    "split_attack",
    "exists_large_spread_subset",
]

DEFAULT_TUPLE_LIMIT = 1_000_000
SUBSET_TREE_LIMIT = 20


@dataclass(frozen=True)
class AttackWitness:
    """A concrete evasion: the perturbed instance and its perturbation norm."""

    z: tuple[float, ...]
    norm_value: float


# ---------------------------------------------------------------------------
# Independent per-leaf annotation
# ---------------------------------------------------------------------------

Bounds = tuple[tuple[int, float, float], ...]  # sorted (feature, lo, hi) triples


def _leaf_bounds(tree: DecisionTree) -> list[tuple[int, Bounds]]:
    """(label, constraining bounds) for every leaf, recomputed per leaf.

    Each child's hyper-rectangle is a fresh copy of its parent's with one
    feature narrowed; branches whose interval becomes empty are dropped, as
    no instance can reach them.
    """
    out: list[tuple[int, Bounds]] = []

    def walk(node, rect: dict[int, tuple[float, float]]) -> None:
        if isinstance(node, Leaf):
            out.append((node.label, tuple(sorted((f, b[0], b[1]) for f, b in rect.items()))))
            return
        f, v = node.feature, node.threshold
        lo, hi = rect.get(f, (-inf, inf))
        left_hi = min(hi, v)
        if lo < left_hi:
            child = dict(rect)
            child[f] = (lo, left_hi)
            walk(node.left, child)
        right_lo = max(lo, v)
        if right_lo < hi:
            child = dict(rect)
            child[f] = (right_lo, hi)
            walk(node.right, child)

    walk(tree.root, {})
    return out


def leaf_regions(tree: DecisionTree) -> list[tuple[int, HyperRectangle]]:
    """Label and reaching hyper-rectangle for every (satisfiable) leaf."""
    return [
        (label, HyperRectangle((f, Interval(lo, hi)) for f, lo, hi in bounds))
        for label, bounds in _leaf_bounds(tree)
    ]


# ---------------------------------------------------------------------------
# Leaf-tuple search
# ---------------------------------------------------------------------------


def _check_capacity(per_tree: Sequence[Sequence], limit: int) -> None:
    total = 1
    for leaves in per_tree:
        total *= len(leaves)
        if total > limit:
            raise CapacityError(
                f"leaf-tuple count exceeds the configured bound of {limit}"
            )


def _intersect(
    rect: dict[int, tuple[float, float]], bounds: Bounds
) -> Optional[dict[int, tuple[float, float]]]:
    child = dict(rect)
    for f, lo, hi in bounds:
        clo, chi = child.get(f, (-inf, inf))
        nlo, nhi = max(clo, lo), min(chi, hi)
        if nlo >= nhi:
            return None
        child[f] = (nlo, nhi)
    return child


def _rect_cost(rect: dict[int, tuple[float, float]], x: Sequence[float], p: NormOrder) -> float:
    return rect_cost_power(((f, b[0], b[1]) for f, b in sorted(rect.items())), x, p)


def _search_min_attack(
    per_tree: list[list[tuple[int, Bounds]]],
    wrong_flags: list[list[bool]],
    need_wrong: int,
    require_all_wrong: bool,
    p: NormOrder,
    budget_pow: float,
    x: Sequence[float],
) -> tuple[Optional[float], Optional[dict[int, tuple[float, float]]]]:
    """Depth-first enumeration of leaf tuples; returns (min cost, its rectangle).

    Prunes branches whose partial cost already exceeds the budget or the best
    candidate so far (sound: intersecting further leaves only shrinks the
    rectangle, so the cost is non-decreasing), and branches that can no
    longer reach the required number of wrong votes.  The first tuple
    attaining the minimum (in tree-major, leaf-minor order) wins ties, so the
    result is deterministic.
    """
    m = len(per_tree)
    best_cost: Optional[float] = None
    best_rect: Optional[dict[int, tuple[float, float]]] = None

    def rec(i: int, rect: dict[int, tuple[float, float]], wrong: int) -> None:
        nonlocal best_cost, best_rect
        if wrong + (m - i) < need_wrong:
            return
        if i == m:
            if wrong >= need_wrong:
                cost = _rect_cost(rect, x, p)
                if cost <= budget_pow and (best_cost is None or cost < best_cost):
                    best_cost, best_rect = cost, rect
            return
        for (label, bounds), is_wrong in zip(per_tree[i], wrong_flags[i]):
            if require_all_wrong and not is_wrong:
                continue
            child = _intersect(rect, bounds)
            if child is None:
                continue
            partial = _rect_cost(child, x, p)
            if partial > budget_pow:
                continue
            if best_cost is not None and partial > best_cost:
                continue
            rec(i + 1, child, wrong + (1 if is_wrong else 0))

    rec(0, {}, 0)
    return best_cost, best_rect


def _witness_vector(
    x: Sequence[float], rect: dict[int, tuple[float, float]]
) -> tuple[float, ...]:
    # Components are placed exactly: inside values stay, pushes up land on the
    # float successor of the open lower bound, pushes down on the closed
    # upper bound.  Membership therefore holds exactly, so the witness
    # provably follows the chosen leaves.
    z = list(float(v) for v in x)
    for f, (lo, hi) in rect.items():
        if lo < z[f] <= hi:
            continue
        z[f] = nextafter(lo, inf) if z[f] <= lo else hi
    return tuple(z)


def _prepare(
    trees: Sequence[DecisionTree], y: int, max_leaf_tuples: int
) -> tuple[list[list[tuple[int, Bounds]]], list[list[bool]]]:
    per_tree = [_leaf_bounds(t) for t in trees]
    _check_capacity(per_tree, max_leaf_tuples)
    wrong_flags = [[label != y for label, _ in leaves] for leaves in per_tree]
    return per_tree, wrong_flags


def exact_robust(
    ensemble: Ensemble,
    p: NormOrder,
    k: float,
    x: Sequence[float],
    y: int,
    max_leaf_tuples: int = DEFAULT_TUPLE_LIMIT,
) -> tuple[bool, Optional[AttackWitness]]:
    """Ground-truth robustness by enumerating every leaf tuple.

    Returns ``(False, witness)`` with a minimum-norm evasion whenever the
    ensemble mispredicts ``x`` (zero-norm witness) or some in-budget
    perturbation flips a majority of trees; ``(True, None)`` otherwise.
    """
    p = check_norm_order(p)
    k = _check_budget(k)
    if y not in (-1, 1):
        raise ValueError(f"label must be +1 or -1, got {y!r}")
    per_tree, wrong_flags = _prepare(ensemble.trees, y, max_leaf_tuples)
    if predict_ensemble(ensemble, x) != y:
        return False, AttackWitness(tuple(float(v) for v in x), 0.0)
    need = (len(ensemble.trees) - 1) // 2 + 1
    cost, rect = _search_min_attack(
        per_tree, wrong_flags, need, False, p, norm_to_power(k, p), x
    )
    if cost is None:
        return True, None
    return False, AttackWitness(_witness_vector(x, rect), power_to_norm(cost, p))


def minimal_attack(
    ensemble: Ensemble,
    p: NormOrder,
    x: Sequence[float],
    y: int,
    max_leaf_tuples: int = DEFAULT_TUPLE_LIMIT,
) -> Optional[AttackWitness]:
    """Minimum-norm evasion against the ensemble, with no budget cap.

    Returns ``None`` when no perturbation at all can make the ensemble output
    a label different from ``y``.
    """
    p = check_norm_order(p)
    if y not in (-1, 1):
        raise ValueError(f"label must be +1 or -1, got {y!r}")
    per_tree, wrong_flags = _prepare(ensemble.trees, y, max_leaf_tuples)
    if predict_ensemble(ensemble, x) != y:
        return AttackWitness(tuple(float(v) for v in x), 0.0)
    need = (len(ensemble.trees) - 1) // 2 + 1
    cost, rect = _search_min_attack(per_tree, wrong_flags, need, False, p, inf, x)
    if cost is None:
        return None
    return AttackWitness(_witness_vector(x, rect), power_to_norm(cost, p))


def minimal_joint_attack(
    trees: "Ensemble | Sequence[DecisionTree]",
    p: NormOrder,
    x: Sequence[float],
    y: int,
    max_leaf_tuples: int = DEFAULT_TUPLE_LIMIT,
) -> Optional[AttackWitness]:
    """Minimum-norm perturbation making *every* given tree output a label != y.

    Accepts tree collections of any size (no majority vote involved), which
    is what norm-composition properties over tree subsets need.
    """
    p = check_norm_order(p)
    seq = tree_sequence(trees)
    if y not in (-1, 1):
        raise ValueError(f"label must be +1 or -1, got {y!r}")
    per_tree, wrong_flags = _prepare(seq, y, max_leaf_tuples)
    cost, rect = _search_min_attack(
        per_tree, wrong_flags, len(seq), True, p, inf, x
    )
    if cost is None:
        return None
    return AttackWitness(_witness_vector(x, rect), power_to_norm(cost, p))


# ---------------------------------------------------------------------------
# Splitting a joint attack into support-disjoint halves
# ---------------------------------------------------------------------------


def split_attack(
    tree: DecisionTree,
    other: DecisionTree,
    x: Sequence[float],
    z: Sequence[float],
) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """Split ``z - x`` into support-disjoint parts attacking each tree alone.

    Walks the first tree along ``z``'s prediction path, collecting every
    feature where ``x`` and ``z`` fall on opposite sides of the tested
    threshold; ``delta`` copies ``z - x`` on those features and ``delta2`` on
    the rest.  By construction ``x + delta`` follows ``z``'s path in the
    first tree.  For a pair whose thresholds are spread further than twice
    the attack radius, ``x + delta2`` also follows ``z``'s path in the second
    tree; callers are responsible for that precondition, and a detectable
    violation raises ValueError.
    """
    if len(x) != len(z):
        raise ValueError("x and z must have the same dimensionality")
    hi_feature = max(tree.max_feature, other.max_feature)
    if hi_feature >= len(x):
        raise ValueError(
            f"instances have {len(x)} features but the trees test feature {hi_feature}"
        )
    crossed: set[int] = set()
    node = tree.root
    while isinstance(node, Split):
        f, v = node.feature, node.threshold
        if (x[f] <= v) != (z[f] <= v):
            crossed.add(f)
        node = node.left if z[f] <= v else node.right
    delta = tuple(z[i] - x[i] if i in crossed else 0.0 for i in range(len(x)))
    delta2 = tuple(0.0 if i in crossed else z[i] - x[i] for i in range(len(x)))
    # The complement part must preserve the second tree's path on z; this can
    # only fail when the spread precondition does not hold.
    residual = tuple(z[i] if i not in crossed else x[i] for i in range(len(x)))
    if predict_tree(other, residual) != predict_tree(other, z):
        raise ValueError(
            "attack split failed: the tree pair is not spread widely enough "
            "for these instances"
        )
    return delta, delta2


# ---------------------------------------------------------------------------
# Exhaustive large-spread subset search
# ---------------------------------------------------------------------------


def exists_large_spread_subset(
    trees: "Ensemble | Sequence[DecisionTree]",
    s: int,
    p: NormOrder,
    k: float,
) -> bool:
    """True iff some size-``s`` subset of the trees is large-spread for (p, k)."""
    seq = tree_sequence(trees)
    p = check_norm_order(p)
    k = _check_budget(k)
    s = int(s)
    if s < 0:
        raise ValueError(f"subset size must be >= 0, got {s}")
    if len(seq) > SUBSET_TREE_LIMIT:
        raise CapacityError(
            f"subset search is exhaustive and limited to {SUBSET_TREE_LIMIT} trees"
        )
    if s > len(seq):
        return False
    return any(
        is_large_spread(combo, p, k) for combo in itertools.combinations(seq, s)
    )
