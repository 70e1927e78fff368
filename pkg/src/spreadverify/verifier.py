"""Fast robustness verification for trees and large-spread ensembles.

Single trees are verified by one depth-first traversal that maintains a
single global hyper-rectangle plus a scalar perturbation cost, updating the
cost in O(1) per node and restoring both on backtrack.  Ensembles whose
cross-tree threshold spread strictly exceeds twice the attack budget are
verified compositionally: per-tree minimal attack costs combine through the
support-disjoint norm composition, so the whole check runs in
O(N + m log m).

The ensemble verdict is sound only under the spread precondition, so it is
always checked (cheaply, and cached per ensemble) and its violation raises
:class:`NotLargeSpreadError` rather than returning a possibly wrong answer.
Verification never mutates the ensemble; each traversal owns its private
scratch state, so distinct instances may be verified concurrently over a
shared model.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import inf
from typing import Optional, Sequence

from .core import (
    FULL_INTERVAL,
    DecisionTree,
    Ensemble,
    Interval,
    Leaf,
    NormOrder,
    SpreadVerifyError,
    _check_budget,
    _dist_raw,
    check_norm_order,
    is_large_spread,
    norm_to_power,
    power_contrib,
    power_to_norm,
    power_total,
    predict_ensemble,
    predict_tree,
    rect_cost_power,
    spread,
)

__all__ = [
    "NotLargeSpreadError",
    "VerificationVerdict",
    "reachable",
    "robust_tree",
    "stable_ensemble",
    "robust_ensemble",
    "robustness_score",
]

# Relative slack applied to the pruning budget only: the incremental
# subtract-then-add cost updates can drift by a few ulps relative to the
# correctly-rounded evaluation used at leaves, and pruning must never cut a
# leaf that the canonical evaluation would accept.
_PRUNE_SLACK = 1.0 + 1e-9


class NotLargeSpreadError(SpreadVerifyError):
    """The ensemble's threshold spread does not exceed twice the budget.

    Composing per-tree verdicts would be unsound, so verification refuses to
    answer.  Carries the offending spread value and the required gap ``2k``.
    """

    def __init__(self, spread_value: float, required_gap: float) -> None:
        self.spread_value = spread_value
        self.required_gap = required_gap
        super().__init__(
            f"ensemble spread {spread_value!r} is not greater than 2k = {required_gap!r}"
        )


@dataclass(frozen=True)
class VerificationVerdict:
    """Outcome of one ensemble verification.

    ``stable`` states that no in-budget perturbation changes the ensemble's
    own prediction; ``robust`` additionally requires that prediction to match
    the supplied ground-truth label.  ``min_attack_norm`` is the norm of the
    cheapest prediction-flipping perturbation whenever stability fails.
    """

    robust: bool
    stable: bool
    predicted: int
    min_attack_norm: Optional[float]


def _update_power(p: NormOrder, acc: float, old_comp: float, new_comp: float) -> float:
    # Power-domain counterpart of the O(1) norm update.
    if p == inf:
        new = abs(new_comp)
        return acc if acc >= new else new
    if p == 0:
        return acc - (0 if old_comp == 0.0 else 1) + (0 if new_comp == 0.0 else 1)
    base = acc - power_contrib(old_comp, p) + power_contrib(new_comp, p)
    return base if base > 0.0 else 0.0


def _wrong_leaf_costs(
    tree: DecisionTree, p: NormOrder, k: float, x: Sequence[float], y: int
) -> list[float]:
    """Power-domain costs (each <= budget) of every reachable wrong leaf."""
    budget = norm_to_power(k, p)
    prune_budget = budget if (p == 0 or p == inf) else budget * _PRUNE_SLACK
    rect: dict[int, Interval] = {}
    out: list[float] = []

    def visit(node, acc: float) -> None:
        if isinstance(node, Leaf):
            if node.label != y:
                cost = rect_cost_power(
                    ((f, iv.lo, iv.hi) for f, iv in sorted(rect.items())), x, p
                )
                if cost <= budget:
                    out.append(cost)
            return
        f, v = node.feature, node.threshold
        cur = rect.get(f, FULL_INTERVAL)
        old_comp = _dist_raw(x[f], cur.lo, cur.hi)
        for child, narrowed in (
            (node.left, cur.intersect_le(v)),
            (node.right, cur.intersect_gt(v)),
        ):
            if narrowed.is_empty:
                continue  # no instance reaches this subtree
            new_comp = _dist_raw(x[f], narrowed.lo, narrowed.hi)
            new_acc = _update_power(p, acc, old_comp, new_comp)
            if new_acc > prune_budget:
                continue  # the cost only grows deeper down
            rect[f] = narrowed
            visit(child, new_acc)
        if cur.is_full:
            rect.pop(f, None)
        else:
            rect[f] = cur

    zero = 0 if p == 0 else 0.0
    visit(tree.root, zero)
    return out


def _check_tree_args(
    tree: DecisionTree, p: NormOrder, k: float, x: Sequence[float], y: int
) -> tuple[NormOrder, float]:
    p = check_norm_order(p)
    k = _check_budget(k)
    if tree.max_feature >= len(x):
        raise ValueError(
            f"instance has {len(x)} features but the tree tests feature {tree.max_feature}"
        )
    if y not in (-1, 1):
        raise ValueError(f"label must be +1 or -1, got {y!r}")
    return p, k


def reachable(
    tree: DecisionTree, p: NormOrder, k: float, x: Sequence[float], y: int
) -> frozenset[float]:
    """Norms of the minimal perturbations reaching each wrong-label leaf.

    A leaf labelled differently from ``y`` contributes the L_p norm of the
    cheapest perturbation pushing ``x`` into it, provided that norm does not
    exceed ``k`` (ties at exactly ``k`` count as reachable).  An empty result
    means no in-budget perturbation can make the tree output a wrong label.
    """
    p, k = _check_tree_args(tree, p, k, x, y)
    return frozenset(power_to_norm(c, p) for c in _wrong_leaf_costs(tree, p, k, x, y))


def robust_tree(tree: DecisionTree, p: NormOrder, k: float, x: Sequence[float], y: int) -> bool:
    """True iff the tree predicts ``y`` on ``x`` and no wrong leaf is reachable."""
    p, k = _check_tree_args(tree, p, k, x, y)
    if predict_tree(tree, x) != y:
        return False
    return not _wrong_leaf_costs(tree, p, k, x, y)


def _check_ensemble_args(
    ensemble: Ensemble, p: NormOrder, k: float, x: Sequence[float]
) -> tuple[NormOrder, float]:
    p = check_norm_order(p)
    k = _check_budget(k)
    if p == 0:
        raise ValueError("ensemble verification supports p >= 1 or inf, not p = 0")
    if len(x) != ensemble.dimensionality:
        raise ValueError(
            f"instance has {len(x)} features, ensemble expects {ensemble.dimensionality}"
        )
    return p, k


def _require_large_spread(ensemble: Ensemble, p: NormOrder, k: float) -> None:
    if not is_large_spread(ensemble, p, k):
        raise NotLargeSpreadError(spread(ensemble, p), 2.0 * k)


def _stability(
    ensemble: Ensemble, p: NormOrder, k: float, x: Sequence[float], y: int
) -> tuple[bool, Optional[float]]:
    """(stable w.r.t. label y, composed attack norm when unstable)."""
    _require_large_spread(ensemble, p, k)
    need = (len(ensemble.trees) - 1) // 2 + 1
    minima: list[float] = []
    for tree in ensemble.trees:
        costs = _wrong_leaf_costs(tree, p, k, x, y)
        if costs:
            minima.append(min(costs))
    if len(minima) < need:
        return True, None
    minima.sort()
    composed = power_total(minima[:need], p)
    if composed <= norm_to_power(k, p):
        return False, power_to_norm(composed, p)
    return True, None


def stable_ensemble(
    ensemble: Ensemble, p: NormOrder, k: float, x: Sequence[float], y: int
) -> bool:
    """True iff no in-budget perturbation makes a majority predict != y.

    Sound only for large-spread ensembles: per-tree minimal attacks then have
    pairwise disjoint supports, so flipping any majority costs at least the
    composition of the smallest per-tree minima.
    """
    p, k = _check_ensemble_args(ensemble, p, k, x)
    if y not in (-1, 1):
        raise ValueError(f"label must be +1 or -1, got {y!r}")
    return _stability(ensemble, p, k, x, y)[0]


def robust_ensemble(
    ensemble: Ensemble, p: NormOrder, k: float, x: Sequence[float], y: int
) -> VerificationVerdict:
    """Full verdict: prediction, stability, robustness and the attack norm.

    Stability is judged against the ensemble's own prediction; robustness
    additionally requires that prediction to equal ``y``.
    """
    p, k = _check_ensemble_args(ensemble, p, k, x)
    if y not in (-1, 1):
        raise ValueError(f"label must be +1 or -1, got {y!r}")
    predicted = predict_ensemble(ensemble, x)
    stable, attack_norm = _stability(ensemble, p, k, x, predicted)
    return VerificationVerdict(
        robust=(predicted == y) and stable,
        stable=stable,
        predicted=predicted,
        min_attack_norm=attack_norm,
    )


def robustness_score(ensemble: Ensemble, p: NormOrder, k: float, testset) -> float:
    """Fraction of test instances on which the ensemble is robust."""
    if len(testset) == 0:
        raise ValueError("robustness over an empty test set is undefined")
    p, k = check_norm_order(p), _check_budget(k)
    if p == 0:
        raise ValueError("ensemble verification supports p >= 1 or inf, not p = 0")
    _require_large_spread(ensemble, p, k)
    robust = 0
    for x, y in testset.rows():
        if robust_ensemble(ensemble, p, k, x, y).robust:
            robust += 1
    return robust / len(testset)
