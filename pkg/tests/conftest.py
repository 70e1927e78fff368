import math

import pytest

from spreadverify import DecisionTree, Ensemble, Leaf, Split

EPS10 = math.nextafter(10.0, math.inf) - 10.0


@pytest.fixture
def depth2_tree():
    # x0 <= 10 ? (x1 <= 5 ? +1 : -1) : (x1 <= 8 ? +1 : -1)
    return DecisionTree(
        Split(
            0,
            10.0,
            Split(1, 5.0, Leaf(1), Leaf(-1)),
            Split(1, 8.0, Leaf(1), Leaf(-1)),
        )
    )


@pytest.fixture
def stump_trio():
    """Three single-split trees on one feature with thresholds 10, 12, 17."""
    t1 = DecisionTree(Split(0, 10.0, Leaf(-1), Leaf(1)))
    t2 = DecisionTree(Split(0, 12.0, Leaf(1), Leaf(-1)))
    t3 = DecisionTree(Split(0, 17.0, Leaf(1), Leaf(-1)))
    return t1, t2, t3


@pytest.fixture
def stump_trio_ensemble(stump_trio):
    return Ensemble(stump_trio, 1)


@pytest.fixture
def staircase_stumps():
    """Stumps at 10/20/30 on feature 0, each voting +1 left and -1 right."""
    return Ensemble(
        tuple(DecisionTree(Split(0, v, Leaf(1), Leaf(-1))) for v in (10.0, 20.0, 30.0)),
        1,
    )


@pytest.fixture
def two_feature_stumps():
    """Stumps on (f0 <= 10), (f1 <= 10), (f0 <= 50); +1 left, -1 right."""
    return Ensemble(
        (
            DecisionTree(Split(0, 10.0, Leaf(1), Leaf(-1))),
            DecisionTree(Split(1, 10.0, Leaf(1), Leaf(-1))),
            DecisionTree(Split(0, 50.0, Leaf(1), Leaf(-1))),
        ),
        2,
    )
