import itertools
import random

import pytest

from spreadverify import (
    CapacityError,
    Graph,
    Leaf,
    clique_exists,
    exists_large_spread_subset,
    graph_to_ensemble,
    iter_splits,
    parse_graph,
)


def test_graph_validation():
    with pytest.raises(ValueError):
        Graph(3, frozenset({(1, 1)}))
    with pytest.raises(ValueError):
        Graph(2, frozenset({(0, 5)}))
    g = Graph(3, frozenset({(2, 0)}))
    assert g.has_edge(0, 2) and g.has_edge(2, 0)


def test_parse_graph_round_trip():
    g = parse_graph("3 2\n0 1\n1 2\n")
    assert g.num_vertices == 3
    assert g.edges == frozenset({(0, 1), (1, 2)})


def test_parse_graph_errors():
    with pytest.raises(ValueError):
        parse_graph("")
    with pytest.raises(ValueError):
        parse_graph("3\n0 1\n")
    with pytest.raises(ValueError):
        parse_graph("3 2\n0 1\n")  # announced two edges, gave one
    with pytest.raises(ValueError):
        parse_graph("3 1\n0 1 2\n")


def test_complete_graph_yields_leaf_trees():
    g = Graph(3, frozenset({(0, 1), (1, 2), (0, 2)}))
    trees, features = graph_to_ensemble(g)
    assert features == {}
    assert all(isinstance(t.root, Leaf) and t.root.label == 1 for t in trees)


def test_path_graph_structure():
    g = parse_graph("3 2\n0 1\n1 2\n")
    trees, features = graph_to_ensemble(g)
    assert features == {(0, 2): 0}  # the single missing edge
    assert [t.node_count for t in trees] == [3, 1, 3]
    for v in (0, 2):
        splits = list(iter_splits(trees[v]))
        assert [s.feature for s in splits] == [0]
        assert all(s.threshold == 1.0 for s in splits)


def test_empty_two_vertex_graph_shares_the_single_feature():
    g = Graph(2, frozenset())
    trees, features = graph_to_ensemble(g)
    assert len(features) == 1
    f0 = [s.feature for s in iter_splits(trees[0])]
    f1 = [s.feature for s in iter_splits(trees[1])]
    assert f0 == f1 == [0]


def test_tree_shape_follows_missing_edges():
    rng = random.Random(5)
    for _ in range(30):
        n = rng.randint(2, 7)
        edges = frozenset(
            pair for pair in itertools.combinations(range(n), 2) if rng.random() < 0.5
        )
        g = Graph(n, edges)
        trees, features = graph_to_ensemble(g)
        missing_degree = {v: 0 for v in range(n)}
        for u, v in features:
            missing_degree[u] += 1
            missing_degree[v] += 1
        for v in range(n):
            splits = list(iter_splits(trees[v]))
            assert len(splits) == missing_degree[v]
            assert all(s.threshold == 1.0 for s in splits)
            tested = [s.feature for s in splits]
            assert tested == sorted(tested)
        for u, v in itertools.combinations(range(n), 2):
            shared = {s.feature for s in iter_splits(trees[u])} & {
                s.feature for s in iter_splits(trees[v])
            }
            assert bool(shared) == (not g.has_edge(u, v))


def test_clique_exists_basics():
    triangle = Graph(3, frozenset({(0, 1), (1, 2), (0, 2)}))
    path = Graph(3, frozenset({(0, 1), (1, 2)}))
    assert clique_exists(triangle, 3)
    assert not clique_exists(path, 3)
    assert clique_exists(path, 2)
    assert clique_exists(path, 1) and clique_exists(path, 0)
    assert not clique_exists(path, 4)


def test_clique_capacity():
    with pytest.raises(CapacityError):
        clique_exists(Graph(13, frozenset()), 2)


def test_clique_matches_subset_search_on_random_graphs():
    rng = random.Random(1312)
    for _ in range(40):
        n = rng.randint(1, 6)
        edges = frozenset(
            pair for pair in itertools.combinations(range(n), 2) if rng.random() < 0.5
        )
        g = Graph(n, edges)
        trees, _ = graph_to_ensemble(g)
        for s in range(n + 1):
            assert clique_exists(g, s) == exists_large_spread_subset(trees, s, 0, 0.0)
