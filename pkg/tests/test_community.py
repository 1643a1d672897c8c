import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from rmtnet.community import (
    FastGreedyDetector,
    MultilevelDetector,
    compare_algorithms,
    detect_fastgreedy,
    detect_label_propagation,
    detect_multilevel,
    get_detector,
    register_algorithm,
)
from rmtnet.errors import EmptyGraph
from rmtnet.graph import TradeNetwork, modularity

TWO_TRIANGLES = [("a", "b"), ("b", "c"), ("c", "a"), ("x", "y"), ("y", "z"), ("z", "x")]
DETECTORS = [
    pytest.param(lambda g: detect_multilevel(g, seed=0), id="multilevel"),
    pytest.param(detect_fastgreedy, id="fastgreedy"),
]


def net(*edges, isolated=()):
    return TradeNetwork.from_edges(edges, isolated=isolated)


def groups(partition):
    return sorted(tuple(c) for c in partition.communities())


@pytest.mark.parametrize("detect", DETECTORS)
def test_two_disjoint_triangles(detect):
    p = detect(net(*TWO_TRIANGLES))
    assert groups(p) == [("a", "b", "c"), ("x", "y", "z")]
    assert p.modularity == pytest.approx(0.5)


@pytest.mark.parametrize("detect", DETECTORS)
def test_single_triangle_stays_whole(detect):
    p = detect(net(("a", "b"), ("b", "c"), ("c", "a")))
    assert p.n_communities == 1 and p.modularity == pytest.approx(0.0)


def test_empty_graph_raises_for_modularity_methods():
    g = net(isolated=["a"])
    with pytest.raises(EmptyGraph):
        detect_multilevel(g)
    with pytest.raises(EmptyGraph):
        detect_fastgreedy(g)


def test_label_propagation_examples():
    assert groups(detect_label_propagation(net(*TWO_TRIANGLES), seed=1)) == [("a", "b", "c"), ("x", "y", "z")]
    k5 = net(*[(f"k{i}", f"k{j}") for i in range(5) for j in range(i + 1, 5)])
    assert detect_label_propagation(k5, seed=3).n_communities == 1
    p = detect_label_propagation(net(("a", "b"), isolated=["s1", "s2"]), seed=0)
    assert p.assignment["s1"] != p.assignment["s2"]


def test_ids_are_ordered_by_size_then_smallest_member():
    g = net(*TWO_TRIANGLES, ("p", "q"), ("q", "r"), ("r", "s"), ("s", "p"), ("p", "r"), ("q", "s"))
    p = detect_multilevel(g, seed=0)
    assert p.assignment["p"] == 0  # the four-clique is the largest
    assert p.assignment["a"] == 1 and p.assignment["x"] == 2


def _random_partitioned(seed):
    rng = np.random.default_rng(seed)
    return oracles.random_network(rng, int(rng.integers(10, 50)), float(rng.uniform(0.02, 0.12)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_reported_q_is_recomputed_q(seed):
    g = _random_partitioned(seed)
    if g.n_edges == 0:
        return
    for p in (detect_multilevel(g, seed=seed), detect_fastgreedy(g), detect_label_propagation(g, seed=seed)):
        assert set(p.assignment) == set(g.nodes)
        assert p.modularity == pytest.approx(modularity(g, p.assignment), abs=1e-9)
        assert p.modularity == pytest.approx(oracles.modularity(g, p.assignment), abs=1e-9)
        assert -0.5 <= p.modularity <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_no_community_spans_two_components(seed):
    g = _random_partitioned(seed)
    if g.n_edges == 0:
        return
    U = nx.Graph()
    U.add_nodes_from(g.nodes)
    U.add_edges_from((u, v) for u, v, _, _ in g.edges())
    component = {v: i for i, comp in enumerate(nx.connected_components(U)) for v in comp}
    for p in (detect_multilevel(g, seed=seed), detect_fastgreedy(g)):
        for members in p.communities():
            assert len({component[v] for v in members}) == 1


def test_determinism_per_seed():
    g = _random_partitioned(11)
    assert detect_multilevel(g, seed=4) == detect_multilevel(g, seed=4)
    assert detect_fastgreedy(g) == detect_fastgreedy(g)
    assert detect_label_propagation(g, seed=2) == detect_label_propagation(g, seed=2)


@pytest.mark.parametrize("seed", range(20))
def test_fastgreedy_matches_networkx_modularity(seed):
    # wide weights make every merge gain distinct; with tied gains the two
    # implementations break ties differently and may end at different optima
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 50))
    edges = [
        (f"n{u:02d}", f"n{v:02d}", int(rng.integers(1, 10**6)))
        for u in range(n)
        for v in range(u + 1, n)
        if rng.random() < 0.08
    ]
    g = net(*edges, isolated=[f"n{i:02d}" for i in range(n)])
    U = nx.Graph()
    U.add_nodes_from(g.nodes)
    for lo, hi, w in zip(*g.undirected_pairs):
        U.add_edge(g.nodes[lo], g.nodes[hi], weight=w)
    reference = nx.algorithms.community.greedy_modularity_communities(U, weight="weight")
    q_ref = nx.algorithms.community.modularity(U, reference, weight="weight")
    assert detect_fastgreedy(g).modularity == pytest.approx(q_ref, abs=1e-9)


def test_multilevel_is_at_least_as_good_as_fastgreedy_on_blocks():
    rng = np.random.default_rng(0)
    edges = [
        (f"v{i}", f"v{j}")
        for i in range(60)
        for j in range(i + 1, 60)
        if rng.random() < (0.4 if i // 15 == j // 15 else 0.01)
    ]
    g = net(*edges)
    assert detect_multilevel(g, seed=0).modularity >= detect_fastgreedy(g).modularity - 1e-9


def test_unweighted_option_ignores_weights():
    heavy = net(("a", "b", 50), ("b", "c", 1), ("c", "a", 1), ("c", "d", 1))
    p = detect_multilevel(heavy, weighted=False)
    assert p.modularity == pytest.approx(modularity(heavy, p.assignment, weighted=False))


def test_compare_algorithms_table():
    g = net(*TWO_TRIANGLES)
    (row,) = compare_algorithms([g], ["multilevel"])
    assert row.min_q == row.mean_q == row.max_q == pytest.approx(0.5)
    rows = compare_algorithms([g, _random_partitioned(3)], ["fastgreedy", "multilevel", "label_propagation"])
    assert [r.mean_q for r in rows] == sorted((r.mean_q for r in rows), reverse=True)


def test_plugin_slots():
    with pytest.raises(NotImplementedError):
        get_detector("walktrap")(net(*TWO_TRIANGLES))
    with pytest.raises(KeyError):
        get_detector("nope")
    register_algorithm("no-size-penalty", lambda g: detect_multilevel(g, resolution=0.0))
    assert get_detector("no-size-penalty")(net(*TWO_TRIANGLES)).n_communities == 2


def test_estimator_wrappers():
    g = net(*TWO_TRIANGLES)
    est = MultilevelDetector(seed=1).fit(g)
    assert est.n_communities_ == 2 and list(est.labels_) == [g.nodes.index(v) // 3 for v in g.nodes]
    assert FastGreedyDetector().fit_predict(g).tolist() == est.labels_.tolist()
    assert MultilevelDetector(seed=5).get_params() == {"seed": 5, "resolution": 1.0, "weighted": True}
