import itertools
from fractions import Fraction

import networkx as nx
import pytest
from hypothesis import given, strategies as st

from distlll.errors import InfeasibleParametersError, PreconditionError
from distlll.graph import (
    Graph,
    GraphGenSpec,
    count_triangles_bruteforce,
    edges_within,
    generate,
    load_edgelist,
    local_sparsity,
    non_edges_in_set,
    save_edgelist,
)


def brute_edges_within(g, nodes):
    nodes = list(nodes)
    return sum(1 for a, b in itertools.combinations(nodes, 2) if g.has_edge(a, b))


@st.composite
def graphs(draw, max_n=14):
    n = draw(st.integers(2, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs)))
    return Graph(n, chosen)


def test_regular_four_nodes_is_k4():
    g = generate(GraphGenSpec("random-regular", 4, degree=3, seed=1))
    assert sorted(g.edges()) == sorted(itertools.combinations(range(4), 2))


def test_bipartite_regular_has_no_triangles():
    g = generate(GraphGenSpec("random-bipartite-regular", 200, degree=8, seed=7))
    assert all(g.degree(v) == 8 for v in range(g.n))
    assert count_triangles_bruteforce(g) == 0
    assert g.find_triangle() is None


def test_generation_is_deterministic():
    spec = GraphGenSpec("random-regular", 1000, degree=16, seed=3)
    assert generate(spec).edges() == generate(spec).edges()


def test_different_seeds_differ():
    a = generate(GraphGenSpec("random-regular", 200, degree=6, seed=1))
    b = generate(GraphGenSpec("random-regular", 200, degree=6, seed=2))
    assert a.edges() != b.edges()


@pytest.mark.parametrize(
    "spec",
    [
        GraphGenSpec("random-regular", 5, degree=3),  # odd n*d
        GraphGenSpec("random-regular", 4, degree=4),  # degree >= n
        GraphGenSpec("erdos-renyi", 10),  # missing p
        GraphGenSpec("random-bipartite-regular", 9, degree=2),  # odd n
        GraphGenSpec("nope", 10, degree=2),
        GraphGenSpec("random-regular", 1, degree=0),
    ],
)
def test_infeasible_specs(spec):
    with pytest.raises(InfeasibleParametersError):
        generate(spec)


def test_sparse_neighborhood_meets_floor():
    g = generate(GraphGenSpec("sparse-neighborhood", 400, degree=16, seed=2, target_zeta=4))
    assert g.max_degree <= 16
    assert min(local_sparsity(g, v, 16) for v in range(g.n)) >= 4


def test_non_edges_clique_and_independent():
    clique = Graph(5, itertools.combinations(range(1, 5), 2))
    hub = Graph(5, [(0, i) for i in range(1, 5)] + list(itertools.combinations(range(1, 5), 2)))
    star = Graph(5, [(0, i) for i in range(1, 5)])
    assert non_edges_in_set(hub, 0, range(5)) == 0
    assert non_edges_in_set(star, 0, range(5)) == 4 * 3 // 2
    assert non_edges_in_set(clique, 0, range(5)) == 0  # empty neighborhood


def test_figure_style_neighborhood():
    # Δ = 8 neighborhood with exactly 14 non-edges; the 4-node subset {1,2,3,4}
    # spans one edge, hence five non-edges.
    inner = [(a, b) for a, b in itertools.combinations(range(1, 9), 2)]
    non = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (5, 6), (5, 7), (5, 8), (6, 7), (6, 8), (7, 8), (1, 5), (2, 6), (3, 7)]
    assert len(non) == 14
    edges = [(0, i) for i in range(1, 9)] + [e for e in inner if e not in non]
    g = Graph(9, edges)
    assert non_edges_in_set(g, 0, range(1, 9)) == 14
    assert non_edges_in_set(g, 0, [1, 2, 3, 4]) == 5


def test_local_sparsity_examples():
    k = Graph(5, itertools.combinations(range(5), 2))
    assert local_sparsity(k, 0) == 0
    g = generate(GraphGenSpec("random-bipartite-regular", 40, degree=6, seed=0))
    assert local_sparsity(g, 3) == Fraction(5, 2)


@given(graphs())
def test_graph_invariants(g):
    for v in range(g.n):
        nb = g.neighbors(v)
        assert list(nb) == sorted(set(nb))
        assert v not in nb
        assert all(v in g.neighbors(w) for w in nb)
    assert g.max_degree == max((g.degree(v) for v in range(g.n)), default=0)


@given(graphs())
def test_sparsity_identity(g):
    delta = g.max_degree
    if delta == 0:
        return
    for v in range(g.n):
        nb = g.neighbors(v)
        brute = Fraction(delta * (delta - 1) // 2 - brute_edges_within(g, nb), delta)
        assert local_sparsity(g, v) == brute
        if len(nb) == delta:
            assert delta * local_sparsity(g, v) == non_edges_in_set(g, v, nb)


@given(graphs(), st.data())
def test_edges_within_matches_bruteforce(g, data):
    nodes = data.draw(st.sets(st.integers(0, g.n - 1)))
    assert edges_within(g, nodes) == brute_edges_within(g, nodes)


@given(graphs())
def test_triangles_match_networkx(g):
    count = sum(nx.triangles(g.to_networkx()).values()) // 3
    assert count_triangles_bruteforce(g) == count
    assert (g.find_triangle() is None) == (count == 0)


@given(graphs())
def test_edgelist_roundtrip(g):
    assert Graph.from_edgelist(g.to_edgelist()) == g


def test_edgelist_file(tmp_path):
    g = generate(GraphGenSpec("erdos-renyi", 30, p=0.2, seed=4))
    save_edgelist(g, tmp_path / "g.txt")
    assert load_edgelist(tmp_path / "g.txt") == g


def test_edgelist_rejects_bad_input():
    with pytest.raises(PreconditionError):
        Graph.from_edgelist("3 2\n0 1\n")
    with pytest.raises(PreconditionError):
        Graph.from_edgelist("3 2\n0 1\n1 0\n")
