import itertools
import warnings
from fractions import Fraction

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distlll import oracle
from distlll.core import BLACK, WHITE, PartialAssignment
from distlll.errors import InfeasibleParametersError, PreconditionError
from distlll.graph import Graph, GraphGenSpec, generate
from distlll.problems import (
    build_splitting_lll,
    degree_bounded_lll,
    dss_instance,
    dss_sample,
    euler_split,
    orientation_from_assignment,
    sampled_set,
    sinkless_orientation_lll,
)
from distlll.problems.validate import scan_degree_bounds, scan_dss, scan_orientation
from distlll.shatter import auto_post_solver, cps_post_solver, solve_binary_lowrisk, solve_disjoint


def exact_event_prob(event, variables):
    uni = oracle.make_universe(variables, [event])
    return oracle.probability(oracle.truth_table(event, uni), uni)


def enumerated_prob(event, variables):
    """Plain enumeration over arbitrary finite domains."""
    index = {v.id: v for v in variables}
    specs = [index[x] for x in event.vbl]
    total = Fraction(0)
    for combo in itertools.product(*(s.domain for s in specs)):
        if event.predicate(combo):
            w = Fraction(1)
            for s, val in zip(specs, combo):
                w *= s.prob(val)
            total += w
    return total


def brute_dependency_degree(inst):
    return max(
        sum(1 for b in inst.events if b.id != a.id and set(a.vbl) & set(b.vbl)) for a in inst.events
    )


# -- sinkless orientation ------------------------------------------------------


def test_single_edge():
    g = Graph(2, [(0, 1)])
    with pytest.warns(UserWarning, match="minimum degree"):
        inst = sinkless_orientation_lll(g)
    e0, e1 = inst.events
    assert e0.predicate((0,)) and not e0.predicate((1,))
    assert e1.predicate((1,)) and not e1.predicate((0,))
    assert enumerated_prob(e0, inst.variables) == enumerated_prob(e1, inst.variables) == Fraction(1, 2)


def test_three_regular_parameters():
    g = generate(GraphGenSpec("random-regular", 12, degree=3, seed=0))
    inst = sinkless_orientation_lll(g)
    params = inst.params()
    assert params.p == Fraction(1, 8)
    assert params.d <= 6 and params.d == brute_dependency_degree(inst)
    assert all(enumerated_prob(e, inst.variables) == Fraction(1, 8) for e in inst.events)


def test_isolated_node_rejected():
    with pytest.raises(InfeasibleParametersError, match="node 2"):
        sinkless_orientation_lll(Graph(3, [(0, 1)]))


def test_sinkless_two_set_eight_regular():
    g = generate(GraphGenSpec("random-regular", 500, degree=8, seed=8))
    inst = sinkless_orientation_lll(g, split="euler")
    phi, _ = solve_disjoint(inst, cps_post_solver(), rng=8)
    assert scan_orientation(g, orientation_from_assignment(g, phi)).ok


def test_bad_split_rejected():
    g = generate(GraphGenSpec("random-regular", 10, degree=3, seed=0))
    with pytest.raises(PreconditionError):
        sinkless_orientation_lll(g, split={0: 1})


@given(st.integers(0, 2**32 - 1), st.integers(1, 7))
@settings(max_examples=30)
def test_euler_split_is_balanced(seed, degree):
    n = 24
    g = generate(GraphGenSpec("random-regular", n, degree=degree, seed=seed))
    labels = euler_split(g)
    assert set(labels) == set(range(g.num_edges))
    count = {v: [0, 0] for v in range(n)}
    for i, (u, v) in enumerate(g.edges()):
        count[u][labels[i] - 1] += 1
        count[v][labels[i] - 1] += 1
    assert all(abs(a - b) <= 2 for a, b in count.values())


# -- degree-bounded subgraph ------------------------------------------------------


def test_k_equal_delta_warns():
    g = generate(GraphGenSpec("random-regular", 10, degree=4, seed=0))
    with pytest.warns(UserWarning, match="regime"):
        inst = degree_bounded_lll(g, 4)
    assert inst.base.variables[0].p_black == 1


def test_toy_tags_and_containment():
    g = generate(GraphGenSpec("random-regular", 10, degree=6, seed=1))
    inst = degree_bounded_lll(g, 1)
    base = inst.base
    for e in base.events:
        uni = oracle.make_universe(base.variables, [e, e.assoc])
        oracle.check_containment(e, e.assoc, uni)
        ok, _ = oracle.check_monotone(e, base.variables, e.monotonicity)
        assert ok
    # min events test themselves and therefore have risk Pr(E)
    low = base.events[0]
    assert low.assoc is low and oracle.verify_no_risk_lemma(low, base.variables).passed
    # the declared parameters agree with the oracle
    assert base.params().p == max(exact_event_prob(e, base.variables) for e in base.events)
    assert base.params().d == brute_dependency_degree(base)


def test_degree_bounded_solved():
    g = generate(GraphGenSpec("random-regular", 300, degree=48, seed=3))
    inst = degree_bounded_lll(g, 8)
    phi, _ = solve_binary_lowrisk(inst, auto_post_solver(), rng=3)
    assert scan_degree_bounds(g, sampled_set(phi), 8 / 3, 32).ok


def test_empty_graph_rejected():
    with pytest.raises(PreconditionError):
        degree_bounded_lll(Graph(3, []), 1)


# -- DSS -------------------------------------------------------------------------------


def test_dss_alpha_half_is_never_feasible():
    # N(v) independent gives C(Δ,2) = Δ(Δ-1)/2 non-edges, just short of Δ²/2
    g = generate(GraphGenSpec("random-bipartite-regular", 40, degree=8, seed=0))
    with pytest.raises(PreconditionError, match="non-edges"):
        dss_instance(g, range(40), range(40), Fraction(1, 2), 4)


def test_dss_independent_neighbourhoods():
    g = generate(GraphGenSpec("random-bipartite-regular", 200, degree=16, seed=1))
    alpha = Fraction(15, 32)  # the largest feasible value: C(16,2)/16²
    mu = 8
    S, trace = dss_sample(g, range(200), range(200), alpha, mu=mu, rng=1)
    assert trace.count_based
    assert scan_dss(g, range(200), S, mu, alpha).ok
    assert trace.mu == 8 and trace.mu_formula > 1000


def test_dss_names_violating_node():
    g = generate(GraphGenSpec("random-bipartite-regular", 40, degree=8, seed=2))
    # remove node 0's neighbours from Y
    Y = set(range(40)) - set(g.neighbors(0))
    with pytest.raises(PreconditionError, match=r"\[0"):
        dss_instance(g, [0], Y, Fraction(1, 4), 4)


def test_dss_toy_declared_parameters():
    g = generate(GraphGenSpec("random-bipartite-regular", 12, degree=4, seed=0))
    inst, trace = dss_instance(g, range(12), range(12), Fraction(1, 4), 2)
    base = inst.base
    assert trace.p == Fraction(1, 2)
    assert base.params().p == max(exact_event_prob(e, base.variables) for e in base.events)
    assert base.params().d == brute_dependency_degree(base)
    for e in base.events:
        uni = oracle.make_universe(base.variables, [e, e.assoc])
        oracle.check_containment(e, e.assoc, uni)


def test_dss_mu_too_large():
    g = generate(GraphGenSpec("random-bipartite-regular", 40, degree=8, seed=0))
    with pytest.raises(InfeasibleParametersError):
        dss_instance(g, range(40), range(40), Fraction(1, 4), 16)


# -- splitting -------------------------------------------------------------------------------


def test_vertex_subset_splitting():
    g = generate(GraphGenSpec("random-regular", 200, degree=24, seed=4))
    inst, spec = build_splitting_lll("vertex-subset", g)
    phi, _ = solve_binary_lowrisk(inst, auto_post_solver(), rng=4)
    black = sampled_set(phi)
    for v in range(g.n):
        c = sum(1 for w in g.neighbors(v) if w in black)
        assert g.degree(v) / 4 < c < 3 * g.degree(v) / 2
    assert spec.thresholds["low_per_dT"] == Fraction(1, 4)


def test_matching_splitting_toy():
    # every neighbourhood of K9 is K8, which has a perfect matching of size 4
    g = Graph(9, itertools.combinations(range(9), 2))
    inst, spec = build_splitting_lll("matching", g, ell=4)
    phi, _ = solve_binary_lowrisk(inst, auto_post_solver(), rng=0)
    for part in (BLACK, WHITE):
        side = {x for x, val in phi.items() if val == part}
        for v in range(g.n):
            h = nx.Graph()
            inside = [w for w in g.neighbors(v) if w in side]
            h.add_edges_from((a, b) for a, b in itertools.combinations(inside, 2) if g.has_edge(a, b))
            assert len(nx.max_weight_matching(h, maxcardinality=True)) >= 4 / 64


@pytest.mark.parametrize("kind", ["sparsity", "density", "matching"])
def test_splitting_hypothesis_checked(kind):
    g = generate(GraphGenSpec("random-bipartite-regular", 20, degree=4, seed=0))
    if kind == "sparsity":
        with pytest.raises(PreconditionError):
            build_splitting_lll(kind, Graph(4, itertools.combinations(range(4), 2)), ell=1)
    else:
        with pytest.raises(PreconditionError):
            build_splitting_lll(kind, g, ell=1)


def test_splitting_rejects_empty_graph_and_unknown_kind():
    with pytest.raises(PreconditionError):
        build_splitting_lll("vertex-subset", Graph(5, []))
    with pytest.raises(PreconditionError):
        build_splitting_lll("triangles", Graph(2, [(0, 1)]))
    with pytest.raises(PreconditionError):
        build_splitting_lll("sparsity", Graph(2, [(0, 1)]))


def test_sparsity_splitting_solved():
    g = generate(GraphGenSpec("random-bipartite-regular", 40, degree=10, seed=5))
    inst, spec = build_splitting_lll("sparsity", g, ell=2)
    phi, _ = solve_binary_lowrisk(inst, auto_post_solver(), rng=5)
    for part in (BLACK, WHITE):
        side = {x for x, val in phi.items() if val == part}
        for v in range(g.n):
            inside = [w for w in g.neighbors(v) if w in side]
            non_edges = len(inside) * (len(inside) - 1) // 2  # neighbourhoods are independent sets
            assert non_edges >= 2 * g.degree(v) / 16
