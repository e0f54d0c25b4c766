import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distlll.errors import InfeasibleParametersError, InternalConsistencyError, PreconditionError
from distlll.graph import Graph, GraphGenSpec, generate
from distlll.problems import (
    ColoringState,
    color_sparse,
    color_triangle_free,
    greedy_d1lc,
    partition_vertices,
    slack_gen_two_sets,
    slack_generation,
    try_color,
    try_color_round,
)
from distlll.problems.coloring import (
    ACTIVATION,
    INACTIVE,
    select_branch,
    slack_gain,
    slack_threshold,
    split_timings,
    z_statistic,
)
from distlll.problems.validate import scan_coloring, scan_partition, slack_gain_from_colors


def star(leaves):
    return Graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)])


# -- TryColor ------------------------------------------------------------------


def test_isolated_node_keeps_candidate():
    state = ColoringState.fresh(Graph(1, []), 3)
    assert try_color(state, 0, 2, {}) and state.colors[0] == 2


def test_adjacent_same_candidate_both_give_up():
    state = ColoringState.fresh(Graph(2, [(0, 1)]), 3)
    assert try_color_round(state, {0: 1, 1: 1}) == set()
    assert state.colors == [None, None]


def test_star_matches_conflict_rule():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = star(5)
        state = ColoringState.fresh(g, 10)
        cands = {v: int(rng.integers(10)) for v in range(6)}
        kept = try_color_round(state, cands)
        expect = {v for v in range(6) if all(cands[w] != cands[v] for w in g.neighbors(v))}
        assert kept == expect
        for v in range(6):
            assert state.colors[v] == (cands[v] if v in expect else None)
            for w in g.neighbors(v):
                if state.colors[w] is not None and state.colors[v] is None:
                    assert state.colors[w] not in state.palettes[v]


def test_candidate_outside_palette():
    state = ColoringState.fresh(Graph(2, [(0, 1)]), 2)
    state.color(0, 0)
    with pytest.raises(PreconditionError):
        try_color(state, 1, 0, {})
    with pytest.raises(PreconditionError):
        try_color_round(state, {0: 1})


def test_state_check_catches_corruption():
    state = ColoringState.fresh(Graph(2, [(0, 1)]), 2)
    state.colors = [1, 1]
    with pytest.raises(InternalConsistencyError):
        state.check()


# -- slack generation ------------------------------------------------------------


def test_empty_sample_gives_no_slack():
    g = generate(GraphGenSpec("random-regular", 20, degree=4, seed=0))
    state, rep = slack_generation(g, [], 8, rng=0)
    assert all(c is None for c in state.colors) and rep.gain == {}


def test_two_non_adjacent_neighbours_one_colour():
    # v = 0 with neighbours 1 and 2, not adjacent to each other
    g = Graph(3, [(0, 1), (0, 2)])
    state, rep = slack_generation(g, [1, 2], 1, rng=0, activation=1.0, report_nodes=[0])
    assert state.colors == [None, 0, 0]
    assert rep.gain[0] == 1 and rep.z[0] == 1
    assert slack_gain_from_colors(g, state.colors, 0) == 1


def _slack_fractions(activation, seeds=range(20)):
    out = []
    for seed in seeds:
        g = generate(GraphGenSpec("random-bipartite-regular", 512, degree=64, seed=seed))
        _, rep = slack_generation(g, range(256), 4 * 64, seed, activation=activation)
        out.append(rep.fraction_meeting())
    return out


def test_slack_fraction_desk_activation():
    fr = _slack_fractions(1.0)
    assert min(fr) >= 0.9


def test_slack_fraction_at_default_activation_is_frozen():
    # measured once: with 1/20 activation a node sees ~3 active neighbours out
    # of 256 colours, so a repeated colour is rare
    fr = _slack_fractions(ACTIVATION)
    assert np.mean(fr) == pytest.approx(0.0173828125)


@pytest.mark.xfail(strict=True, reason="with activation 1/20 only ~2% of nodes gain any slack")
def test_slack_fraction_default_activation_reaches_ninety_percent():
    assert min(_slack_fractions(ACTIVATION)) >= 0.9


def test_slack_threshold_formula():
    assert slack_threshold(500, 1, 2) == pytest.approx(math.exp(-1.5))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_slack_accounting_identity(seed):
    rng = np.random.default_rng(seed)
    g = generate(GraphGenSpec("erdos-renyi", 40, p=0.15, seed=seed))
    S = [v for v in range(g.n) if rng.random() < 0.5]
    before_state = ColoringState.fresh(g, 6)
    before = list(before_state.colors)
    state, rep = slack_generation(g, S, 6, rng, activation=1.0)
    for v in rep.nodes:
        assert rep.gain[v] == slack_gain_from_colors(g, state.colors, v) - slack_gain_from_colors(g, before, v)
        # colours held by at least two neighbours, counted with multiplicity
        held = [state.colors[w] for w in g.neighbors(v) if state.colors[w] is not None]
        assert rep.gain[v] == sum(held.count(c) - 1 for c in set(held))
    assert scan_coloring(g, state.colors, complete=False).ok


def test_z_statistic_counts_retained_repeated_colours():
    g = Graph(4, [(0, 1), (0, 2), (0, 3), (2, 3)])
    cands = {1: 5, 2: 5, 3: 5}
    # 2 and 3 are adjacent and collide; 1 keeps, so colour 5 is not retained by all tryers
    assert z_statistic(g, [1, 2, 3], cands, {1}) == 0
    assert z_statistic(g, [1, 2], {1: 5, 2: 5}, {1, 2}) == 1


# -- two-set slack generation ------------------------------------------------------


def test_two_sets_empty_w():
    g = generate(GraphGenSpec("random-bipartite-regular", 40, degree=6, seed=0))
    state, rep, trace = slack_gen_two_sets(g, [], range(0, 20, 2), range(1, 20, 2), 4, rng=0)
    assert rep.gain == {} and trace["W"] == 0 and trace["post_events"] == 0


def test_two_sets_guarantees():
    g = generate(GraphGenSpec("random-bipartite-regular", 400, degree=32, seed=1))
    side = range(200)
    S1 = [u for u in side if u % 2 == 0]
    S2 = [u for u in side if u % 2 == 1]
    W = range(200, 400)
    state, rep, trace = slack_gen_two_sets(g, W, S1, S2, 16, rng=1, activation=1.0, threshold=1)
    assert all(rep.gain[v] >= 1 for v in W)
    assert trace["max_new_colored_neighbors"] <= 2 * trace["delta_s"]
    assert scan_coloring(g, state.colors, complete=False).ok


def test_two_sets_preconditions():
    g = generate(GraphGenSpec("random-bipartite-regular", 40, degree=6, seed=0))
    with pytest.raises(PreconditionError, match="disjoint"):
        slack_gen_two_sets(g, [0], [1, 2], [2, 3], 4)
    with pytest.raises(PreconditionError, match="Δs"):
        slack_gen_two_sets(g, range(20, 40), range(20), [], 4, delta_s=1)
    with pytest.raises(PreconditionError, match="m̄"):
        slack_gen_two_sets(g, range(20, 40), range(10), range(10, 20), 4, m_bar=10**6)


# -- d1LC completion ----------------------------------------------------------------


def test_greedy_single_colour_edgeless():
    g = Graph(5, [])
    state = ColoringState.fresh(g, 1)
    assert greedy_d1lc(g, state, rng=0).colors == [0] * 5


def test_greedy_path_of_three():
    g = Graph(3, [(0, 1), (1, 2)])
    state = ColoringState(g, [{0, 1}, {0, 1, 2}, {1, 2}], [None] * 3, 3)
    out = greedy_d1lc(g, state, rng=1)
    assert scan_coloring(g, out.colors).ok
    assert all(out.colors[v] in ({0, 1}, {0, 1, 2}, {1, 2})[v] for v in range(3))


def test_greedy_rejects_deficient_nodes():
    g = Graph(2, [(0, 1)])
    with pytest.raises(PreconditionError, match=r"\[0, 1\]"):
        greedy_d1lc(g, ColoringState.fresh(g, 1))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30)
def test_greedy_completes_any_d1lc_instance(seed):
    rng = np.random.default_rng(seed)
    g = generate(GraphGenSpec("erdos-renyi", 30, p=0.2, seed=seed))
    palettes = [set(rng.choice(50, size=g.degree(v) + 1, replace=False).tolist()) for v in range(g.n)]
    state = ColoringState(g, palettes, [None] * g.n, 50)
    out = greedy_d1lc(g, state, rng)
    assert scan_coloring(g, out.colors).ok


# -- partition -------------------------------------------------------------------------


def test_partition_single_class():
    g = generate(GraphGenSpec("random-regular", 30, degree=4, seed=0))
    part = partition_vertices(g, 1, 0.5, rng=0)
    assert set(part.labels) == {0} and part.max_deviation == 0


def test_partition_four_classes():
    for seed in range(5):
        g = generate(GraphGenSpec("random-bipartite-regular", 2000, degree=64, seed=seed))
        part = partition_vertices(g, 4, 0.5, rng=seed)
        assert part.attempts <= 5
        assert scan_partition(g, part.labels, 4, 0.5).ok


def test_partition_more_classes_than_degree():
    g = generate(GraphGenSpec("random-regular", 30, degree=3, seed=0))
    with pytest.raises(InfeasibleParametersError, match="worst deviation"):
        partition_vertices(g, 8, 0.1, rng=0, retries=2)


# -- pipelines ----------------------------------------------------------------------------


def test_sparse_rejects_clique():
    g = Graph(6, itertools.combinations(range(6), 2))
    with pytest.raises(PreconditionError, match="sparsity"):
        color_sparse(g, 0.5, rng=0)


def test_triangle_free_names_triangle():
    g = Graph(5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4)])
    with pytest.raises(PreconditionError, match=r"\(0, 1, 2\)"):
        color_triangle_free(g, 0.9, rng=0)


def test_triangle_free_pipeline_two_classes():
    g = generate(GraphGenSpec("random-bipartite-regular", 1000, degree=64, seed=3))
    res = color_triangle_free(g, 0.9, rng=3, k=2, activation=1.0, slack_rounds=3, branch="mid")
    assert res.num_colors == int(0.9 * 64)
    assert scan_coloring(g, res.colors, max_colors=res.num_colors).ok
    assert res.trace["gamma"] == {"formula": 1 - 1e-7, "used": 0.9}
    # k = 2 means one class pair, i.e. one two-set instance per round
    slack = next(s for s in res.trace["stages"] if s["stage"] == "slack")
    assert len({r["round"] for r in slack["rounds"]}) == len(slack["rounds"])
    assert set(res.timings) >= {"partition", "slack", "d1lc"}
    assert all("elapsed_seconds" not in s for s in res.trace["stages"])


def test_triangle_free_large_branch():
    assert select_branch(256, 600) == "mid" and select_branch(700, 600) == "large"
    assert select_branch(4, 10**6) == "small"
    g = generate(GraphGenSpec("random-bipartite-regular", 400, degree=64, seed=0))
    res = color_triangle_free(g, 0.9, rng=0, activation=1.0, slack_rounds=3, branch="large")
    assert res.trace["branch"] == "large"
    assert scan_coloring(g, res.colors, max_colors=res.num_colors).ok


def test_triangle_free_small_branch():
    # ten disjoint 3-stars: each centre must see a repeated colour among its leaves
    g = Graph(40, [(4 * i, 4 * i + j) for i in range(10) for j in (1, 2, 3)])
    for seed in range(5):
        res = color_triangle_free(g, 1.0, rng=seed, activation=1.0, branch="small")
        assert res.num_colors == 3 and res.trace["needing_slack"] == 10
        assert scan_coloring(g, res.colors, max_colors=3).ok


def test_sparse_pipeline():
    g = generate(GraphGenSpec("sparse-neighborhood", 2000, degree=64, target_zeta=0.5, seed=1))
    res = color_sparse(g, 0.5, rng=1, x=4, mu=24, activation=1.0, slack_rounds=4)
    assert res.num_colors == g.max_degree - 4
    assert scan_coloring(g, res.colors, max_colors=res.num_colors).ok
    assert res.trace["x"]["used"] == 4 and res.trace["x"]["formula"] > 0


def test_large_branch_sparse():
    g = generate(GraphGenSpec("random-bipartite-regular", 400, degree=64, seed=2))
    res = color_sparse(g, 0.5, rng=2, x=4, activation=1.0, slack_rounds=3, branch="large")
    assert res.trace["branch"] == "large"
    assert scan_coloring(g, res.colors, max_colors=60).ok


def test_split_timings_moves_elapsed():
    trace = {"stages": [{"stage": "a", "elapsed_seconds": 1.0}, {"stage": "a", "elapsed_seconds": 2.0}, {"stage": "b"}]}
    assert split_timings(trace) == {"a": 3.0}
    assert trace["stages"] == [{"stage": "a"}, {"stage": "a"}, {"stage": "b"}]


def test_slack_gain_helper():
    assert slack_gain([0, 0, 1, None, 1, 2], range(6)) == 2


def test_slack_shortfall_bound_at_desk_activation():
    # Δs = 16 independent S-neighbours, χ = 32: with every node active, a node
    # misses a repeated kept colour far less often than exp(-m̄/(60χ))
    chi, short, total = 32, 0, 0
    for t in range(4):
        g = generate(GraphGenSpec("random-bipartite-regular", 1250, degree=16, seed=500 + t))
        _, rep = slack_generation(g, range(625), chi, 900 + t, activation=1.0, report_nodes=range(625, 1250))
        for v in rep.nodes:
            total += 1
            short += rep.gain[v] < slack_threshold(rep.m_bar[v], chi, 2)
    frac = short / total
    se = math.sqrt(frac * (1 - frac) / total)
    assert frac <= math.exp(-120 / (60 * chi)) + 3 * se
    assert frac < 0.2
