import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distlll import oracle
from distlll.core import (
    BLACK,
    WHITE,
    EventSpec,
    LLLInstance,
    PartialAssignment,
    binary_variable,
    conditional_prob,
    count_event,
    sample_all,
)
from distlll.errors import InternalConsistencyError, SolverFailure
from distlll.graph import Graph, GraphGenSpec, generate
from distlll.problems import degree_bounded_lll, orientation_from_assignment, sinkless_orientation_lll
from distlll.problems.validate import scan_degree_bounds, scan_orientation
from distlll.shatter import (
    BinaryLowRiskInstance,
    auto_post_solver,
    check_respect,
    component_stats,
    cps_post_solver,
    enumeration_post_solver,
    residual_instance,
    retract_low_risk,
    solve_binary_lowrisk,
    solve_disjoint,
    two_set_instance,
)

from conftest import HALF


def black_event(eid, vbl, host=0, **kw):
    return EventSpec(eid, tuple(vbl), lambda vals: all(x == BLACK for x in vals), host, **kw)


def self_assoc(e):
    object.__setattr__(e, "assoc", e)
    return e


def path_graph(n):
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


# -- disjoint variable sets --------------------------------------------------


def toy_two_set(first_pred):
    # event i: first part on variable i (V1), second part "variable 10+i black" (V2)
    variables = [binary_variable(i, HALF, host=i) for i in range(4)]
    variables += [binary_variable(10 + i, HALF, host=i) for i in range(4)]
    parts = []
    for i in range(4):
        e1 = EventSpec(f"a{i}", (i,), first_pred, i)
        e2 = black_event(f"b{i}", (10 + i,), i)
        parts.append((i, e1, e2, i))
    return two_set_instance(variables, parts, range(4), range(10, 14), path_graph(4), "toy")


def test_first_parts_avoided_leave_empty_residual():
    inst = toy_two_set(lambda vals: False)
    phi, trace = solve_disjoint(inst, enumeration_post_solver(), rng=1)
    assert trace.n_post_events == 0 and trace.post_trace is None
    assert trace.residual_component_hist == {}
    assert trace.mode_filled == 4
    assert all(phi.is_set(v.id) for v in inst.base.variables)


def test_first_parts_always_hold():
    inst = toy_two_set(lambda vals: True)
    phi, trace = solve_disjoint(inst, enumeration_post_solver(), rng=1)
    assert sorted(trace.post_event_ids) == [0, 1, 2, 3]
    assert all(phi.get(10 + i) == WHITE for i in range(4))
    assert trace.outcome == "success"


def test_failing_post_solver_propagates_with_trace():
    variables = [binary_variable(0, HALF), binary_variable(1, HALF)]
    e1 = EventSpec("a", (0,), lambda vals: True)
    e2 = EventSpec("b", (1,), lambda vals: True)
    inst = two_set_instance(variables, [(0, e1, e2, 0)], {0}, {1})
    with pytest.raises(SolverFailure) as info:
        solve_disjoint(inst, enumeration_post_solver(), rng=0)
    assert info.value.trace.outcome == "post-solver-failure"


def test_sinkless_two_set_on_six_regular():
    g = generate(GraphGenSpec("random-regular", 1000, degree=6, seed=5))
    inst = sinkless_orientation_lll(g, split="euler")
    phi, trace = solve_disjoint(inst, cps_post_solver(), rng=5)
    scan = scan_orientation(g, orientation_from_assignment(g, phi))
    assert scan.ok and scan.stats["min_out_degree"] >= 1
    # every event: first part avoided by the V1 sample or second part avoided overall
    for e in inst.base.events:
        first, second = inst.first[e.id], inst.second[e.id]
        assert not first.predicate(phi.values_for(first.vbl)) or not second.predicate(phi.values_for(second.vbl))
    assert sum(k * v for k, v in trace.residual_component_hist.items()) == trace.n_post_events


def test_disjoint_fill_modes():
    inst = toy_two_set(lambda vals: False)
    with pytest.raises(ValueError):
        solve_disjoint(inst, rng=0, fill="zero")
    phi, trace = solve_disjoint(inst, rng=0, fill="sample")
    assert trace.mode_filled == 4


# -- binary low-risk ---------------------------------------------------------


def test_no_unhappy_event_keeps_initial_sample():
    variables = [binary_variable(i, HALF, host=i) for i in range(5)]
    events = [self_assoc(EventSpec(i, (i, i + 1), lambda vals: False, i)) for i in range(4)]
    inst = BinaryLowRiskInstance(LLLInstance(variables, events, path_graph(5)))
    phi, trace = solve_binary_lowrisk(inst, enumeration_post_solver(), rng=3)
    assert phi == sample_all(inst.base, rng=3)
    assert trace.unhappy_ids == [] and trace.retracted_round1 == trace.retracted_round2 == 0
    assert trace.n_post_events == 0


def test_retraction_rules_on_schematic():
    # A on {0,1,2} is unhappy; B on {2,3,4} shares variable 2 and is affected
    variables = [binary_variable(i, HALF, host=i) for i in range(6)]
    a = self_assoc(EventSpec("A", (0, 1, 2), lambda vals: True, 0))
    b = self_assoc(EventSpec("B", (2, 3, 4), lambda vals: False, 2))
    c = self_assoc(EventSpec("C", (5,), lambda vals: False, 5))
    inst = BinaryLowRiskInstance(LLLInstance(variables, [a, b, c], path_graph(6)))
    phi = PartialAssignment({0: BLACK, 1: WHITE, 2: WHITE, 3: BLACK, 4: WHITE, 5: WHITE})
    psi, unhappy, round1, round2 = retract_low_risk(inst, phi)
    assert unhappy == ["A"]
    assert all(not psi.is_set(x) for x in (0, 1, 2))
    assert round2 == {4}
    assert psi.get(3) == BLACK and not psi.is_set(4)
    assert psi.get(5) == WHITE
    assert check_respect(inst, phi, psi, unhappy) == 2


def test_respect_violation_is_detected():
    variables = [binary_variable(i, HALF) for i in range(2)]
    e = self_assoc(EventSpec(0, (0, 1), lambda vals: False))
    inst = BinaryLowRiskInstance(LLLInstance(variables, [e]))
    phi = PartialAssignment({0: BLACK, 1: WHITE})
    bad = PartialAssignment({1: WHITE})  # black retracted, white kept
    with pytest.raises(InternalConsistencyError):
        check_respect(inst, phi, bad, [])


@st.composite
def binary_instances(draw):
    n = draw(st.integers(2, 9))
    variables = [binary_variable(i, draw(st.sampled_from([HALF, Fraction(1, 4)])), host=i) for i in range(n)]
    events = []
    for eid in range(draw(st.integers(1, 6))):
        vbl = draw(st.lists(st.integers(0, n - 1), min_size=1, max_size=min(n, 4), unique=True))
        thr = draw(st.integers(0, len(vbl)))
        # "at least thr whites" is increasing, so it testifies itself
        e = count_event(eid, vbl, [variables[x].p_black for x in vbl], lambda c, _t=thr, _m=len(vbl): _m - c >= _t,
                        host=vbl[0], monotonicity="increasing")
        events.append(self_assoc(e))
    phi = PartialAssignment({i: draw(st.sampled_from([BLACK, WHITE])) for i in range(n)})
    return BinaryLowRiskInstance(LLLInstance(variables, events, path_graph(n))), phi


@given(binary_instances())
def test_retraction_soundness(args):
    inst, phi = args
    psi, unhappy, _, _ = retract_low_risk(inst, phi)
    events = inst.base.events
    held = [e for e in events if e.assoc.predicate(phi.values_for(e.assoc.vbl))]
    first = {x for e in held for x in e.vbl}
    second = {x for e in events if set(e.vbl) & first for x in e.vbl if phi.get(x) == WHITE}
    for v in inst.base.variables:
        assert (not psi.is_set(v.id)) == (v.id in first or v.id in second)
        if psi.is_set(v.id):
            assert psi.get(v.id) == phi.get(v.id)


@given(binary_instances())
@settings(max_examples=30)
def test_respect_membership_by_enumeration(args):
    inst, phi = args
    psi, unhappy, _, _ = retract_low_risk(inst, phi)
    for e in inst.base.events:
        if e.id in unhappy:
            continue
        allowed = oracle.enumerate_respect(e.assoc, inst.base.variables)
        assert psi.restrict(e.assoc.vbl) in allowed


@given(binary_instances(), st.integers(0, 2**16))
@settings(max_examples=30)
def test_final_assignment_avoids_everything(args, seed):
    inst, _ = args
    # drop instances with an event that cannot be avoided at all
    for e in inst.base.events:
        if conditional_prob(inst.base, e, PartialAssignment()) == 1:
            return
    try:
        phi, trace = solve_binary_lowrisk(inst, enumeration_post_solver(), rng=seed)
    except SolverFailure:
        # only legitimate when the joint instance is unsatisfiable
        assert not any(
            all(not e.predicate(tuple(dict(zip(range(len(inst.base.variables)), combo))[x] for x in e.vbl))
                for e in inst.base.events)
            for combo in itertools.product((BLACK, WHITE), repeat=len(inst.base.variables))
        )
        return
    assert not any(e.predicate(phi.values_for(e.vbl)) for e in inst.base.events)


def test_degree_bounded_end_to_end():
    g = generate(GraphGenSpec("random-regular", 400, degree=48, seed=2))
    k = 8
    inst = degree_bounded_lll(g, k)
    phi, trace = solve_binary_lowrisk(inst, auto_post_solver(), rng=2)
    S = {x for x, v in phi.items() if v == BLACK}
    assert scan_degree_bounds(g, S, k / 3, 4 * k).ok
    assert trace.respect_checked + len(trace.unhappy_ids) == trace.n_events


# -- residual instances -------------------------------------------------------


def test_residual_empty_when_everything_set():
    variables = [binary_variable(i, HALF) for i in range(3)]
    events = [self_assoc(black_event(i, (i,))) for i in range(3)]
    inst = BinaryLowRiskInstance(LLLInstance(variables, events))
    psi = PartialAssignment({i: WHITE for i in range(3)})
    res = residual_instance(inst, psi, "binary")
    assert len(res.events) == 0
    stats = component_stats(inst, res, psi)
    assert stats["residual_component_hist"] == {} and stats["host_component_hist"] == {}


def test_residual_isolated_unhappy_event():
    variables = [binary_variable(i, HALF, host=0) for i in range(3)]
    e = self_assoc(black_event(0, (0, 1, 2)))
    inst = BinaryLowRiskInstance(LLLInstance(variables, [e]))
    phi = PartialAssignment({0: BLACK, 1: BLACK, 2: BLACK})
    psi, unhappy, _, _ = retract_low_risk(inst, phi)
    res = residual_instance(inst, psi, "binary")
    assert [r.id for r in res.events] == [0]
    assert conditional_prob(res, res.events[0], PartialAssignment()) == Fraction(1, 8)


def test_residual_conditionals_stay_below_p():
    g = generate(GraphGenSpec("random-regular", 8, degree=3, seed=1))
    with pytest.warns(UserWarning, match="analysed regime"):
        inst = degree_bounded_lll(g, 1)
    p = inst.base.params().p
    for seed in range(30):
        phi = sample_all(inst.base, rng=seed)
        psi, *_ = retract_low_risk(inst, phi)
        res = residual_instance(inst, psi, "binary")
        for e in res.events:
            uni = oracle.make_universe(res.variables, [e])
            assert oracle.probability(oracle.truth_table(e, uni), uni) <= p


def test_component_stats_isolated_event_ball():
    g = generate(GraphGenSpec("random-regular", 30, degree=4, seed=0))
    variables = [binary_variable(v, HALF, host=v) for v in range(g.n)]
    events = [self_assoc(black_event(v, g.neighbors(v), host=v)) for v in range(g.n)]
    inst = BinaryLowRiskInstance(LLLInstance(variables, events, g))
    # only node 0's neighbors stay unset; every event reading one of them is residual
    psi = PartialAssignment({v: WHITE for v in range(g.n) if v not in g.neighbors(0)})
    res = residual_instance(inst, psi, "binary")
    stats = component_stats(inst, res, psi)
    assert stats["nu"] == 1
    assert sum(stats["residual_component_hist"].values()) == len(res.dependency.components())
    assert sum(k * v for k, v in stats["residual_component_hist"].items()) == len(res.events)
    assert sum(k * v for k, v in stats["host_component_hist"].items()) == len(g.ball({e.host for e in res.events}, 1))

    lone = BinaryLowRiskInstance(LLLInstance(variables, events[:1], g))
    res = residual_instance(lone, PartialAssignment(), "binary")
    stats = component_stats(lone, res, PartialAssignment())
    assert stats["residual_component_hist"] == {1: 1}
    (size,) = stats["host_component_hist"]
    assert size <= 1 + g.max_degree


def test_disjoint_solver_rejects_plain_instance():
    from distlll.errors import PreconditionError
    from distlll.graph import GraphGenSpec, generate
    from distlll.problems import sinkless_orientation_lll

    g = generate(GraphGenSpec("random-regular", 20, degree=4, seed=0))
    with pytest.raises(PreconditionError, match="two-set instance"):
        solve_disjoint(sinkless_orientation_lll(g))
