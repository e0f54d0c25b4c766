"""Shattering-based solvers: the disjoint-variable-set solver and the binary low-risk solver.

Both run a cheap randomized pre-shattering phase, hand the few remaining (small,
independent) pieces to an injected post solver, and merge the results.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

from .core import (
    BINARY_DOMAIN,
    BLACK,
    WHITE,
    EventSpec,
    LLLInstance,
    PartialAssignment,
    as_rng,
    compute_locality,
    condition_event,
    conditional_prob,
    exactly_computable,
    merge,
)
from .errors import InternalConsistencyError, LocalityError, PreconditionError, SolverFailure

PostSolver = Callable[[LLLInstance, np.random.Generator], tuple[PartialAssignment, Any]]


# ---------------------------------------------------------------------------
# instance wrappers


@dataclass
class TwoSetInstance:
    """Every event ``E`` of ``base`` is ``first[E] ∩ second[E]`` over disjoint pools."""

    base: LLLInstance
    first: dict
    second: dict
    V1: frozenset
    V2: frozenset

    def __post_init__(self):
        self.V1 = frozenset(self.V1)
        self.V2 = frozenset(self.V2)
        if self.V1 & self.V2:
            raise PreconditionError("V1 and V2 must be disjoint")
        for e in self.base.events:
            e1, e2 = self.first[e.id], self.second[e.id]
            if not set(e1.vbl) <= self.V1 or not set(e2.vbl) <= self.V2:
                raise PreconditionError(f"event {e.id}: parts must live on V1 and V2 respectively")


def two_set_instance(
    variables, parts: Iterable[tuple], V1, V2, comm_graph=None, name="", p_bound=None
) -> TwoSetInstance:
    """Build a :class:`TwoSetInstance` from ``(event_id, E1, E2, host)`` tuples.

    The base event is the conjunction; its exact conditional is the product of the
    two parts' conditionals whenever both parts provide one.
    """
    events, first, second = [], {}, {}
    for eid, e1, e2, host in parts:
        n1 = len(e1.vbl)

        def predicate(values, _p1=e1.predicate, _p2=e2.predicate, _n=n1):
            return bool(_p1(values[:_n])) and bool(_p2(values[_n:]))

        conditional = None
        if e1.conditional is not None and e2.conditional is not None:
            def conditional(values, _c1=e1.conditional, _c2=e2.conditional, _n=n1):
                a = _c1(values[:_n])
                return a * _c2(values[_n:]) if a else a

        events.append(EventSpec(eid, e1.vbl + e2.vbl, predicate, host, None, "none", conditional, e1.name or e2.name))
        first[eid], second[eid] = e1, e2
    base = LLLInstance(variables, events, comm_graph, name, p_bound=p_bound)
    return TwoSetInstance(base, first, second, V1, V2)


@dataclass
class BinaryLowRiskInstance:
    """Black/white variables; every event carries its testifying ``assoc`` event."""

    base: LLLInstance

    def __post_init__(self):
        for v in self.base.variables:
            if tuple(v.domain) != BINARY_DOMAIN:
                raise PreconditionError(f"variable {v.id}: domain must be exactly (black, white)")
        for e in self.base.events:
            if e.assoc is None:
                raise PreconditionError(f"event {e.id}: missing assoc event")


# ---------------------------------------------------------------------------
# traces


@dataclass
class ShatterTrace:
    flavor: str
    n_events: int = 0
    post_event_ids: list = field(default_factory=list)
    n_post_variables: int = 0
    residual_component_hist: dict = field(default_factory=dict)
    host_component_hist: dict = field(default_factory=dict)
    unhappy_ids: list = field(default_factory=list)
    retracted_round1: int = 0
    retracted_round2: int = 0
    respect_checked: int = 0
    mode_filled: int = 0
    params: dict = field(default_factory=dict)
    criteria: dict = field(default_factory=dict)
    post_trace: Any = None
    outcome: str = "pending"

    @property
    def n_post_events(self) -> int:
        return len(self.post_event_ids)

    @property
    def max_residual_component(self) -> int:
        return max(self.residual_component_hist, default=0)

    @property
    def max_host_component(self) -> int:
        return max(self.host_component_hist, default=0)

    def to_json(self) -> dict:
        post = self.post_trace
        if hasattr(post, "to_json"):
            post = post.to_json()
        return {
            "flavor": self.flavor,
            "n_events": self.n_events,
            "n_post_events": self.n_post_events,
            "post_event_ids": list(self.post_event_ids),
            "n_post_variables": self.n_post_variables,
            "residual_component_hist": {str(k): v for k, v in sorted(self.residual_component_hist.items())},
            "host_component_hist": {str(k): v for k, v in sorted(self.host_component_hist.items())},
            "unhappy_ids": list(self.unhappy_ids),
            "retracted_round1": self.retracted_round1,
            "retracted_round2": self.retracted_round2,
            "respect_checked": self.respect_checked,
            "mode_filled": self.mode_filled,
            "params": self.params,
            "criteria": self.criteria,
            "post_trace": post,
            "outcome": self.outcome,
        }


# ---------------------------------------------------------------------------
# residual construction and statistics


def _base(inst) -> LLLInstance:
    return getattr(inst, "base", inst)


def residual_instance(inst, psi_pre: PartialAssignment, flavor: str) -> LLLInstance:
    """Events still in play after the pre-shattering phase, conditioned on ``psi_pre``.

    ``two-set``: events whose conditional probability is positive, over their
    unset variables.  ``binary``: events with at least one unset variable.
    """
    base = _base(inst)
    keep = []
    for e in base.events:
        unset = psi_pre.unset_among(e.vbl)
        if not unset:
            continue
        if flavor == "two-set":
            second = inst.second[e.id] if isinstance(inst, TwoSetInstance) else None
            first = inst.first[e.id] if isinstance(inst, TwoSetInstance) else None
            if first is not None:
                if not first.predicate(psi_pre.values_for(first.vbl)):
                    continue
                if not _possible(base, second):
                    continue
            elif not conditional_prob(base, e, psi_pre, "auto", rng=0):
                continue
        elif flavor != "binary":
            raise PreconditionError(f"unknown flavor {flavor!r}")
        keep.append(condition_event(base, e, psi_pre))
    needed = sorted({x for e in keep for x in e.vbl}, key=repr)
    variables = [base.var_index[x] for x in needed]
    return LLLInstance(variables, keep, base.comm_graph, f"{base.name}/residual")


def _possible(base: LLLInstance, event: EventSpec) -> bool:
    if not exactly_computable(base, event):
        return True
    return conditional_prob(base, event, PartialAssignment()) > 0


def component_stats(inst, residual: LLLInstance, psi_pre: PartialAssignment) -> dict:
    """Component-size histograms of the residual and of its host projection.

    Also checks that every residual dependency component (with all variables of
    its events) is hosted inside a single component of the ν-ball graph.
    """
    base = _base(inst)
    comps = residual.dependency.components()
    out = {
        "residual_component_hist": dict(Counter(len(c) for c in comps)),
        "host_component_hist": {},
        "nu": None,
    }
    g = base.comm_graph
    if g is None or not residual.events:
        return out
    nu = compute_locality(base)
    out["nu"] = nu
    hosts = {e.host for e in residual.events}
    w_prime = g.ball(hosts, nu)
    host_comps = g.components(w_prime)
    out["host_component_hist"] = dict(Counter(len(c) for c in host_comps))
    where = {v: i for i, c in enumerate(host_comps) for v in c}
    for comp in comps:
        labels = set()
        for eid in comp:
            e = base.event_index[eid]
            labels.add(where.get(e.host, -1))
            labels.update(where.get(base.var_index[x].host, -1) for x in e.vbl)
        if len(labels) != 1 or -1 in labels:
            raise InternalConsistencyError(
                f"residual component {sorted(comp, key=repr)[:5]}... is not hosted inside one ball component"
            )
    return out


def _criteria(base: LLLInstance, flavor: str) -> tuple[dict, dict]:
    params = base.params()
    p, d = params.p, params.d
    crit: dict = {"p": None if p is None else float(p), "d": d}
    if p is not None and d >= 1:
        pf = float(p)
        crit["p_d2"] = pf * d * d
        crit["local_p_lt_d^-14"] = pf < d ** -14.0
        if flavor == "binary":
            crit["shattering_p_le_d^-22"] = pf <= d ** -22.0
        else:
            crit["shattering_p_le_d^-14"] = pf <= d ** -14.0
    return params.to_json(), crit


def _finish(base, final, trace, label):
    bad = [e.id for e in base.events if e.predicate(final.values_for(e.vbl))]
    if bad:
        trace.outcome = "failure"
        raise SolverFailure(f"{label}: {len(bad)} events hold in the merged assignment", trace)
    trace.outcome = "success"
    return final, trace


def _run_post(residual, post_solver, rng, trace):
    if not residual.events:
        return PartialAssignment()
    if post_solver is None:
        post_solver = default_post_solver()
    try:
        psi_post, post_trace = post_solver(residual, rng)
    except SolverFailure as exc:
        trace.post_trace = exc.trace
        trace.outcome = "post-solver-failure"
        raise SolverFailure(f"post solver failed: {exc}", trace) from exc
    trace.post_trace = post_trace
    return psi_post.restrict(v.id for v in residual.variables)


# ---------------------------------------------------------------------------
# solvers


def solve_disjoint(
    inst: TwoSetInstance,
    post_solver: PostSolver | None = None,
    rng=None,
    fill: str = "mode",
    diagnostics: bool = True,
):
    """Sample ``V1``; fix the events whose first part held using ``V2`` only.

    Variables of ``V2`` outside every residual event influence no event; ``fill``
    sets them to their mode (``"mode"``) or to a fresh sample (``"sample"``).
    ``diagnostics=False`` skips the instance parameters and the host-locality
    check, which dominate the running time on instances with wide events.
    """
    if fill not in ("mode", "sample"):
        raise ValueError("fill must be 'mode' or 'sample'")
    if not isinstance(inst, TwoSetInstance):
        raise PreconditionError(
            f"solve_disjoint needs a two-set instance (got {type(inst).__name__}); build one with two_set_instance"
        )
    rng = as_rng(rng)
    base = inst.base
    trace = ShatterTrace("two-set", n_events=len(base.events))
    if diagnostics:
        trace.params, trace.criteria = _criteria(base, "two-set")
    psi_pre = PartialAssignment()
    for x in sorted(inst.V1, key=repr):
        psi_pre.set(x, base.var_index[x].sample(rng))
    residual = residual_instance(inst, psi_pre, "two-set")
    trace.post_event_ids = [e.id for e in residual.events]
    trace.n_post_variables = len(residual.variables)
    if diagnostics:
        stats = component_stats(inst, residual, psi_pre)
    else:
        comps = residual.dependency.components() if residual.events else []
        stats = {"residual_component_hist": dict(Counter(len(c) for c in comps)), "host_component_hist": {}}
    trace.residual_component_hist = stats["residual_component_hist"]
    trace.host_component_hist = stats["host_component_hist"]
    psi_post = _run_post(residual, post_solver, rng, trace)
    final = merge(psi_pre, psi_post)
    for v in base.variables:
        if not final.is_set(v.id):
            final.set(v.id, v.mode() if fill == "mode" else v.sample(rng))
            trace.mode_filled += 1
    return _finish(base, final, trace, "solve_disjoint")


def retract_low_risk(inst: BinaryLowRiskInstance, phi: PartialAssignment):
    """Apply both retraction rounds to a full sample ``phi``.

    Returns ``(psi_pre, unhappy_ids, round1_vars, round2_vars)``.
    """
    base = inst.base
    unhappy = [e.id for e in base.events if e.assoc.predicate(phi.values_for(e.assoc.vbl))]
    round1 = set()
    for eid in unhappy:
        round1.update(base.event_index[eid].vbl)
    unhappy_set = set(unhappy)
    round2 = set()
    for e in base.events:
        if e.id in unhappy_set:
            continue  # already fully retracted
        if any(x in round1 for x in e.vbl):
            round2.update(x for x in e.vbl if phi.get(x) == WHITE)
    round2 -= round1
    psi = phi.copy()
    for x in round1 | round2:
        psi.retract(x)
    return psi, unhappy, round1, round2


def check_respect(inst: BinaryLowRiskInstance, phi: PartialAssignment, psi: PartialAssignment, unhappy) -> int:
    """Verify the promise on every event whose assoc was avoided; return how many were checked."""
    skip = set(unhappy)
    checked = 0
    for e in inst.base.events:
        if e.id in skip:
            continue
        vbl = e.assoc.vbl
        whites_gone = all(not psi.is_set(x) for x in vbl if phi.get(x) == WHITE)
        blacks_kept = all(psi.is_set(x) for x in vbl if phi.get(x) == BLACK)
        if not (whites_gone or blacks_kept):
            raise InternalConsistencyError(f"event {e.id}: pre-assignment violates the retraction promise")
        checked += 1
    return checked


def solve_binary_lowrisk(inst: BinaryLowRiskInstance, post_solver: PostSolver | None = None, rng=None, fill: str = "mode"):
    """Sample everything, retract around red-flag events, then fix the residual.

    Retracted variables that no residual event reads are filled as in :func:`solve_disjoint`.
    """
    if fill not in ("mode", "sample"):
        raise ValueError("fill must be 'mode' or 'sample'")
    rng = as_rng(rng)
    base = inst.base
    trace = ShatterTrace("binary", n_events=len(base.events))
    trace.params, trace.criteria = _criteria(base, "binary")
    phi = PartialAssignment()
    for v in base.variables:
        phi.set(v.id, v.sample(rng))
    psi_pre, unhappy, round1, round2 = retract_low_risk(inst, phi)
    trace.unhappy_ids = unhappy
    trace.retracted_round1 = len(round1)
    trace.retracted_round2 = len(round2)
    trace.respect_checked = check_respect(inst, phi, psi_pre, unhappy)
    residual = residual_instance(inst, psi_pre, "binary")
    trace.post_event_ids = [e.id for e in residual.events]
    trace.n_post_variables = len(residual.variables)
    stats = component_stats(inst, residual, psi_pre)
    trace.residual_component_hist = stats["residual_component_hist"]
    trace.host_component_hist = stats["host_component_hist"]
    psi_post = _run_post(residual, post_solver, rng, trace)
    final = merge(psi_pre, psi_post)
    for v in base.variables:
        if not final.is_set(v.id):
            final.set(v.id, v.mode() if fill == "mode" else v.sample(rng))
            trace.mode_filled += 1
    return _finish(base, final, trace, "solve_binary_lowrisk")


# ---------------------------------------------------------------------------
# post solvers


def default_post_solver(**kwargs) -> PostSolver:
    from .postshatter import postshatter_solver

    return postshatter_solver(**kwargs)


def cps_post_solver(attempts: int = 5, max_iters: int | None = None) -> PostSolver:
    """Resampling on the residual, retried with fresh randomness on budget exhaustion."""
    from .resample import solve_cps

    def solve(residual: LLLInstance, rng):
        traces = []
        for _ in range(attempts):
            psi, tr = solve_cps(residual, max_iters=max_iters, rng=rng)
            traces.append(tr.to_json())
            if tr.success:
                return psi, {"solver": "cps", "attempts": traces}
        raise SolverFailure("resampling post solver exhausted its attempts", {"solver": "cps", "attempts": traces})

    return solve


def enumeration_post_solver(max_vars: int = 20) -> PostSolver:
    """Exhaustive search per dependency component (tiny residuals only)."""
    import itertools

    def solve(residual: LLLInstance, rng):
        out = PartialAssignment()
        sizes = []
        for comp in residual.dependency.components():
            events = [residual.event_index[e] for e in comp]
            xs = sorted({x for e in events for x in e.vbl}, key=repr)
            if len(xs) > max_vars:
                raise SolverFailure(f"component with {len(xs)} variables exceeds the enumeration limit")
            specs = [residual.var_index[x] for x in xs]
            for combo in itertools.product(*(s.domain for s in specs)):
                if any(s.prob(v) == 0 for s, v in zip(specs, combo)):
                    continue
                trial = PartialAssignment(dict(zip(xs, combo)))
                if not any(e.predicate(trial.values_for(e.vbl)) for e in events):
                    break
            else:
                raise SolverFailure("residual component has no satisfying assignment")
            for x, v in trial.items():
                out.set(x, v)
            sizes.append(len(xs))
        return out, {"solver": "enumeration", "component_vars": sizes}

    return solve


def auto_post_solver(**kwargs) -> PostSolver:
    """Post-shattering when every residual conditional is exactly computable, else resampling."""
    post = default_post_solver(**kwargs)
    cps = cps_post_solver()

    def solve(residual: LLLInstance, rng):
        exact = all(exactly_computable(residual, e) for e in residual.events)
        return (post if exact else cps)(residual, rng)

    return solve


def shattering_fraction_bound(p, d) -> float:
    """The union-bound shape ``p·d²`` for the chance an event enters post-shattering."""
    return float(p) * d * d


def component_size_bound(d: int, n: int) -> float:
    """``64·d⁸·log n / log d`` — the soft residual-component bound used in reports."""
    return 64.0 * d**8 * math.log(n) / math.log(max(d, 2))
