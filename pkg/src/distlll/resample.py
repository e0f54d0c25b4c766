"""Parallel resampling of locally-minimal failing events."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .core import (
    DependencyGraph,
    LLLInstance,
    PartialAssignment,
    as_rng,
)

log = logging.getLogger(__name__)

MIN_BUDGET = 32
MAX_BUDGET = 10**6
# used when e·p·d² >= 1, where the logarithmic budget formula is undefined
FALLBACK_BUDGET = 256


@dataclass
class ResampleTrace:
    iterations: int = 0
    failing_counts: list[int] = field(default_factory=list)
    outcome: str = "success"
    budget: int = 0
    criterion_ok: bool | None = None

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    def to_json(self) -> dict:
        return {
            "iterations": self.iterations,
            "failing_counts": list(self.failing_counts),
            "outcome": self.outcome,
            "budget": self.budget,
            "criterion_ok": self.criterion_ok,
        }


def default_budget(n_events: int, p, d: int) -> int:
    """``ceil(4 log|B| / log(1/(e p d²)))`` clamped to ``[32, 10⁶]``."""
    x = math.e * float(p or 0) * d * d
    if n_events <= 1 or x <= 0:
        return MIN_BUDGET
    if x >= 1:
        return FALLBACK_BUDGET
    raw = math.ceil(4 * math.log(n_events) / math.log(1 / x))
    return min(MAX_BUDGET, max(MIN_BUDGET, raw))


def local_minima(dep: DependencyGraph, failing, ids) -> set:
    """Failing events whose id is minimal over their closed failing neighborhood.

    Computed through the variables: each variable learns the smallest id among
    the failing events containing it, and an event is chosen iff it sees its own
    id on every one of its variables.
    """
    failing = set(failing)
    best: dict = {}
    for a in failing:
        ida = ids[a]
        for x in dep.vbl(a):
            cur = best.get(x)
            if cur is None or ida < cur:
                best[x] = ida
    return {a for a in failing if all(best[x] == ids[a] for x in dep.vbl(a))}


def solve_cps(
    inst: LLLInstance,
    ids=None,
    max_iters: int | None = None,
    rng=None,
    p=None,
) -> tuple[PartialAssignment, ResampleTrace]:
    """Sample everything, then repeatedly resample the variables of local minima.

    Returns the last assignment and a trace; on budget exhaustion the trace's
    outcome says so and the caller decides whether to retry.
    """
    rng = as_rng(rng)
    dep = inst.dependency
    if ids is None:
        ids = {e.id: i for i, e in enumerate(inst.events)}
    trace = ResampleTrace()
    if max_iters is None:
        if p is None:
            params = inst.params() if inst.p_bound is not None or len(inst.events) <= 64 else None
            p = params.p if params is not None else None
        d = dep.max_degree
        max_iters = default_budget(len(inst.events), p, d)
        if p is not None:
            trace.criterion_ok = math.e * float(p) * d * d < 1
            if not trace.criterion_ok:
                log.debug("e*p*d^2 >= 1 for %s; resampling without guarantee", inst.name or "instance")
    trace.budget = max_iters

    phi = PartialAssignment()
    for v in inst.variables:
        phi.set(v.id, v.sample(rng))
    events = inst.event_index

    def holds(eid):
        e = events[eid]
        return e.predicate(phi.values_for(e.vbl))

    failing = {e.id for e in inst.events if holds(e.id)}
    trace.failing_counts.append(len(failing))
    while failing and trace.iterations < max_iters:
        chosen = local_minima(dep, failing, ids)
        touched = set()
        for eid in sorted(chosen, key=ids.__getitem__):
            touched.update(events[eid].vbl)
        for x in sorted(touched, key=repr):
            phi.set(x, inst.var_index[x].sample(rng))
        recheck = set()
        for x in touched:
            recheck.update(dep.var_events.get(x, ()))
        for eid in recheck:
            if holds(eid):
                failing.add(eid)
            else:
                failing.discard(eid)
        trace.iterations += 1
        trace.failing_counts.append(len(failing))
    trace.outcome = "success" if not failing else "iteration-budget-exhausted"
    return phi, trace
