"""Randomized exact checks of the risk calculus and the post-shattering machinery.

Each ``*_cases`` generator draws small instances (at most 16 binary variables,
dyadic probabilities) and runs the corresponding oracle check; the summary
functions count passes.  Everything is seeded and exact.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import oracle
from .core import BLACK, WHITE, EventSpec, LLLInstance, PartialAssignment, as_rng, binary_variable, count_event
from .graph import Graph
from .postshatter import build_collection_lll, solve_postshatter

DYADIC = (Fraction(1, 2), Fraction(1, 4), Fraction(3, 4), Fraction(1, 8), Fraction(7, 8))


@dataclass
class SuiteSection:
    name: str
    cases: int = 0
    passed: int = 0
    exact: bool = True
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.cases > 0 and self.passed == self.cases

    def add(self, ok: bool, exact: bool = True, detail=None) -> None:
        self.cases += 1
        self.passed += bool(ok)
        self.exact = self.exact and exact
        if not ok and len(self.failures) < 5:
            self.failures.append(detail)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "cases": self.cases,
            "passed": self.passed,
            "exact": self.exact,
            "ok": self.ok,
            "failures": self.failures,
        }


def random_variables(rng, n: int, dyadic=DYADIC) -> list:
    return [binary_variable(i, dyadic[int(rng.integers(len(dyadic)))], host=i) for i in range(n)]


def random_increasing_event(rng, vbl, event_id=0, terms: int | None = None) -> EventSpec:
    """Holds iff the white variables include one of a few random "white sets".

    More whites can only help, so the event is monotone increasing.
    """
    vbl = tuple(vbl)
    k = len(vbl)
    terms = int(rng.integers(1, 4)) if terms is None else terms
    masks = []
    for _ in range(terms):
        size = int(rng.integers(1, k + 1))
        masks.append(frozenset(int(i) for i in rng.choice(k, size=size, replace=False)))

    def predicate(values, _masks=tuple(masks)):
        whites = {i for i, x in enumerate(values) if x == WHITE}
        return any(m <= whites for m in _masks)

    return EventSpec(event_id, vbl, predicate, vbl[0] if vbl else 0, None, "increasing", None, "white-sets")


def _subset(rng, n: int, low: int, high: int) -> tuple:
    size = int(rng.integers(low, high + 1))
    return tuple(sorted(int(i) for i in rng.choice(n, size=size, replace=False)))


def no_risk_cases(count: int, rng=None, max_vars: int = 12) -> SuiteSection:
    rng = as_rng(rng)
    sec = SuiteSection("no-risk")
    for _ in range(count):
        n = int(rng.integers(2, max_vars + 1))
        variables = random_variables(rng, n)
        event = random_increasing_event(rng, range(n))
        res = oracle.verify_no_risk_lemma(event, variables)
        sec.add(res.passed, res.exact, {"n": n, "cause": res.cause})
    return sec


def sum_threshold_cases(max_n: int = 12, rng=None) -> SuiteSection:
    """Every ``(n, x)`` with ``1 ≤ n ≤ max_n`` and ``0 ≤ x ≤ n`` over random dyadic coins."""
    rng = as_rng(rng)
    sec = SuiteSection("sum-threshold")
    for n in range(1, max_n + 1):
        variables = random_variables(rng, n)
        probs = [v.p_black for v in variables]
        for x in range(n + 1):
            e_x = oracle.sum_threshold_event(0, range(n), probs, x)
            e_half = oracle.sum_threshold_event(1, range(n), probs, Fraction(x, 2))
            res = oracle.verify_sum_threshold(e_x, e_half, variables)
            sec.add(res.passed, res.exact, {"n": n, "x": x})
    return sec


def union_cases(count: int, rng=None, max_vars: int = 10) -> SuiteSection:
    rng = as_rng(rng)
    sec = SuiteSection("union")
    for _ in range(count):
        n = int(rng.integers(2, max_vars + 1))
        variables = random_variables(rng, n)
        picks = []
        for eid in (0, 10):
            vbl = _subset(rng, n, 1, n)
            if rng.random() < 0.5:
                e = random_increasing_event(rng, vbl, eid)
                picks.append((e, e))
            else:
                probs = [variables[i].p_black for i in vbl]
                x = int(rng.integers(0, len(vbl) + 1))
                picks.append(
                    (
                        oracle.sum_threshold_event(eid, vbl, probs, x),
                        oracle.sum_threshold_event(eid + 1, vbl, probs, Fraction(x, 2)),
                    )
                )
        (e1, a1), (e2, a2) = picks
        res = oracle.verify_union_risk(e1, a1, e2, a2, variables)
        sec.add(res.passed, res.exact, {"n": n})
    return sec


def random_event(rng, vbl, event_id=0) -> EventSpec:
    """A uniformly random truth table over ``vbl`` (no structure)."""
    vbl = tuple(vbl)
    table = {combo: bool(rng.random() < 0.5) for combo in itertools.product((BLACK, WHITE), repeat=len(vbl))}

    def predicate(values, _t=table):
        return _t[tuple(values)]

    return EventSpec(event_id, vbl, predicate, vbl[0] if vbl else 0, None, "none", None, "random-table")


def fragility_cases(count: int, rng=None, max_vars: int = 6) -> SuiteSection:
    """Danger and fragility bounds for q ∈ {2⁻¹, …, 2⁻⁶}; each case checks all six q."""
    rng = as_rng(rng)
    sec = SuiteSection("danger-fragility")
    for i in range(count):
        n = int(rng.integers(1, max_vars + 1))
        variables = random_variables(rng, n)
        if i % 3 == 0:
            event = random_event(rng, range(n))
        elif i % 3 == 1:
            event = random_increasing_event(rng, range(n))
        else:
            probs = [v.p_black for v in variables]
            event = oracle.sum_threshold_event(0, range(n), probs, int(rng.integers(0, n + 1)))
        res = oracle.fragility(event, variables)
        lemmas = [oracle.danger_prob(event, c.values["q"], variables).lemma for c in res.checks]
        danger_ok = all(lem is None or lem.passed for lem in lemmas)
        sec.add(res.passed and danger_ok, res.exact, {"n": n, "fragility": str(res.fragility)})
    return sec


def _random_instance(rng, n_vars: int, n_events: int, max_event_vars: int) -> LLLInstance:
    variables = random_variables(rng, n_vars)
    events = []
    for eid in range(n_events):
        vbl = _subset(rng, n_vars, 1, min(max_event_vars, n_vars))
        kind = rng.random()
        if kind < 0.4:
            events.append(random_increasing_event(rng, vbl, eid))
        elif kind < 0.7:
            probs = [variables[i].p_black for i in vbl]
            thr = int(rng.integers(len(vbl) // 2, len(vbl) + 1))
            events.append(count_event(eid, vbl, probs, lambda c, _t=thr: c >= _t, host=vbl[0]))
        else:
            events.append(random_event(rng, vbl, eid))
    return LLLInstance(variables, events, None, "random")


def markov_cases(count: int, rng=None, max_vars: int = 10) -> SuiteSection:
    """Auxiliary events of collection LLLs have probability ≤ 1/d² (or ≤ ref when capped)."""
    rng = as_rng(rng)
    sec = SuiteSection("markov")
    for i in range(count):
        d = 2 + i % 5
        n = int(rng.integers(3, max_vars + 1))
        inst = _random_instance(rng, n, int(rng.integers(1, 5)), 6)
        phi = PartialAssignment()
        for v in inst.variables:
            if rng.random() < 0.3:
                phi.set(v.id, v.sample(rng))
        hosts = sorted({v.host for v in inst.variables})
        cluster = [h for h in hosts if rng.random() < 0.6] or hosts[:1]
        coll = build_collection_lll(inst, phi, [cluster], d)
        res = oracle.verify_markov_claim(coll)
        sec.add(res.passed, res.exact, {"d": d, "n": n, "cause": res.cause})
    return sec


def ledger_cases(count: int, rng=None) -> SuiteSection:
    """Post-shattering runs on small residuals; each collection must respect ``p·d^{2i}``."""
    rng = as_rng(rng)
    sec = SuiteSection("postshatter-ledger")
    for _ in range(count):
        n = int(rng.integers(6, 15))
        variables = [binary_variable(i, Fraction(1, 2), host=i) for i in range(n)]
        events = []
        for eid in range(int(rng.integers(2, 6))):
            vbl = _subset(rng, n, 3, 6)
            probs = [Fraction(1, 2)] * len(vbl)
            events.append(count_event(eid, vbl, probs, lambda c: c == 0, host=vbl[0]))
        path = Graph(n, [(i, i + 1) for i in range(n - 1)])
        inst = LLLInstance(variables, events, path, "ledger")
        try:
            _, trace = solve_postshatter(inst, PartialAssignment(), rng=rng)
        except Exception as exc:  # a ledger violation surfaces as an exception
            sec.add(False, True, {"error": f"{type(exc).__name__}: {exc}"[:200]})
            continue
        ok = all(r["violations"] == 0 and r["budget_violations"] == 0 for r in trace.ledger)
        sec.add(ok, trace.estimated_values == 0, {"collections": len(trace.ledger)})
    return sec


def run_oracle_suite(budget: int = 500, rng=0) -> dict:
    """All sections at the given case budget (the sum-threshold sweep is exhaustive)."""
    rng = as_rng(rng)
    sections = [
        no_risk_cases(budget, rng),
        sum_threshold_cases(12, rng),
        union_cases(max(budget * 2 // 5, 1), rng),
        fragility_cases(max(budget // 5, 1), rng),
        markov_cases(max(budget * 2 // 5, 1), rng),
        ledger_cases(max(budget // 10, 1), rng),
    ]
    return {"sections": [s.to_json() for s in sections], "ok": all(s.ok for s in sections)}
