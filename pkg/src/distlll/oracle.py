"""Exhaustive ground truth for risks, danger, fragility and the concentration claims.

Everything here works on binary variables and small universes.  The fast route
builds the full conditional-probability table over ``{black, white, ⊥}ⁿ`` (axis
index 0 = black, 1 = white, 2 = unset) and reduces it with per-axis maxima; a
second, independent route enumerates partial assignments explicitly and is used to
cross-check the first on tiny inputs.

Tables are float64.  With dyadic probabilities whose denominators need ``b`` bits,
every entry is a multiple of ``2^-(b·n)``, so the arithmetic is exact as long as
``b·n ≤ 52``; such results are returned as ``Fraction``.  Non-dyadic fractions use
an object table of ``Fraction`` on small universes, and anything else is a float
whose error stays far below ``1e-12``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .core import (
    BINARY_DOMAIN,
    BLACK,
    WHITE,
    EventSpec,
    LLLInstance,
    PartialAssignment,
    VariableSpec,
    _enumerate_conditional,
    as_rng,
    count_event,
)
from .errors import ContainmentError, EnumerationLimitError, PreconditionError

RISK_LIMIT = 16
UNION_LIMIT = 14
DANGER_LIMIT = 14
FRAGILITY_LIMIT = 10
FRACTION_TABLE_LIMIT = 11
FLOAT_TOL = 1e-12

_VALUES = (BLACK, WHITE, None)  # axis index -> value


# ---------------------------------------------------------------------------
# universes and tables


def _var_index(variables) -> Mapping[Any, VariableSpec]:
    if isinstance(variables, LLLInstance):
        return variables.var_index
    if isinstance(variables, Mapping):
        return variables
    return {v.id: v for v in variables}


def _sorted_ids(ids) -> list:
    ids = set(ids)
    try:
        return sorted(ids)
    except TypeError:
        return sorted(ids, key=repr)


def _dyadic_bits(q: Fraction) -> int | None:
    den = q.denominator
    if den & (den - 1):
        return None
    return den.bit_length() - 1


@dataclass
class Universe:
    """An ordered set of binary variables shared by the events under study."""

    ids: tuple
    p_black: tuple
    backend: str  # "float-exact", "fraction" or "float"

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def exact(self) -> bool:
        return self.backend != "float"

    def axis(self, var) -> int:
        return self.ids.index(var)

    def num(self, x):
        """Convert a table value to the reported number type."""
        if self.backend == "float-exact":
            return Fraction(float(x))
        if self.backend == "fraction":
            return Fraction(x)
        return float(x)

    def q(self, i):
        q = self.p_black[i]
        return float(q) if self.backend != "fraction" else Fraction(q)

    def assignment(self, index: Sequence[int]) -> PartialAssignment:
        return PartialAssignment({x: _VALUES[k] for x, k in zip(self.ids, index)})

    def weights(self) -> np.ndarray:
        """Probability of each full assignment, shape ``(2,)*n``."""
        dtype = object if self.backend == "fraction" else float
        w = np.ones((), dtype=dtype)
        for i in range(self.n):
            q = self.q(i)
            w = np.multiply.outer(w, np.array([q, 1 - q], dtype=dtype))
        return w


def make_universe(variables, events: Iterable[EventSpec], limit: int = RISK_LIMIT, extra=()) -> Universe:
    index = _var_index(variables)
    ids = set(extra)
    for e in events:
        ids.update(e.vbl)
    ids = _sorted_ids(ids)
    if len(ids) > limit:
        raise EnumerationLimitError(len(ids), limit)
    probs = []
    for x in ids:
        spec = index[x]
        if tuple(spec.domain) != BINARY_DOMAIN:
            raise PreconditionError(f"variable {x} is not binary (black, white)")
        probs.append(spec.p_black)
    fracs = [Fraction(q) for q in probs]
    bits = [_dyadic_bits(q) for q in fracs]
    if all(b is not None for b in bits) and max(bits, default=0) * len(ids) <= 52:
        backend = "float-exact"
    elif all(not isinstance(q, float) for q in probs) and len(ids) <= FRACTION_TABLE_LIMIT:
        backend = "fraction"
    else:
        backend = "float"
    return Universe(tuple(ids), tuple(probs), backend)


def truth_table(event: EventSpec, uni: Universe) -> np.ndarray:
    """Boolean array of shape ``(2,)*n``: does the event hold on each full assignment."""
    k = len(event.vbl)
    own = np.zeros((2,) * k, dtype=bool)
    for idx in itertools.product((0, 1), repeat=k):
        own[idx] = bool(event.predicate(tuple(BINARY_DOMAIN[i] for i in idx)))
    axes = [uni.axis(x) for x in event.vbl]
    order = np.argsort(axes)
    own = own.transpose(order) if k else own
    shape = [1] * uni.n
    for a in axes:
        shape[a] = 2
    return np.broadcast_to(own.reshape(shape), (2,) * uni.n)


def conditional_table(event: EventSpec, uni: Universe, truth: np.ndarray | None = None) -> np.ndarray:
    """``Pr(E | ψ)`` for every ψ in ``{black, white, ⊥}ⁿ``, shape ``(3,)*n``."""
    t = truth_table(event, uni) if truth is None else truth
    dtype = object if uni.backend == "fraction" else float
    table = np.array(t, dtype=dtype)
    if dtype is object:
        table = np.vectorize(lambda b: Fraction(int(b)), otypes=[object])(table) if table.size else table
    for i in range(uni.n):
        q = uni.q(i)
        a = np.take(table, 0, axis=i)
        b = np.take(table, 1, axis=i)
        mixed = q * a + (1 - q) * b
        table = np.concatenate([table, np.expand_dims(mixed, i)], axis=i)
    return table


def probability(truth: np.ndarray, uni: Universe):
    w = uni.weights()
    return uni.num(np.sum(np.where(truth, w, 0 * w)))


def _closure(table: np.ndarray, options: Sequence[tuple]) -> np.ndarray:
    """Per full assignment, the max of ``table`` over the allowed per-axis choices.

    ``options[i][v]`` lists the table indices axis ``i`` may take when the full
    assignment has value index ``v`` there.
    """
    out = table
    for i, opts in enumerate(options):
        parts = []
        for v in (0, 1):
            sub = np.take(out, list(opts[v]), axis=i)
            parts.append(sub.max(axis=i))
        out = np.stack(parts, axis=i)
    return out


def _witness(table: np.ndarray, options: Sequence[tuple], phi_index: tuple) -> tuple:
    allowed = [list(opts[v]) for opts, v in zip(options, phi_index)]
    sub = table[np.ix_(*allowed)] if allowed else table
    flat = int(np.argmax(sub)) if sub.dtype != object else max(range(sub.size), key=lambda j: sub.flat[j])
    local = np.unravel_index(flat, sub.shape) if allowed else ()
    return tuple(allowed[i][j] for i, j in enumerate(local))


_ANY = ((0, 2), (1, 2))
_PROMISE_WHITES_GONE = ((0, 2), (2,))
_PROMISE_BLACKS_KEPT = ((0,), (1, 2))


def _options(uni: Universe, promise_vars, kind: str) -> list:
    promise = set(promise_vars)
    rule = {"all-whites-retracted": _PROMISE_WHITES_GONE, "no-blacks-retracted": _PROMISE_BLACKS_KEPT}.get(kind)
    return [rule if (rule is not None and x in promise) else _ANY for x in uni.ids]


# ---------------------------------------------------------------------------
# reports


def num_json(x):
    if isinstance(x, Fraction):
        return {"num": x.numerator, "den": x.denominator}
    if isinstance(x, (int, np.integer)):
        return {"num": int(x), "den": 1}
    if x is None:
        return None
    return float(x)


@dataclass
class RiskReport:
    event_id: Any
    assoc_id: Any
    pr_assoc: Any
    max_respect: Any
    risk: Any
    witness: PartialAssignment | None
    witness_source: PartialAssignment | None = None
    exact: bool = True

    def to_json(self) -> dict:
        return {
            "event": self.event_id,
            "assoc": self.assoc_id,
            "pr_assoc": num_json(self.pr_assoc),
            "max_respect": num_json(self.max_respect),
            "risk": num_json(self.risk),
            "witness": None if self.witness is None else self.witness.to_json(),
            "witness_source": None if self.witness_source is None else self.witness_source.to_json(),
            "exact": self.exact,
        }


@dataclass
class CheckResult:
    name: str
    passed: bool
    values: dict = field(default_factory=dict)
    cause: str | None = None
    witness: Any = None
    exact: bool = True

    def __bool__(self) -> bool:
        return self.passed

    def to_json(self) -> dict:
        def enc(v):
            if isinstance(v, PartialAssignment):
                return v.to_json()
            if isinstance(v, (tuple, list)):
                return [enc(u) for u in v]
            if hasattr(v, "to_json"):
                return v.to_json()
            return num_json(v) if isinstance(v, (Fraction, float, int, np.floating, np.integer)) else v

        return {
            "case": self.name,
            "pass": self.passed,
            "values": {k: enc(v) for k, v in self.values.items()},
            "cause": self.cause,
            "witness": enc(self.witness),
            "exact": self.exact,
        }


def _leq(a, b, exact: bool) -> bool:
    return a <= b if exact else float(a) <= float(b) + FLOAT_TOL


def _eq(a, b, exact: bool) -> bool:
    return a == b if exact else abs(float(a) - float(b)) <= FLOAT_TOL


# ---------------------------------------------------------------------------
# respect sets (explicit route)


def _full_assignments(ids):
    for combo in itertools.product(BINARY_DOMAIN, repeat=len(ids)):
        yield dict(zip(ids, combo))


def enumerate_retract(assoc: EventSpec, variables, universe: Sequence | None = None, limit: int = RISK_LIMIT) -> set:
    """All retractions of full assignments avoiding ``assoc``."""
    ids = _universe_ids(assoc, universe, limit)
    out = set()
    for phi in _full_assignments(ids):
        if assoc.predicate(tuple(phi[x] for x in assoc.vbl)):
            continue
        for keep in itertools.product((True, False), repeat=len(ids)):
            out.add(PartialAssignment({x: phi[x] for x, k in zip(ids, keep) if k}))
    return out


def enumerate_respect(assoc: EventSpec, variables=None, universe: Sequence | None = None, limit: int = RISK_LIMIT) -> set:
    """All promise-respecting retractions of ``assoc``-avoiding full assignments.

    A retraction qualifies when every white variable of ``assoc`` is unset, or when
    no black variable of ``assoc`` is unset.  Variables of ``universe`` outside
    ``vbl(assoc)`` may be retracted freely.
    """
    ids = _universe_ids(assoc, universe, limit)
    promise = set(assoc.vbl)
    out = set()
    for phi in _full_assignments(ids):
        if assoc.predicate(tuple(phi[x] for x in assoc.vbl)):
            continue
        for rule in ("all-whites-retracted", "no-blacks-retracted"):
            choices = []
            for x in ids:
                v = phi[x]
                if x in promise and rule == "all-whites-retracted":
                    choices.append((v, None) if v == BLACK else (None,))
                elif x in promise:
                    choices.append((v,) if v == BLACK else (v, None))
                else:
                    choices.append((v, None))
            for combo in itertools.product(*choices):
                out.add(PartialAssignment(dict(zip(ids, combo))))
    return out


def _universe_ids(assoc, universe, limit):
    ids = _sorted_ids(assoc.vbl if universe is None else set(universe) | set(assoc.vbl))
    if len(ids) > limit:
        raise EnumerationLimitError(len(ids), limit)
    return ids


def testified_risk_bruteforce(event: EventSpec, assoc: EventSpec, variables, limit: int = 10):
    """Slow independent route: max of ``Pr(E | ψ)`` over an explicitly enumerated Respect set."""
    index = _var_index(variables)
    inst = LLLInstance([index[x] for x in _sorted_ids(set(event.vbl) | set(assoc.vbl))], [])
    empty = PartialAssignment()
    pr_assoc = _enumerate_conditional(inst, assoc, empty.values_for(assoc.vbl), list(range(len(assoc.vbl))))
    best, arg = 0, None
    for psi in enumerate_respect(assoc, index, universe=event.vbl, limit=limit):
        values = psi.values_for(event.vbl)
        unset = [i for i, v in enumerate(values) if v is None]
        c = _enumerate_conditional(inst, event, values, unset)
        if arg is None or c > best:
            best, arg = c, psi
    return max(pr_assoc, best), pr_assoc, best, arg


# ---------------------------------------------------------------------------
# risk


def check_containment(event: EventSpec, assoc: EventSpec, uni: Universe) -> None:
    bad = truth_table(event, uni) & ~truth_table(assoc, uni)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ContainmentError(
            f"event {assoc.id} does not contain event {event.id}",
            counterexample=uni.assignment(idx),
        )


def testified_risk(event: EventSpec, assoc: EventSpec, variables, limit: int = RISK_LIMIT) -> RiskReport:
    """Exact ``max(Pr(assoc), max over Respect(assoc) of Pr(E | ψ))``.

    ``assoc`` must contain ``event``; otherwise :class:`ContainmentError` carries a
    full assignment on which ``event`` holds but ``assoc`` does not.
    """
    uni = make_universe(variables, (event, assoc), limit)
    e_truth = truth_table(event, uni)
    a_truth = truth_table(assoc, uni)
    bad = e_truth & ~a_truth
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ContainmentError(
            f"event {assoc.id} does not contain event {event.id}", counterexample=uni.assignment(idx)
        )
    pr_assoc = probability(a_truth, uni)
    table = conditional_table(event, uni, e_truth)
    opts_a = _options(uni, assoc.vbl, "all-whites-retracted")
    opts_b = _options(uni, assoc.vbl, "no-blacks-retracted")
    reach_a = _closure(table, opts_a)
    reach_b = _closure(table, opts_b)
    both = np.maximum(reach_a, reach_b)
    avoid = ~a_truth
    if not avoid.any():
        return RiskReport(event.id, assoc.id, pr_assoc, uni.num(0), pr_assoc, None, None, uni.exact)
    masked = np.where(avoid, both, -1)
    flat = int(np.argmax(masked)) if masked.dtype != object else max(range(masked.size), key=lambda j: masked.flat[j])
    phi_idx = tuple(int(i) for i in np.unravel_index(flat, masked.shape))
    best = both[phi_idx]
    opts = opts_a if reach_a[phi_idx] >= reach_b[phi_idx] else opts_b
    psi_idx = _witness(table, opts, phi_idx)
    max_respect = uni.num(best)
    return RiskReport(
        event.id,
        assoc.id,
        pr_assoc,
        max_respect,
        max(pr_assoc, max_respect),
        uni.assignment(psi_idx),
        uni.assignment(phi_idx),
        uni.exact,
    )


def check_monotone(event: EventSpec, variables, direction: str | None = None, limit: int = RISK_LIMIT):
    """Check ``Pr(E | ψ) ≤ Pr(E | φ)`` whenever ψ ≤ φ in the favoring order.

    Increasing events are black-favoring: with ``black < ⊥ < white`` on every
    coordinate, moving a coordinate up never lowers the conditional probability.
    Returns ``(ok, (lower, upper))`` where the pair witnesses a violation.
    """
    direction = direction or event.monotonicity
    if direction not in ("increasing", "decreasing"):
        raise PreconditionError(f"event {event.id} declares no monotonicity")
    uni = make_universe(variables, (event,), limit)
    table = conditional_table(event, uni)
    chain = (0, 2, 1) if direction == "increasing" else (1, 2, 0)
    for i in range(uni.n):
        for lo, hi in zip(chain, chain[1:]):
            a = np.take(table, lo, axis=i)
            b = np.take(table, hi, axis=i)
            viol = (a > b) if uni.exact else (a > b + FLOAT_TOL)
            if np.any(viol):
                rest = tuple(int(j) for j in np.argwhere(viol)[0])
                lower = rest[:i] + (lo,) + rest[i:]
                upper = rest[:i] + (hi,) + rest[i:]
                return False, (uni.assignment(lower), uni.assignment(upper))
    return True, None


def verify_no_risk_lemma(event: EventSpec, variables, limit: int = RISK_LIMIT) -> CheckResult:
    """An increasing event testifies its own risk, equal to ``Pr(E)``."""
    if event.monotonicity != "increasing":
        raise PreconditionError(f"event {event.id} is not declared monotone increasing")
    ok, pair = check_monotone(event, variables, "increasing", limit)
    if not ok:
        return CheckResult("no-risk", False, {}, "monotonicity declaration is false", pair)
    report = testified_risk(event, event, variables, limit)
    uni = make_universe(variables, (event,), limit)
    pr = probability(truth_table(event, uni), uni)
    passed = _eq(report.risk, pr, report.exact)
    return CheckResult(
        "no-risk",
        passed,
        {"risk": report.risk, "pr_event": pr, "report": report},
        None if passed else "risk exceeds Pr(E)",
        None if passed else report.witness,
        report.exact,
    )


def sum_threshold_event(event_id, vbl, p_black, threshold, *, name: str = "") -> EventSpec:
    """``number of blacks > threshold`` over independent binary variables."""
    thr = Fraction(threshold)
    return count_event(
        event_id, vbl, p_black, lambda c, _t=thr: c > _t, monotonicity="decreasing", name=name or f"blacks>{thr}"
    )


def verify_sum_threshold(e_x: EventSpec, e_half: EventSpec, variables, limit: int = RISK_LIMIT) -> CheckResult:
    """Risk of ``X > x`` testified by ``X > x/2`` is at most ``Pr(X > x/2)``."""
    report = testified_risk(e_x, e_half, variables, limit)
    uni = make_universe(variables, (e_half,), limit)
    pr_half = probability(truth_table(e_half, uni), uni)
    passed = _leq(report.risk, pr_half, report.exact)
    return CheckResult(
        "sum-threshold",
        passed,
        {"risk": report.risk, "pr_half": pr_half, "report": report},
        None if passed else "risk exceeds Pr(E_x/2)",
        None if passed else report.witness,
        report.exact,
    )


def union_event(event_id, first: EventSpec, second: EventSpec, name: str = "") -> EventSpec:
    vbl = tuple(_sorted_ids(set(first.vbl) | set(second.vbl)))
    pos1 = tuple(vbl.index(x) for x in first.vbl)
    pos2 = tuple(vbl.index(x) for x in second.vbl)

    def predicate(values, _p1=first.predicate, _p2=second.predicate):
        return bool(_p1(tuple(values[i] for i in pos1)) or _p2(tuple(values[i] for i in pos2)))

    return EventSpec(event_id, vbl, predicate, first.host, None, "none", None, name or f"({first.id})|({second.id})")


def verify_union_risk(e1, a1, e2, a2, variables, limit: int = UNION_LIMIT) -> CheckResult:
    """Risk of ``E1 ∪ E2`` testified by ``assoc1 ∪ assoc2`` is at most the sum of risks."""
    make_universe(variables, (e1, a1, e2, a2), limit)
    r1 = testified_risk(e1, a1, variables, limit)
    r2 = testified_risk(e2, a2, variables, limit)
    ru = testified_risk(union_event("E1|E2", e1, e2), union_event("A1|A2", a1, a2), variables, limit)
    exact = r1.exact and r2.exact and ru.exact
    passed = _leq(ru.risk, r1.risk + r2.risk, exact)
    return CheckResult(
        "union",
        passed,
        {"risk_union": ru.risk, "risk_1": r1.risk, "risk_2": r2.risk},
        None if passed else "union risk exceeds the sum",
        None if passed else ru.witness,
        exact,
    )


# ---------------------------------------------------------------------------
# danger and fragility


@dataclass
class DangerResult:
    q: Any
    probability: Any
    event: EventSpec
    lemma: CheckResult | None
    exact: bool

    def to_json(self) -> dict:
        return {
            "q": num_json(self.q),
            "probability": num_json(self.probability),
            "lemma": None if self.lemma is None else self.lemma.to_json(),
            "exact": self.exact,
        }


def _table_event(event_id, uni: Universe, truth: np.ndarray, name: str) -> EventSpec:
    lookup = np.array(truth, dtype=bool)

    def predicate(values, _t=lookup):
        return bool(_t[tuple(0 if v == BLACK else 1 for v in values)])

    return EventSpec(event_id, uni.ids, predicate, 0, None, "none", None, name)


def danger_table(event: EventSpec, q, uni: Universe) -> np.ndarray:
    table = conditional_table(event, uni)
    reach = _closure(table, [_ANY] * uni.n)
    if uni.backend == "fraction":
        return np.vectorize(lambda c: c > Fraction(q), otypes=[bool])(reach)
    return reach > float(q)


def danger_prob(event: EventSpec, q, variables, limit: int = DANGER_LIMIT, check_lemma: bool = True) -> DangerResult:
    """Probability that some retraction of the sample pushes ``Pr(E | ψ)`` above ``q``."""
    uni = make_universe(variables, (event,), limit)
    truth = danger_table(event, q, uni)
    danger = _table_event(f"danger[{event.id}]", uni, truth, f"danger(q={q})")
    prob = probability(truth, uni)
    lemma = None
    if check_lemma and q < 1:
        report = testified_risk(event, danger, variables, limit)
        bound = max(Fraction(q) if uni.exact else float(q), prob)
        ok = _leq(report.risk, bound, uni.exact)
        lemma = CheckResult(
            "danger-lemma",
            ok,
            {"risk": report.risk, "bound": bound},
            None if ok else "risk exceeds max(q, Pr(danger))",
            None if ok else report.witness,
            uni.exact,
        )
    return DangerResult(q, prob, danger, lemma, uni.exact)


def danger_prob_bruteforce(event: EventSpec, q, variables, limit: int = 8):
    """Double enumeration: full samples times their retractions, conditionals memoized."""
    index = _var_index(variables)
    ids = _sorted_ids(event.vbl)
    if len(ids) > limit:
        raise EnumerationLimitError(len(ids), limit)
    inst = LLLInstance([index[x] for x in ids], [])
    memo: dict = {}

    def cond(values):
        if values not in memo:
            memo[values] = _enumerate_conditional(inst, event, values, [i for i, v in enumerate(values) if v is None])
        return memo[values]

    total = 0
    for phi in _full_assignments(ids):
        weight = 1
        for x in ids:
            weight = weight * index[x].prob(phi[x])
        for keep in itertools.product((True, False), repeat=len(ids)):
            psi = PartialAssignment({x: phi[x] for x, k in zip(ids, keep) if k})
            if cond(psi.values_for(event.vbl)) > q:
                total = total + weight
                break
    return total


def fragility_value(event: EventSpec, variables, limit: int = FRAGILITY_LIMIT):
    """``f(E)``: probability that some coordinate-wise mix of two samples triggers ``E``."""
    uni = make_universe(variables, (event,), limit)
    exists = np.array(truth_table(event, uni), dtype=bool)
    for i in range(uni.n):
        either = np.take(exists, 0, axis=i) | np.take(exists, 1, axis=i)
        exists = np.concatenate([exists, np.expand_dims(either, i)], axis=i)
    dtype = object if uni.backend == "fraction" else float
    w = np.ones((), dtype=dtype)
    for i in range(uni.n):
        q = uni.q(i)
        # both samples black, both white, or they differ
        w = np.multiply.outer(w, np.array([q * q, (1 - q) * (1 - q), 2 * q * (1 - q)], dtype=dtype))
    return uni.num(np.sum(np.where(exists, w, 0 * w))), uni


def fragility_bruteforce(event: EventSpec, variables, limit: int = 6):
    index = _var_index(variables)
    ids = list(event.vbl)
    if len(ids) > limit:
        raise EnumerationLimitError(len(ids), limit)
    total = 0
    for phi1 in _full_assignments(ids):
        for phi2 in _full_assignments(ids):
            weight = 1
            for x in ids:
                weight = weight * index[x].prob(phi1[x]) * index[x].prob(phi2[x])
            for mix in itertools.product((0, 1), repeat=len(ids)):
                values = tuple((phi1, phi2)[a][x] for a, x in zip(mix, ids))
                if event.predicate(values):
                    total = total + weight
                    break
    return total


@dataclass
class FragilityResult:
    fragility: Any
    checks: list
    exact: bool

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> dict:
        return {
            "fragility": num_json(self.fragility),
            "checks": [c.to_json() for c in self.checks],
            "exact": self.exact,
        }


def fragility(
    event: EventSpec, variables, qs: Iterable = tuple(Fraction(1, 2**k) for k in range(1, 7)), limit: int = FRAGILITY_LIMIT
) -> FragilityResult:
    """``f(E)`` plus, for each ``q``, the checks ``Pr(danger) ≤ f/q`` and ``risk ≤ max(f/q, q)``."""
    f, uni = fragility_value(event, variables, limit)
    checks = []
    for q in qs:
        q = Fraction(q) if uni.exact else float(q)
        dr = danger_prob(event, q, variables, limit, check_lemma=False)
        bound = max(f / q, q)
        if q < 1:
            risk = testified_risk(event, dr.event, variables, limit).risk
        else:
            risk = 0
        ok_danger = _leq(dr.probability, f / q, uni.exact)
        ok_risk = _leq(risk, bound, uni.exact)
        checks.append(
            CheckResult(
                f"fragility-risk(q={q})",
                ok_danger and ok_risk,
                {"q": q, "pr_danger": dr.probability, "risk": risk, "bound": bound},
                None if ok_danger and ok_risk else ("danger above f/q" if not ok_danger else "risk above bound"),
                None,
                uni.exact,
            )
        )
    return FragilityResult(f, checks, uni.exact)


# ---------------------------------------------------------------------------
# concentration and auxiliary-LLL checks


def nonedge_pairs(graph) -> np.ndarray:
    """Array of shape ``(m̄, 2)`` listing the non-adjacent vertex pairs."""
    n = graph.n
    adj = np.zeros((n, n), dtype=bool)
    for u, v in graph.edges():
        adj[u, v] = adj[v, u] = True
    iu, ju = np.triu_indices(n, k=1)
    keep = ~adj[iu, ju]
    return np.stack([iu[keep], ju[keep]], axis=1)


def verify_nonedge_tail(graph, p: float, trials: int = 10**4, rng=None, chunk: int = 4096) -> CheckResult:
    """Monte Carlo check of ``Pr(f ≤ p²m̄/2) ≤ exp(-p·m̄ / (5|X|))``.

    ``graph`` lives on the vertex set ``X``; ``f`` counts the non-edges that survive
    when each vertex is kept independently with probability ``p``.
    """
    size = graph.n
    if p * size < 8:
        raise PreconditionError(f"the tail bound assumes p|X| >= 8 (got p|X| = {p * size:g})")
    if trials < 10**4:
        raise PreconditionError("at least 10^4 trials are required")
    rng = as_rng(rng)
    pairs = nonedge_pairs(graph)
    m_bar = len(pairs)
    cutoff = p * p * m_bar / 2
    hits = 0
    done = 0
    while done < trials:
        batch = min(chunk, trials - done)
        sample = rng.random((batch, size)) < p
        if m_bar:
            f = np.count_nonzero(sample[:, pairs[:, 0]] & sample[:, pairs[:, 1]], axis=1)
        else:
            f = np.zeros(batch)
        hits += int(np.count_nonzero(f <= cutoff))
        done += batch
    est = hits / trials
    se = math.sqrt(max(est * (1 - est), 0.0) / trials)
    bound = math.exp(-p * m_bar / (5 * size))
    passed = est <= bound + 3 * se
    return CheckResult(
        "nonedge-tail",
        passed,
        {"empirical": est, "standard_error": se, "bound": bound, "m_bar": m_bar, "trials": trials},
        None if passed else "empirical tail above bound + 3 standard errors",
        None,
        False,
    )


def verify_markov_claim(collection, limit: int = RISK_LIMIT) -> CheckResult:
    """Every auxiliary event of a collection LLL has probability at most ``ref / threshold``.

    For uncapped events the threshold is ``d²·ref``, so the bound is ``1/d²``;
    capped events (threshold 1) get the plain Markov bound ``ref``.
    """
    inst = collection.instance
    d = collection.d
    rows = []
    ok = True
    exact = True
    for aux in inst.events:
        if len(aux.vbl) > limit:
            raise EnumerationLimitError(len(aux.vbl), limit)
        values = (None,) * len(aux.vbl)
        prob = _enumerate_conditional(inst, aux, values, list(range(len(aux.vbl))))
        ref = collection.refs[aux.id]
        thr = collection.thresholds[aux.id]
        exact = exact and not isinstance(prob, float) and not isinstance(ref, float)
        if ref == 0:
            bound = 0
        else:
            bound = ref / thr
        good = _leq(prob, bound, exact)
        if not collection.capped[aux.id]:
            good = good and _leq(prob, Fraction(1, d * d) if exact else 1 / (d * d), exact)
        ok = ok and good
        rows.append({"event": aux.id, "probability": prob, "bound": bound, "capped": collection.capped[aux.id], "pass": good})
    return CheckResult(
        "markov",
        ok,
        {"events": len(rows), "d": d},
        None if ok else "an auxiliary event exceeds its Markov bound",
        [r for r in rows if not r["pass"]],
        exact,
    )
