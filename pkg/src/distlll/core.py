"""Variables, events, partial assignments and the dependency structure of an LLL instance.

Probabilities are plain Python numbers: floats by default, ``Fraction`` when the
distributions are given as fractions (every routine here is generic over the
numeric type, so exact rational arithmetic falls out for free).
"""

from __future__ import annotations

import itertools
import functools
import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    EnumerationLimitError,
    LocalityError,
    MergeConflictError,
    PreconditionError,
)
from .graph import Graph

BLACK = "black"
WHITE = "white"
BINARY_DOMAIN = (BLACK, WHITE)
MONOTONICITY = ("increasing", "decreasing", "none")
ENUMERATION_LIMIT = 24


def as_rng(seed_or_rng=None) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


# ---------------------------------------------------------------------------
# variables


@dataclass(frozen=True)
class VariableSpec:
    id: int
    domain: tuple
    distribution: tuple
    host: int = 0
    _cumulative: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        domain = tuple(self.domain)
        dist = tuple(self.distribution)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "distribution", dist)
        if not domain or len(domain) != len(dist):
            raise PreconditionError(f"variable {self.id}: domain and distribution lengths differ")
        if len(set(domain)) != len(domain):
            raise PreconditionError(f"variable {self.id}: repeated domain value")
        if any(q < 0 for q in dist) or abs(float(sum(dist)) - 1.0) > 1e-12:
            raise PreconditionError(f"variable {self.id}: distribution must be non-negative and sum to 1")
        cum = list(itertools.accumulate(float(q) for q in dist))
        object.__setattr__(self, "_cumulative", tuple(cum))

    def sample(self, rng: np.random.Generator):
        idx = bisect_right(self._cumulative, rng.random())
        idx = min(idx, len(self.domain) - 1)
        # never return a zero-probability value because of float rounding
        while self.distribution[idx] == 0:
            idx -= 1
        return self.domain[idx]

    def prob(self, value):
        return self.distribution[self.domain.index(value)]

    def mode(self):
        best = max(range(len(self.domain)), key=lambda i: (self.distribution[i], -i))
        return self.domain[best]

    @property
    def p_black(self):
        return self.prob(BLACK)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "domain": list(self.domain),
            "distribution": [_num_json(q) for q in self.distribution],
            "host": self.host,
        }


def binary_variable(var_id: int, p_black=Fraction(1, 2), host: int = 0) -> VariableSpec:
    return VariableSpec(var_id, BINARY_DOMAIN, (p_black, 1 - p_black), host)


# ---------------------------------------------------------------------------
# events


@dataclass(frozen=True, eq=False)
class EventSpec:
    """A bad event over the ordered variables ``vbl``.

    ``predicate`` receives the tuple of values in ``vbl`` order.  ``conditional``
    is an optional exact shortcut: it receives the same tuple with ``None`` for
    unset variables and returns ``Pr(E | that partial assignment)``.
    """

    id: int
    vbl: tuple
    predicate: Callable[[tuple], bool]
    host: int = 0
    assoc: "EventSpec | None" = None
    monotonicity: str = "none"
    conditional: Callable[[tuple], Any] | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "vbl", tuple(self.vbl))
        if len(set(self.vbl)) != len(self.vbl):
            raise PreconditionError(f"event {self.id}: repeated variable in vbl")
        if self.monotonicity not in MONOTONICITY:
            raise PreconditionError(f"event {self.id}: unknown monotonicity {self.monotonicity!r}")

    def holds(self, values: Sequence) -> bool:
        return bool(self.predicate(tuple(values)))

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"EventSpec(id={self.id}{label}, |vbl|={len(self.vbl)}, host={self.host})"


def count_pmf(probs: Sequence) -> list:
    """Distribution of the number of successes among independent trials."""
    probs = tuple(probs)
    if probs and all(q is probs[0] for q in probs):
        return list(_binomial_pmf(probs[0], len(probs)))
    return list(_count_pmf(probs))


@functools.lru_cache(maxsize=4096)
def _binomial_pmf(q, n: int) -> tuple:
    return _count_pmf((q,) * n)


@functools.lru_cache(maxsize=4096)
def _count_pmf(probs: tuple) -> tuple:
    if all(isinstance(q, float) for q in probs):
        pmf = np.zeros(len(probs) + 1)
        pmf[0] = 1.0
        for i, q in enumerate(probs, start=1):
            pmf[1:i + 1] = pmf[1:i + 1] * (1.0 - q) + pmf[0:i] * q
            pmf[0] *= 1.0 - q
        return tuple(pmf.tolist())
    pmf = [Fraction(1)]
    for q in probs:
        nxt = [0] * (len(pmf) + 1)
        for c, w in enumerate(pmf):
            nxt[c] += w * (1 - q)
            nxt[c + 1] += w * q
        pmf = nxt
    return tuple(pmf)


def count_event(
    event_id: int,
    vbl: Sequence[int],
    p_black: Sequence,
    bad: Callable[[int], bool],
    *,
    host: int = 0,
    monotonicity: str = "none",
    assoc: EventSpec | None = None,
    name: str = "",
) -> EventSpec:
    """Event determined by the number of black variables in ``vbl``.

    ``bad(c)`` says whether exactly ``c`` blacks make the event hold.  The exact
    conditional shortcut convolves the unset variables' black probabilities, so it
    stays cheap for neighborhoods far beyond the enumeration limit.
    """
    p_black = tuple(p_black)
    if len(p_black) != len(vbl):
        raise PreconditionError("one black probability per variable is required")

    def predicate(values, _bad=bad):
        return _bad(sum(1 for x in values if x == BLACK))

    def _tail(fixed, free, _bad=bad):
        if not free:
            return 1 if _bad(fixed) else 0
        pmf = count_pmf(free)
        return sum((w for c, w in enumerate(pmf) if _bad(fixed + c)), 0 * pmf[0])

    if p_black and all(q == p_black[0] for q in p_black):
        # identical coins: the answer depends only on (#black, #unset)
        memo: dict = {}
        shared = (p_black[0],) * len(p_black)

        def conditional(values, _memo=memo):
            fixed = sum(1 for x in values if x == BLACK)
            unset = sum(1 for x in values if x is None)
            key = (fixed, unset)
            if key not in _memo:
                _memo[key] = _tail(fixed, shared[:unset])
            return _memo[key]
    else:
        def conditional(values, _p=p_black):
            fixed = 0
            free = []
            for x, q in zip(values, _p):
                if x is None:
                    free.append(q)
                elif x == BLACK:
                    fixed += 1
            return _tail(fixed, free)

    return EventSpec(event_id, tuple(vbl), predicate, host, assoc, monotonicity, conditional, name)


# ---------------------------------------------------------------------------
# partial assignments


class PartialAssignment:
    """Map from variable id to a value; missing ids are unset (⊥)."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping | Iterable[tuple] | None = None):
        items = dict(values or {})
        self._values = {k: v for k, v in items.items() if v is not None}

    def get(self, var):
        return self._values.get(var)

    __getitem__ = get

    def is_set(self, var) -> bool:
        return var in self._values

    __contains__ = is_set

    def set(self, var, value) -> None:
        if value is None:
            self._values.pop(var, None)
        else:
            self._values[var] = value

    def retract(self, var) -> None:
        self._values.pop(var, None)

    def copy(self) -> "PartialAssignment":
        new = PartialAssignment()
        new._values = dict(self._values)
        return new

    def items(self):
        return self._values.items()

    def assigned(self) -> dict:
        return dict(self._values)

    def values_for(self, vbl: Sequence) -> tuple:
        get = self._values.get
        return tuple(get(x) for x in vbl)

    def restrict(self, variables: Iterable) -> "PartialAssignment":
        return PartialAssignment({x: self._values[x] for x in variables if x in self._values})

    def unset_among(self, variables: Iterable) -> list:
        return [x for x in variables if x not in self._values]

    def is_retraction_of(self, other: "PartialAssignment") -> bool:
        return all(other.get(x) == v for x, v in self._values.items())

    def __len__(self) -> int:
        return len(self._values)

    def __eq__(self, other) -> bool:
        return isinstance(other, PartialAssignment) and self._values == other._values

    def __hash__(self) -> int:
        return hash(frozenset(self._values.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"{k}={v}" for k, v in sorted(self._values.items(), key=lambda kv: repr(kv[0])))
        return f"PartialAssignment({body})"

    def to_json(self) -> dict:
        return {str(k): v for k, v in sorted(self._values.items(), key=lambda kv: repr(kv[0]))}


def merge(phi1: PartialAssignment, phi2: PartialAssignment) -> PartialAssignment:
    """Pointwise union; the two supports must be disjoint."""
    clash = [x for x, _ in phi2.items() if phi1.is_set(x)]
    if clash:
        raise MergeConflictError(clash)
    out = phi2.copy()
    for x, v in phi1.items():
        out.set(x, v)
    return out


def evaluate(event: EventSpec, phi: PartialAssignment) -> bool:
    values = phi.values_for(event.vbl)
    missing = [x for x, v in zip(event.vbl, values) if v is None]
    if missing:
        raise PreconditionError(f"event {event.id}: variables {missing} are unset")
    return bool(event.predicate(values))


class Estimate(float):
    """A Monte Carlo probability estimate; carries its trial count."""

    estimated = True

    def __new__(cls, value: float, trials: int):
        obj = super().__new__(cls, value)
        obj.trials = trials
        return obj


def is_estimate(x) -> bool:
    return isinstance(x, Estimate)


# ---------------------------------------------------------------------------
# dependency graph


class DependencyGraph:
    """Event adjacency: two events are adjacent iff they share a variable."""

    def __init__(self, events: Sequence[EventSpec]):
        self.event_ids = [e.id for e in events]
        self._vbl = {e.id: e.vbl for e in events}
        var_events: dict[Any, list] = {}
        for e in events:
            for x in e.vbl:
                var_events.setdefault(x, []).append(e.id)
        self.var_events = {x: tuple(ids) for x, ids in var_events.items()}
        self._nbrs: dict[Any, frozenset] = {}
        self._max_degree: int | None = None

    def vbl(self, eid) -> tuple:
        return self._vbl[eid]

    def neighbors(self, eid) -> frozenset:
        nb = self._nbrs.get(eid)
        if nb is None:
            acc: set = set()
            for x in self._vbl[eid]:
                acc.update(self.var_events[x])
            acc.discard(eid)
            nb = frozenset(acc)
            self._nbrs[eid] = nb
        return nb

    def closed_neighbors(self, eid) -> frozenset:
        return self.neighbors(eid) | {eid}

    @property
    def adjacency(self) -> dict:
        return {e: self.neighbors(e) for e in self.event_ids}

    def edges(self) -> set[frozenset]:
        return {frozenset((a, b)) for a in self.event_ids for b in self.neighbors(a)}

    @property
    def d_E(self) -> int:
        return max((len(v) for v in self._vbl.values()), default=0)

    @property
    def d_V(self) -> int:
        return max((len(v) for v in self.var_events.values()), default=0)

    @property
    def max_degree(self) -> int:
        if self._max_degree is None:
            work = sum(len(ids) ** 2 for ids in self.var_events.values())
            if work <= 2_000_000 or not self.event_ids:
                self._max_degree = max((len(self.neighbors(e)) for e in self.event_ids), default=0)
            else:
                self._max_degree = self._max_degree_sparse()
        return self._max_degree

    d = max_degree

    def _max_degree_sparse(self) -> int:
        from scipy import sparse

        ev_index = {e: i for i, e in enumerate(self.event_ids)}
        var_index = {x: j for j, x in enumerate(self.var_events)}
        rows, cols = [], []
        for e in self.event_ids:
            for x in self._vbl[e]:
                rows.append(ev_index[e])
                cols.append(var_index[x])
        inc = sparse.csr_matrix(
            (np.ones(len(rows), dtype=np.float32), (rows, cols)),
            shape=(len(self.event_ids), len(var_index)),
        )
        inc_t = inc.T.tocsr()
        best = 0
        for start in range(0, inc.shape[0], 256):
            block = inc[start:start + 256] @ inc_t
            best = max(best, int(block.getnnz(axis=1).max()) - 1)
        return best

    def components(self, subset: Iterable | None = None) -> list[list]:
        """Connected components, found by union-find over shared variables.

        Each component lists its events in the order they appear in the instance,
        and components are ordered by their first event.
        """
        pool = set(self.event_ids) if subset is None else set(subset)
        parent = {e: e for e in pool}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for ids in self.var_events.values():
            root = None
            for e in ids:
                if e not in pool:
                    continue
                r = find(e)
                if root is None:
                    root = r
                elif r != root:
                    parent[r] = root
        groups: dict = {}
        for e in self.event_ids:
            if e in pool:
                groups.setdefault(find(e), []).append(e)
        return list(groups.values())


def build_dependency_graph(inst: "LLLInstance") -> DependencyGraph:
    return inst.dependency


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True)
class InstanceParams:
    p: Any
    p_source: str
    d: int
    d_E: int
    d_V: int
    nu: int | None
    load: int
    n_events: int
    n_variables: int

    def to_json(self) -> dict:
        return {
            "p": _num_json(self.p) if self.p is not None else None,
            "p_source": self.p_source,
            "d": self.d,
            "d_E": self.d_E,
            "d_V": self.d_V,
            "nu": self.nu,
            "l": self.load,
            "n_events": self.n_events,
            "n_variables": self.n_variables,
        }


class LLLInstance:
    """Variables, events and an optional communication graph hosting both."""

    def __init__(
        self,
        variables: Iterable[VariableSpec],
        events: Iterable[EventSpec],
        comm_graph: Graph | None = None,
        name: str = "",
        p_bound=None,
    ):
        self.variables = tuple(variables)
        self.events = tuple(events)
        self.comm_graph = comm_graph
        self.name = name
        self.p_bound = p_bound
        self.var_index = {v.id: v for v in self.variables}
        self.event_index = {e.id: e for e in self.events}
        if len(self.var_index) != len(self.variables):
            raise PreconditionError("variable ids must be unique")
        if len(self.event_index) != len(self.events):
            raise PreconditionError("event ids must be unique")
        for e in self.events:
            for x in e.vbl:
                if x not in self.var_index:
                    raise PreconditionError(f"event {e.id} uses unknown variable {x}")
        self._dependency: DependencyGraph | None = None
        self._params: InstanceParams | None = None

    @property
    def dependency(self) -> DependencyGraph:
        if self._dependency is None:
            self._dependency = DependencyGraph(self.events)
        return self._dependency

    def conditional_prob(self, event, psi, mode="exact", **kw):
        return conditional_prob(self, event, psi, mode, **kw)

    def params(self) -> InstanceParams:
        if self._params is None:
            dep = self.dependency
            if self.p_bound is not None:
                p, source = self.p_bound, "declared"
            else:
                p, source = self._exact_p()
            try:
                nu = compute_locality(self)
            except LocalityError:
                nu = None
            self._params = InstanceParams(
                p=p,
                p_source=source,
                d=dep.max_degree,
                d_E=dep.d_E,
                d_V=dep.d_V,
                nu=nu,
                load=max_load(self),
                n_events=len(self.events),
                n_variables=len(self.variables),
            )
        return self._params

    def _exact_p(self):
        empty = PartialAssignment()
        best = 0
        for e in self.events:
            if not exactly_computable(self, e):
                return None, "unknown"
            best = max(best, conditional_prob(self, e, empty))
        return best, "exact"

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "variables": [v.to_json() for v in self.variables],
            "events": [
                {
                    "id": e.id,
                    "name": e.name,
                    "vbl": list(e.vbl),
                    "host": e.host,
                    "assoc": None if e.assoc is None else e.assoc.id,
                    "monotonicity": e.monotonicity,
                }
                for e in self.events
            ],
            "parameters": self.params().to_json(),
        }


def max_load(inst: LLLInstance) -> int:
    counts: dict[int, int] = {}
    for item in itertools.chain(inst.variables, inst.events):
        counts[item.host] = counts.get(item.host, 0) + 1
    return max(counts.values(), default=0)


def compute_locality(inst: LLLInstance) -> int:
    """Largest host distance between an event and one of its variables."""
    g = inst.comm_graph
    targets: dict[int, set[int]] = {}
    for e in inst.events:
        targets.setdefault(e.host, set()).update(inst.var_index[x].host for x in e.vbl)
    nu = 0
    for src, want in targets.items():
        want = set(want)
        if want <= {src}:
            continue
        if g is None:
            raise LocalityError("events and variables on different hosts need a communication graph")
        dist = {src: 0}
        queue = deque([src])
        remaining = want - {src}
        while queue and remaining:
            u = queue.popleft()
            for w in g.neighbors(u):
                if w not in dist:
                    dist[w] = dist[u] + 1
                    remaining.discard(w)
                    queue.append(w)
        if remaining:
            raise LocalityError(f"hosts {sorted(remaining)} unreachable from event host {src}")
        nu = max(nu, max(dist[w] for w in want))
    return nu


# ---------------------------------------------------------------------------
# sampling and conditional probabilities


def sample_all(inst: LLLInstance, variables: Iterable | None = None, rng=None) -> PartialAssignment:
    rng = as_rng(rng)
    ids = [v.id for v in inst.variables] if variables is None else list(variables)
    out = PartialAssignment()
    for x in ids:
        out.set(x, inst.var_index[x].sample(rng))
    return out


def enumeration_bits(inst: "LLLInstance", variables: Iterable) -> float:
    """``log2`` of the number of joint values of ``variables`` (one bit per binary variable)."""
    return sum(math.log2(len(inst.var_index[x].domain)) for x in variables)


def exactly_computable(inst: "LLLInstance", event: EventSpec, bits: float = 16) -> bool:
    """Whether ``Pr(E)`` is cheap to compute exactly: a conditional hook or a small enumeration."""
    return event.conditional is not None or enumeration_bits(inst, event.vbl) <= bits


def conditional_prob(
    inst: LLLInstance,
    event: EventSpec,
    psi: PartialAssignment,
    mode: str = "exact",
    *,
    trials: int = 10_000,
    rng=None,
    limit: int = ENUMERATION_LIMIT,
):
    """``Pr(E | psi)`` over the variables ``psi`` leaves unset.

    ``mode`` is ``"exact"`` (conditional shortcut or enumeration), ``"monte-carlo"``
    (an :class:`Estimate`), or ``"auto"`` (exact when feasible, else Monte Carlo).
    """
    values = psi.values_for(event.vbl)
    unset = [i for i, v in enumerate(values) if v is None]
    if mode not in ("exact", "monte-carlo", "auto"):
        raise PreconditionError(f"unknown mode {mode!r}")
    if mode != "monte-carlo":
        if event.conditional is not None:
            return event.conditional(values)
        if enumeration_bits(inst, (event.vbl[i] for i in unset)) <= limit:
            return _enumerate_conditional(inst, event, values, unset)
        if mode == "exact":
            raise EnumerationLimitError(len(unset), limit)
    return _monte_carlo_conditional(inst, event, values, unset, trials, as_rng(rng))


def _enumerate_conditional(inst, event, values, unset):
    if not unset:
        return 1 if event.predicate(values) else 0
    specs = [inst.var_index[event.vbl[i]] for i in unset]
    vals = list(values)
    total = 0
    for combo in itertools.product(*(range(len(s.domain)) for s in specs)):
        weight = 1
        for pos, s, k in zip(unset, specs, combo):
            weight = weight * s.distribution[k]
            vals[pos] = s.domain[k]
        if weight and event.predicate(tuple(vals)):
            total = total + weight
    return total


def _monte_carlo_conditional(inst, event, values, unset, trials, rng):
    specs = [inst.var_index[event.vbl[i]] for i in unset]
    vals = list(values)
    hits = 0
    for _ in range(trials):
        for pos, s in zip(unset, specs):
            vals[pos] = s.sample(rng)
        hits += bool(event.predicate(tuple(vals)))
    return Estimate(hits / trials, trials)


def condition_event(inst: LLLInstance, event: EventSpec, psi: PartialAssignment, new_id=None) -> EventSpec:
    """The event restricted to the variables ``psi`` leaves unset."""
    base = psi.values_for(event.vbl)
    free_pos = [i for i, v in enumerate(base) if v is None]
    free_vbl = tuple(event.vbl[i] for i in free_pos)
    pred = event.predicate
    cond = event.conditional

    def fill(values, _base=base, _pos=free_pos):
        vals = list(_base)
        for i, v in zip(_pos, values):
            vals[i] = v
        return tuple(vals)

    def predicate(values):
        return pred(fill(values))

    conditional = None
    if cond is not None:
        def conditional(values):
            return cond(fill(values))

    return EventSpec(
        event.id if new_id is None else new_id,
        free_vbl,
        predicate,
        event.host,
        None,
        event.monotonicity,
        conditional,
        event.name,
    )


def _num_json(x):
    if isinstance(x, Fraction):
        return x.numerator if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(float(x)) else str(float(x))
    return x
