"""Graph problems phrased as LLL instances.

* sinkless orientation (plain, or split into two edge halves per node),
* degree-bounded subgraph sampling,
* degree-bounded sparsity-preserving sampling (DSS),
* the splitting problems built from sampling-bound events.

Every binary instance samples node ``w`` as black (into the set) or white.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable

import networkx as nx

from ..core import (
    BLACK,
    WHITE,
    EventSpec,
    LLLInstance,
    PartialAssignment,
    VariableSpec,
    binary_variable,
    count_event,
)
from ..errors import InfeasibleParametersError, PreconditionError
from ..graph import Graph, edges_within
from ..shatter import (
    BinaryLowRiskInstance,
    TwoSetInstance,
    auto_post_solver,
    solve_binary_lowrisk,
    two_set_instance,
)


def _self_assoc(event: EventSpec) -> EventSpec:
    object.__setattr__(event, "assoc", event)
    return event


def _union(event_id, first: EventSpec, second: EventSpec, *, host, name="") -> EventSpec:
    """Union of two events over the same variable tuple."""
    assert first.vbl == second.vbl

    def predicate(values, _a=first.predicate, _b=second.predicate):
        return bool(_a(values)) or bool(_b(values))

    return EventSpec(event_id, first.vbl, predicate, host, None, "none", None, name)


# ---------------------------------------------------------------------------
# sinkless orientation


def euler_split(g: Graph) -> dict[int, int]:
    """Label every edge 1 or 2 so each node has at most two more edges of one label.

    Odd-degree nodes are joined to an auxiliary vertex; labels then alternate along
    an Euler circuit of every component, so consecutive edges through a node differ.
    """
    h = nx.MultiGraph()
    h.add_nodes_from(range(g.n))
    index = {}
    for i, (u, v) in enumerate(g.edges()):
        h.add_edge(u, v, key=i)
        index[i] = (u, v)
    dummy = g.n
    for v in range(g.n):
        if g.degree(v) % 2:
            h.add_edge(v, dummy, key=-1 - v)
    label: dict[int, int] = {}
    for comp in nx.connected_components(h):
        if len(comp) == 1:
            continue
        sub = h.subgraph(comp)
        start = dummy if dummy in comp else min(comp)
        for pos, (_, _, key) in enumerate(nx.eulerian_circuit(sub, source=start, keys=True)):
            if key >= 0:
                label[key] = 1 + pos % 2
    return label


def sinkless_orientation_lll(g: Graph, split: dict | str | None = None) -> LLLInstance | TwoSetInstance:
    """One fair variable per edge (its head); node ``v`` fails iff every incident edge points at it.

    ``split`` is ``None`` for the plain instance, ``"euler"`` for a balanced edge
    split, or an explicit ``{edge index: 1 | 2}`` labelling; with a split the event
    of ``v`` becomes "all label-1 edges point at v" ∩ "all label-2 edges point at v".
    """
    edges = g.edges()
    for v in range(g.n):
        if g.degree(v) == 0:
            raise InfeasibleParametersError(f"node {v} has no edges; its event always holds")
    if any(g.degree(v) < 3 for v in range(g.n)):
        warnings.warn("minimum degree below 3: the LLL criterion is unlikely to hold", stacklevel=2)
    half = Fraction(1, 2)
    variables = [VariableSpec(i, (u, v), (half, half), host=u) for i, (u, v) in enumerate(edges)]
    incident: dict[int, list[int]] = {v: [] for v in range(g.n)}
    for i, (u, v) in enumerate(edges):
        incident[u].append(i)
        incident[v].append(i)

    def sink_event(eid, v, vbl, name):
        def predicate(values, _v=v):
            return all(x == _v for x in values)

        def conditional(values, _v=v):
            out = Fraction(1)
            for x in values:
                if x is None:
                    out *= half
                elif x != _v:
                    return Fraction(0)
            return out

        return EventSpec(eid, tuple(vbl), predicate, v, None, "none", conditional, name)

    if split is None:
        events = [sink_event(v, v, incident[v], f"sink[{v}]") for v in range(g.n)]
        return LLLInstance(variables, events, g, "sinkless-orientation")
    labels = euler_split(g) if split == "euler" else dict(split)
    if set(labels) != set(range(len(edges))) or not set(labels.values()) <= {1, 2}:
        raise PreconditionError("split must label every edge index with 1 or 2")
    V1 = {i for i, lab in labels.items() if lab == 1}
    V2 = {i for i, lab in labels.items() if lab == 2}
    parts = []
    for v in range(g.n):
        first = [i for i in incident[v] if i in V1]
        second = [i for i in incident[v] if i in V2]
        parts.append((v, sink_event(v, v, first, f"sink1[{v}]"), sink_event(v, v, second, f"sink2[{v}]"), v))
    return two_set_instance(variables, parts, V1, V2, g, "sinkless-orientation/two-set")


def orientation_from_assignment(g: Graph, phi: PartialAssignment) -> list[tuple[int, int]]:
    """Directed edges ``(tail, head)`` read off an edge-head assignment."""
    out = []
    for i, (u, v) in enumerate(g.edges()):
        head = phi.get(i)
        out.append((v, u) if head == u else (u, v))
    return out


# ---------------------------------------------------------------------------
# degree-bounded subgraph


def degree_bounded_lll(g: Graph, k: int) -> BinaryLowRiskInstance:
    """Sample each node with probability ``k/Δ``; every node wants ``[k/3, 4k]`` sampled neighbors.

    Event ``2v`` (fewer than ``k/3``) is increasing and testifies itself; event
    ``2v+1`` (more than ``4k``) is decreasing and is testified by "more than ``2k``".
    """
    delta = g.max_degree
    if delta == 0:
        raise PreconditionError("graph has no edges")
    if not 1 <= k:
        raise PreconditionError("k must be positive")
    if 6 * k > delta:
        warnings.warn(f"k = {k} exceeds Δ/6 = {delta / 6:g}; outside the analysed regime", stacklevel=2)
    q = Fraction(min(k, delta), delta)
    variables = [binary_variable(w, q, host=w) for w in range(g.n)]
    events = []
    for v in range(g.n):
        nbrs = g.neighbors(v)
        probs = [q] * len(nbrs)
        low = count_event(
            2 * v, nbrs, probs, lambda c, _k=k: 3 * c < _k, host=v, monotonicity="increasing", name=f"min[{v}]"
        )
        events.append(_self_assoc(low))
        flag = count_event(2 * v + 1, nbrs, probs, lambda c, _k=k: c > 2 * _k, host=v, monotonicity="decreasing")
        events.append(
            count_event(
                2 * v + 1,
                nbrs,
                probs,
                lambda c, _k=k: c > 4 * _k,
                host=v,
                monotonicity="decreasing",
                assoc=flag,
                name=f"max[{v}]",
            )
        )
    return BinaryLowRiskInstance(LLLInstance(variables, events, g, f"degree-bounded(k={k})"))


def sampled_set(phi: PartialAssignment) -> set:
    return {x for x, val in phi.items() if val == BLACK}


# ---------------------------------------------------------------------------
# degree-bounded sparsity-preserving sampling


def dss_mu_formula(alpha: float, delta: int, n: int) -> float:
    """``(600/α)·ln Δ·ln ln n``."""
    return (600.0 / alpha) * math.log(delta) * math.log(max(math.log(n), 1.0 + 1e-9))


@dataclass
class DSSTrace:
    mu_formula: float
    mu: float
    p: Any
    degree_cap: float
    nonedge_threshold: float
    count_based: bool
    shatter: Any = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "mu": {"formula": self.mu_formula, "used": self.mu},
            "p": float(self.p),
            "degree_cap": self.degree_cap,
            "nonedge_threshold": self.nonedge_threshold,
            "count_based_conditionals": self.count_based,
            "shatter": self.shatter.to_json() if hasattr(self.shatter, "to_json") else self.shatter,
            **self.extra,
        }


def dss_instance(g: Graph, X: Iterable[int], Y: Iterable[int], alpha, mu) -> tuple[BinaryLowRiskInstance, DSSTrace]:
    """The union event "too many sampled neighbors, or too few sampled non-edges" per ``v ∈ X``."""
    X = sorted(set(X))
    Y = sorted(set(Y))
    y_set = set(Y)
    delta = g.max_degree
    if not 0 < alpha <= Fraction(1, 2):
        raise PreconditionError("alpha must lie in (0, 1/2]")
    need = alpha * delta * delta
    offenders = []
    for v in X:
        inside = [w for w in g.neighbors(v) if w in y_set]
        t = len(inside)
        if t * (t - 1) // 2 - edges_within(g, inside) < need:
            offenders.append(v)
    if offenders:
        raise PreconditionError(
            f"{len(offenders)} nodes have fewer than αΔ² = {float(need):g} non-edges into Y: {offenders[:10]}"
        )
    q = Fraction(mu).limit_denominator(10**6) / delta
    if q > 1:
        raise InfeasibleParametersError(f"sampling probability μ/Δ = {float(q):g} exceeds 1")
    cap = 4 * mu
    flag_cap = 2 * mu
    thr = Fraction(alpha) * Fraction(mu).limit_denominator(10**6) ** 2 / 2
    variables = [binary_variable(w, q, host=w) for w in Y]
    events = []
    count_based = True
    for v in X:
        nbrs = tuple(w for w in g.neighbors(v) if w in y_set)
        probs = [q] * len(nbrs)
        if edges_within(g, nbrs) == 0:
            def bad(c, _cap=cap, _thr=thr):
                return c > _cap or Fraction(c * (c - 1), 2) < _thr

            def flag(c, _cap=flag_cap, _thr=thr):
                return c > _cap or Fraction(c * (c - 1), 2) < _thr

            assoc = count_event(v, nbrs, probs, flag, host=v, name=f"dss-flag[{v}]")
            events.append(count_event(v, nbrs, probs, bad, host=v, assoc=assoc, name=f"dss[{v}]"))
            continue
        count_based = False
        pos = {w: j for j, w in enumerate(nbrs)}
        adj = [[pos[w] for w in g.neighbors(u) if w in pos] for u in nbrs]

        def make(limit, _adj=adj, _thr=thr):
            def predicate(values):
                chosen = [i for i, x in enumerate(values) if x == BLACK]
                c = len(chosen)
                if c > limit:
                    return True
                mask = set(chosen)
                inner = sum(1 for i in chosen for j in _adj[i] if j in mask) // 2
                return Fraction(c * (c - 1), 2) - inner < _thr

            return predicate

        assoc = EventSpec(v, nbrs, make(flag_cap), v, None, "none", None, f"dss-flag[{v}]")
        events.append(EventSpec(v, nbrs, make(cap), v, assoc, "none", None, f"dss[{v}]"))
    inst = BinaryLowRiskInstance(LLLInstance(variables, events, g, "dss"))
    trace = DSSTrace(
        mu_formula=dss_mu_formula(float(alpha), delta, g.n),
        mu=float(mu),
        p=q,
        degree_cap=float(cap),
        nonedge_threshold=float(thr),
        count_based=count_based,
    )
    return inst, trace


def dss_sample(g: Graph, X, Y, alpha, mu=None, rng=None, post_solver=None) -> tuple[set, DSSTrace]:
    """A set ``S ⊆ Y`` with few sampled neighbors but many sampled non-edges around every ``v ∈ X``.

    ``mu`` defaults to the closed-form value, which only makes sense for enormous
    ``n``; the trace records both the formula and the value used.
    """
    delta = g.max_degree
    mu_used = dss_mu_formula(float(alpha), delta, g.n) if mu is None else mu
    inst, trace = dss_instance(g, X, Y, alpha, mu_used)
    phi, shatter = solve_binary_lowrisk(inst, post_solver or auto_post_solver(), rng)
    trace.shatter = shatter
    return sampled_set(phi), trace


# ---------------------------------------------------------------------------
# splitting problems


SPLITTING_KINDS = ("vertex-subset", "sparsity", "density", "matching")


@dataclass
class SplittingSpec:
    kind: str
    q: Fraction
    thresholds: dict
    risk_shape: str
    hypothesis: dict

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "q": float(self.q),
            "thresholds": {k: float(v) for k, v in self.thresholds.items()},
            "risk_shape": self.risk_shape,
            "hypothesis": self.hypothesis,
        }


def _pair_counter(nbrs, pairs):
    """Predicate factory counting ``pairs`` (index pairs into ``nbrs``) inside one side."""
    def count(values, side):
        return sum(1 for i, j in pairs if values[i] == side and values[j] == side)

    return count


def build_splitting_lll(kind: str, g: Graph, **params) -> tuple[BinaryLowRiskInstance, SplittingSpec]:
    """Splitting problems over fair (or ``q``-biased) node coins; black = part 1.

    * ``vertex-subset`` (``T``, ``q``): every node keeps between ``q·d_T/2`` and
      ``3q·d_T`` sampled neighbors from ``T`` (strictly).
    * ``sparsity`` (``ell``): each part keeps at least ``ell·d/16`` neighborhood
      non-edges; red flag at ``ell·d/6``.
    * ``density`` (``ell``): the same with neighborhood edges.
    * ``matching`` (``ell``): each part keeps at least ``μ/8`` edges of a fixed
      neighborhood matching of size ``ell`` (``μ = ell/4``); red flag at ``μ/2``.
    """
    if kind not in SPLITTING_KINDS:
        raise PreconditionError(f"unknown splitting kind {kind!r}; expected one of {SPLITTING_KINDS}")
    if g.num_edges == 0:
        raise PreconditionError("splitting needs a graph with edges")
    if kind == "vertex-subset":
        return _vertex_subset(g, params.get("T"), Fraction(params.get("q", Fraction(1, 2))))
    ell = params.get("ell")
    if ell is None or ell <= 0:
        raise PreconditionError(f"{kind} splitting needs a positive ell")
    ell = Fraction(ell)
    half = Fraction(1, 2)
    variables = [binary_variable(w, half, host=w) for w in range(g.n)]
    events = []
    offenders = []
    for v in range(g.n):
        nbrs = g.neighbors(v)
        d = len(nbrs)
        if kind == "matching":
            sub = nx.Graph()
            sub.add_nodes_from(nbrs)
            sub.add_edges_from((a, b) for a in nbrs for b in g.neighbors(a) if b in set(nbrs) and a < b)
            m = sorted(tuple(sorted(e)) for e in nx.max_weight_matching(sub, maxcardinality=True))
            if len(m) < ell:
                offenders.append(v)
                continue
            pos = {u: i for i, u in enumerate(nbrs)}
            pairs = [(pos[a], pos[b]) for a, b in m[: int(math.ceil(ell))]]
            mu = Fraction(len(pairs), 4)
            lo, flag = mu / 8, mu / 2
        else:
            pos = {u: i for i, u in enumerate(nbrs)}
            inner = [(pos[a], pos[b]) for a in nbrs for b in g.neighbors(a) if b in pos and a < b]
            inner_set = set(inner)
            if kind == "sparsity":
                pairs = [(i, j) for i in range(d) for j in range(i + 1, d) if (i, j) not in inner_set and (j, i) not in inner_set]
            else:
                pairs = inner
            if len(pairs) < ell * d:
                offenders.append(v)
                continue
            lo, flag = ell * d / 16, ell * d / 6
        counter = _pair_counter(nbrs, pairs)

        def make(limit, _count=counter):
            def predicate(values):
                return _count(values, BLACK) < limit or _count(values, WHITE) < limit

            return predicate

        assoc = EventSpec(v, nbrs, make(flag), v, None, "none", None, f"{kind}-flag[{v}]")
        events.append(EventSpec(v, nbrs, make(lo), v, assoc, "none", None, f"{kind}[{v}]"))
    if offenders:
        raise PreconditionError(f"{kind} hypothesis fails at {len(offenders)} nodes: {offenders[:10]}")
    if kind == "matching":
        thresholds = {"guarantee": ell / 32, "flag": ell / 8}
        shape = "exp(-Omega(ell))"
    else:
        thresholds = {"guarantee_per_degree": ell / 16, "flag_per_degree": ell / 6}
        shape = "exp(-Omega(ell))"
    spec = SplittingSpec(kind, half, thresholds, shape, {"ell": float(ell)})
    return BinaryLowRiskInstance(LLLInstance(variables, events, g, f"split/{kind}")), spec


def _vertex_subset(g: Graph, T, q: Fraction):
    T = set(range(g.n)) if T is None else set(T)
    if not T:
        raise PreconditionError("vertex-subset splitting needs a non-empty T")
    if not 0 < q < 1:
        raise PreconditionError("q must lie strictly between 0 and 1")
    variables = [binary_variable(w, q, host=w) for w in sorted(T)]
    events = []
    offenders = []
    for v in range(g.n):
        nbrs = tuple(w for w in g.neighbors(v) if w in T)
        d_t = len(nbrs)
        if d_t == 0:
            offenders.append(v)
            continue
        lo, hi, flag = q * d_t / 2, 3 * q * d_t, 3 * q * d_t / 2
        probs = [q] * d_t
        assoc = count_event(
            v, nbrs, probs, lambda c, _lo=lo, _f=flag: c <= _lo or c >= _f, host=v, name=f"split-flag[{v}]"
        )
        events.append(
            count_event(v, nbrs, probs, lambda c, _lo=lo, _hi=hi: c <= _lo or c >= _hi, host=v, assoc=assoc, name=f"split[{v}]")
        )
    if offenders:
        raise PreconditionError(f"nodes without neighbors in T: {offenders[:10]}")
    spec = SplittingSpec(
        "vertex-subset",
        q,
        {"low_per_dT": q / 2, "high_per_dT": 3 * q, "flag_high_per_dT": 3 * q / 2},
        "exp(-Omega(d_T))",
        {"T_size": len(T)},
    )
    return BinaryLowRiskInstance(LLLInstance(variables, events, g, "split/vertex-subset")), spec
