"""Solving small residual LLLs collection by collection over a network decomposition.

The residual's host graph is split into clusters colored so that same-colored
clusters are far apart.  Colors are processed in order; within a color every
cluster fixes its variables by running several independent resampling instances on
an auxiliary LLL whose events say "this event's conditional probability jumped by
more than a ``d²`` factor", and adopting the first instance that avoided all of
the cluster's auxiliary events.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .core import (
    ENUMERATION_LIMIT,
    EventSpec,
    LLLInstance,
    PartialAssignment,
    _enumerate_conditional,
    _monte_carlo_conditional,
    as_rng,
    compute_locality,
    is_estimate,
)
from .errors import (
    EnumerationLimitError,
    InternalConsistencyError,
    PostShatterError,
    PreconditionError,
    SolverFailure,
)
from .graph import Graph
from .resample import solve_cps


# ---------------------------------------------------------------------------
# network decomposition


@dataclass
class Decomposition:
    clusters: list[tuple[int, ...]]
    colors: list[int]
    k: int
    beta: int
    radii: list[int] = field(default_factory=list)

    @property
    def num_colors(self) -> int:
        return max(self.colors, default=0)

    def to_json(self) -> dict:
        return {
            "n_clusters": len(self.clusters),
            "num_colors": self.num_colors,
            "k": self.k,
            "beta": self.beta,
            "cluster_sizes": [len(c) for c in self.clusters],
        }


def decompose(component: Graph, k: int, target_colors: int | None = None, rng=None) -> Decomposition:
    """Ball carving: each color class takes balls whose ``k``-padding at most doubles them.

    Balls are measured with distances in the whole component, so clusters of one
    color are more than ``k`` hops apart and have weak diameter at most ``2r``.
    Each color clusters at least half of the nodes still available, hence at most
    ``⌈log₂ n⌉ + 1`` colors.  If ``target_colors`` is exceeded the whole component
    becomes a single cluster.
    """
    if k < 1:
        raise PreconditionError("separation k must be at least 1")
    n = component.n
    if n == 0:
        return Decomposition([], [], k, 0)
    order = list(range(n)) if rng is None else [int(x) for x in as_rng(rng).permutation(n)]
    remaining = set(range(n))
    clusters, colors, radii = [], [], []
    color = 0
    while remaining:
        color += 1
        pool = set(remaining)
        for center in order:
            if center not in pool:
                continue
            dist = component.bfs_distances(center)
            by_radius: dict[int, int] = {}
            for u in pool:
                du = dist.get(u)
                if du is not None:
                    by_radius[du] = by_radius.get(du, 0) + 1
            top = max(by_radius)
            cumulative = []
            running = 0
            for r in range(top + k + 1):
                running += by_radius.get(r, 0)
                cumulative.append(running)
            r = 0
            while cumulative[min(r + k, len(cumulative) - 1)] > 2 * cumulative[r]:
                r += 1
            members = tuple(sorted(u for u in pool if dist.get(u, top + 1) <= r))
            pool -= {u for u in pool if dist.get(u, top + k + 1) <= r + k}
            remaining -= set(members)
            clusters.append(members)
            colors.append(color)
            radii.append(r)
    beta = 2 * max(radii)
    if target_colors is not None and color > max(1, target_colors):
        ecc = max(component.bfs_distances(0).values())
        return Decomposition([tuple(range(n))], [1], k, 2 * ecc, [ecc])
    return Decomposition(clusters, colors, k, beta, radii)


def verify_decomposition(component: Graph, dec: Decomposition) -> None:
    """Raise ``InternalConsistencyError`` unless partition, separation and diameter hold."""
    seen: dict[int, int] = {}
    for idx, cluster in enumerate(dec.clusters):
        for u in cluster:
            if u in seen:
                raise InternalConsistencyError(f"node {u} in two clusters")
            seen[u] = idx
    if set(seen) != set(range(component.n)):
        raise InternalConsistencyError("clusters do not cover the component")
    for idx, cluster in enumerate(dec.clusters):
        near = component.ball(cluster, dec.k)
        for u in near:
            j = seen[u]
            if j != idx and dec.colors[j] == dec.colors[idx]:
                raise InternalConsistencyError(f"clusters {idx} and {j} share a color within {dec.k} hops")
        members = set(cluster)
        for u in cluster:
            dist = component.bfs_distances(u, limit=dec.beta + 1)
            if any(dist.get(w, dec.beta + 1) > dec.beta for w in members):
                raise InternalConsistencyError(f"cluster {idx} exceeds weak diameter {dec.beta}")


# ---------------------------------------------------------------------------
# per-collection auxiliary LLL


@dataclass
class CollectionLLL:
    instance: LLLInstance
    refs: dict
    thresholds: dict
    capped: dict
    d: int
    variables: frozenset
    estimated: dict = field(default_factory=dict)

    @property
    def events(self):
        return self.instance.events


def _conditional_fn(base: LLLInstance, event: EventSpec, trials: int, rng):
    """A function from a full value tuple (``None`` = unset) to ``Pr(E | ·)``."""
    if event.conditional is not None:
        return event.conditional, False

    def exact(values):
        unset = [i for i, v in enumerate(values) if v is None]
        if len(unset) > ENUMERATION_LIMIT:
            raise EnumerationLimitError(len(unset), ENUMERATION_LIMIT)
        return _enumerate_conditional(base, event, values, unset)

    if len(event.vbl) <= ENUMERATION_LIMIT:
        return exact, False
    if trials <= 0:
        return exact, False

    def estimate(values):
        unset = [i for i, v in enumerate(values) if v is None]
        if len(unset) <= ENUMERATION_LIMIT:
            return exact(values)
        return _monte_carlo_conditional(base, event, values, unset, trials, rng)

    return estimate, True


def jump_holds(cond, threshold) -> bool:
    """The auxiliary event: the conditional is positive and reached the threshold."""
    return cond > 0 and cond >= threshold


def build_collection_lll(
    base: LLLInstance,
    phi_prev: PartialAssignment,
    collection: Iterable[Iterable[int]],
    d: int,
    *,
    trials: int = 0,
    rng=None,
    events: Sequence[EventSpec] | None = None,
) -> CollectionLLL:
    """Auxiliary LLL over the unset variables hosted in the collection's clusters.

    For each base event touching those variables the reference probability
    ``Pr(E | phi_prev)`` is frozen, and the auxiliary event holds on an assignment
    ``psi`` of the collection's variables iff ``Pr(E | psi ∪ phi_prev)`` is positive
    and at least ``min(d²·ref, 1)``.
    """
    rng = as_rng(rng)
    nodes = set()
    for cluster in collection:
        nodes.update(cluster)
    pool = events if events is not None else base.events
    v_set = {
        x
        for e in pool
        for x in e.vbl
        if not phi_prev.is_set(x) and base.var_index[x].host in nodes
    }
    touching = [e for e in pool if any(x in v_set for x in e.vbl)]
    fns, approx = {}, {}
    for e in touching:
        fns[e.id], approx[e.id] = _conditional_fn(base, e, trials, rng)
    refs = {e.id: fns[e.id](phi_prev.values_for(e.vbl)) for e in touching}
    return _collection(base, phi_prev, v_set, touching, fns, approx, refs, d)


def compact_ids(inst: LLLInstance) -> dict:
    """Dense integer ids assigned in BFS order within each dependency component."""
    dep = inst.dependency
    ids: dict = {}
    expanded: set = set()  # a variable's events are all queued once it is expanded
    for comp in dep.components():
        start = comp[0]
        queue = deque([start])
        local = {start}
        order = []
        while queue:
            u = queue.popleft()
            order.append(u)
            fresh = set()
            for x in dep.vbl(u):
                if x in expanded:
                    continue
                expanded.add(x)
                fresh.update(w for w in dep.var_events[x] if w not in local)
            for w in sorted(fresh, key=repr):
                local.add(w)
                queue.append(w)
        for i, eid in enumerate(order):
            ids[eid] = i
    return ids


# ---------------------------------------------------------------------------
# solver


@dataclass
class PostShatterTrace:
    p: Any = None
    d: int = 0
    nu: int = 0
    k: int = 1
    lam: int | None = None
    k_parallel: int = 16
    n_events: int = 0
    n_variables: int = 0
    n_components: int = 0
    decompositions: list = field(default_factory=list)
    collections: list = field(default_factory=list)
    ledger: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    estimated_values: int = 0
    outcome: str = "pending"

    def criterion(self) -> dict:
        if self.p is None or self.lam is None:
            return {}
        return {"p_lt_d^-2lambda": float(self.p) < float(self.d) ** (-2 * self.lam)}

    def to_json(self) -> dict:
        return {
            "solver": "postshatter",
            "p": None if self.p is None else float(self.p),
            "d": self.d,
            "nu": self.nu,
            "k": self.k,
            "lambda": self.lam,
            "k_parallel": self.k_parallel,
            "n_events": self.n_events,
            "n_variables": self.n_variables,
            "n_components": self.n_components,
            "criterion": self.criterion(),
            "decompositions": self.decompositions,
            "collections": self.collections,
            "ledger": self.ledger,
            "estimated_values": self.estimated_values,
            "outcome": self.outcome,
        }


def _cond(base, e, phi, fns):
    fn = fns[e.id]
    return fn(phi.values_for(e.vbl))


def solve_postshatter(
    base: LLLInstance,
    psi: PartialAssignment | None = None,
    lam: int | None = None,
    k_parallel: int = 16,
    rng=None,
    *,
    d: int | None = None,
    trials: int = 2000,
    record_snapshots: bool = False,
) -> tuple[PartialAssignment, PostShatterTrace]:
    """Complete ``psi`` so that every event of ``base`` is avoided.

    ``lam`` caps the number of colors (collections) per component;
    ``trials`` is the Monte Carlo budget for conditionals that cannot be enumerated
    (those values are flagged and excluded from the exact bound ledger).
    """
    rng = as_rng(rng)
    psi = PartialAssignment() if psi is None else psi
    phi = psi.copy()
    trace = PostShatterTrace(lam=lam, k_parallel=k_parallel)
    in_play = [e for e in base.events if phi.unset_among(e.vbl)]
    for e in base.events:
        if not phi.unset_among(e.vbl) and e.predicate(phi.values_for(e.vbl)):
            trace.outcome = "infeasible-input"
            raise SolverFailure(f"event {e.id} already holds under the given assignment", trace)
    trace.n_events = len(in_play)
    if not in_play:
        trace.outcome = "success"
        return phi, trace
    mc_rng = np.random.default_rng(rng.integers(2**63))
    fns, approx = {}, {}
    for e in in_play:
        fns[e.id], approx[e.id] = _conditional_fn(base, e, trials, mc_rng)
    refs = {e.id: _cond(base, e, phi, fns) for e in in_play}
    p = max(refs.values())
    dd = d if d is not None else max(2, base.dependency.max_degree)
    dd = max(2, dd)
    trace.p, trace.d = p, dd
    unset_vars = sorted({x for e in in_play for x in phi.unset_among(e.vbl)}, key=repr)
    trace.n_variables = len(unset_vars)

    # clusters of the host graph
    g = base.comm_graph
    cluster_of_node: dict[int, int] = {}
    clusters: list[tuple] = []
    cluster_colors: list[int] = []
    if g is None:
        # without hosts, every dependency component is its own cluster
        trace.nu, trace.k = 0, 1
        var_comp: dict = {}
        comps = base.dependency.components([e.id for e in in_play])
        trace.n_components = len(comps)
        for ci, comp in enumerate(comps):
            clusters.append(tuple(comp))
            cluster_colors.append(1)
            for eid in comp:
                for x in base.event_index[eid].vbl:
                    var_comp[x] = ci
        var_cluster = {x: var_comp[x] for x in unset_vars}
    else:
        nu = compute_locality(base)
        k = max(1, 2 * nu)
        trace.nu, trace.k = nu, k
        hosts = {e.host for e in in_play} | {base.var_index[x].host for x in unset_vars}
        w_prime = g.ball(hosts, nu)
        comps = g.components(w_prime)
        trace.n_components = len(comps)
        for comp in comps:
            sub, labels = g.subgraph(comp)
            dec = decompose(sub, k, lam, rng=np.random.default_rng(rng.integers(2**63)))
            trace.decompositions.append(dec.to_json())
            for members, color in zip(dec.clusters, dec.colors):
                cid = len(clusters)
                clusters.append(tuple(labels[u] for u in members))
                cluster_colors.append(color)
                for u in members:
                    cluster_of_node[labels[u]] = cid
        var_cluster = {x: cluster_of_node[base.var_index[x].host] for x in unset_vars}

    num_colors = max(cluster_colors, default=0)
    by_id = {e.id: e for e in in_play}
    for i in range(1, num_colors + 1):
        members = [c for c, col in enumerate(cluster_colors) if col == i]
        v_i = [x for x in unset_vars if var_cluster[x] in set(members)]
        record: dict = {"collection": i, "n_variables": len(v_i)}
        if not v_i:
            record.update({"n_events": 0, "clusters": [], "instances_run": 0})
            trace.collections.append(record)
            _ledger(trace, i, in_play, phi, fns, approx, refs, p, dd, record_snapshots, touched=set())
            continue
        v_set = set(v_i)
        touching = [e for e in in_play if any(x in v_set for x in e.vbl)]
        events_of_cluster: dict[int, list] = {}
        for e in touching:
            owners = {var_cluster[x] for x in e.vbl if x in v_set}
            if len(owners) > 1:
                raise InternalConsistencyError(
                    f"event {e.id} spans same-color clusters {sorted(owners)}; separation too small"
                )
            events_of_cluster.setdefault(owners.pop(), []).append(e.id)
        vars_of_cluster: dict[int, list] = {}
        for x in v_i:
            vars_of_cluster.setdefault(var_cluster[x], []).append(x)

        prev_refs = {e.id: _cond(base, e, phi, fns) for e in touching}
        coll = _collection(base, phi, v_set, touching, fns, approx, prev_refs, dd)
        ids = compact_ids(coll.instance)
        pending = set(vars_of_cluster)
        chosen: dict[int, int] = {}
        failing_counts = []
        seeds = rng.integers(2**63, size=k_parallel)
        runs = 0
        for j in range(k_parallel):
            if not pending:
                break
            psi_j, tr = solve_cps(coll.instance, ids=ids, rng=np.random.default_rng(seeds[j]), p=1.0 / (dd * dd))
            runs += 1
            failing_counts.append(tr.failing_counts[-1])
            for cid in sorted(pending):
                evs = events_of_cluster.get(cid, [])
                aux = coll.instance.event_index
                if all(not aux[eid].predicate(psi_j.values_for(aux[eid].vbl)) for eid in evs):
                    chosen[cid] = j
                    for x in vars_of_cluster[cid]:
                        phi.set(x, psi_j.get(x))
            pending -= set(chosen)
        if pending:
            trace.outcome = "failure"
            worst = min(pending)
            raise PostShatterError(
                f"collection {i}: all {k_parallel} instances failed for cluster {worst}",
                cluster=worst,
                failing_counts=failing_counts,
                trace=trace,
            )
        # instance-choice soundness: re-evaluate after adoption
        for e in touching:
            now = _cond(base, e, phi, fns)
            if jump_holds(now, coll.thresholds[e.id]):
                raise InternalConsistencyError(f"adopted instance leaves auxiliary event {e.id} holding")
        record.update(
            {
                "n_events": len(touching),
                "clusters": [
                    {"cluster": cid, "chosen": chosen[cid], "n_events": len(events_of_cluster.get(cid, []))}
                    for cid in sorted(chosen)
                ],
                "instances_run": runs,
                "failing_counts": failing_counts,
                "capped_events": sum(coll.capped.values()),
            }
        )
        trace.collections.append(record)
        _ledger(trace, i, in_play, phi, fns, approx, prev_refs, p, dd, record_snapshots, touched={e.id for e in touching})

    leftover = [x for x in unset_vars if not phi.is_set(x)]
    if leftover:
        raise InternalConsistencyError(f"variables {leftover[:5]} were never assigned")
    bad = [e.id for e in in_play if e.predicate(phi.values_for(e.vbl))]
    if bad:
        trace.outcome = "failure"
        raise SolverFailure(f"{len(bad)} events hold after the last collection", trace)
    trace.outcome = "success"
    return phi, trace


def _collection(base, phi, v_set, touching, fns, approx, prev_refs, d) -> CollectionLLL:
    aux, thresholds, capped, estimated = [], {}, {}, {}
    for e in touching:
        mine = tuple(x for x in e.vbl if x in v_set)
        ref = prev_refs[e.id]
        thr = d * d * ref
        capped[e.id] = thr > 1
        thr = min(thr, 1)
        thresholds[e.id] = thr
        estimated[e.id] = approx[e.id] or is_estimate(ref)
        prev_values = phi.values_for(e.vbl)
        positions = tuple(e.vbl.index(x) for x in mine)

        def predicate(values, _fn=fns[e.id], _base=prev_values, _pos=positions, _thr=thr):
            vals = list(_base)
            for i, v in zip(_pos, values):
                vals[i] = v
            return jump_holds(_fn(tuple(vals)), _thr)

        aux.append(EventSpec(e.id, mine, predicate, e.host, None, "none", None, e.name))
    variables = [base.var_index[x] for x in sorted(v_set, key=repr)]
    inst = LLLInstance(variables, aux, base.comm_graph, f"{base.name}/collection")
    return CollectionLLL(inst, dict(prev_refs), thresholds, capped, d, frozenset(v_set), estimated)


def _ledger(trace, i, in_play, phi, fns, approx, prev_refs, p, d, record_snapshots, touched):
    bound = p * (d * d) ** i
    worst = 0
    violations = 0
    budget_violations = 0
    estimated = 0
    for e in in_play:
        now = _cond(None, e, phi, fns)
        if approx[e.id] or is_estimate(now):
            estimated += 1
            continue
        worst = max(worst, now)
        if now > bound:
            violations += 1
        if e.id in touched:
            ref = prev_refs[e.id]
            if not (now == 0 or now < d * d * ref):
                budget_violations += 1
    trace.estimated_values += estimated
    trace.ledger.append(
        {
            "collection": i,
            "bound": float(bound),
            "max_conditional": float(worst),
            "violations": violations,
            "budget_violations": budget_violations,
            "estimated": estimated,
        }
    )
    if record_snapshots:
        trace.snapshots.append(phi.copy())
    if violations or budget_violations:
        trace.outcome = "failure"
        raise InternalConsistencyError(f"collection {i}: conditional-probability ledger violated")


def postshatter_solver(lam: int | None = None, k_parallel: int = 16, trials: int = 2000, record_snapshots: bool = False):
    """A post solver closure suitable for the shattering solvers."""

    def solve(residual: LLLInstance, rng):
        return solve_postshatter(
            residual, PartialAssignment(), lam, k_parallel, rng, trials=trials, record_snapshots=record_snapshots
        )

    return solve
