"""Slack generation and the two coloring pipelines (sparse and triangle-free graphs).

Colors are integers ``0..C-1``; an uncolored node holds ``None``.  A candidate
value of :data:`INACTIVE` means the node does not try a color this round.
"""

from __future__ import annotations

import logging
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from ..core import EventSpec, LLLInstance, VariableSpec, as_rng
from ..errors import (
    InfeasibleParametersError,
    InternalConsistencyError,
    LLLError,
    PreconditionError,
    StageError,
)
from ..graph import Graph, edges_within, local_sparsity
from ..resample import solve_cps
from ..shatter import cps_post_solver, solve_disjoint, two_set_instance
from .instances import dss_sample
from .validate import scan_coloring, scan_partition

log = logging.getLogger(__name__)

INACTIVE = -1
ACTIVATION = 1 / 20
C_PRIME = 2


# ---------------------------------------------------------------------------
# state


@dataclass
class ColoringState:
    """Palettes and permanent colors of every node."""

    graph: Graph
    palettes: list
    colors: list
    color_bound: int

    @classmethod
    def fresh(cls, g: Graph, num_colors: int) -> "ColoringState":
        return cls(g, [set(range(num_colors)) for _ in range(g.n)], [None] * g.n, num_colors)

    def is_colored(self, v: int) -> bool:
        return self.colors[v] is not None

    def uncolored(self) -> list:
        return [v for v in range(self.graph.n) if self.colors[v] is None]

    def uncolored_degree(self, v: int) -> int:
        return sum(1 for w in self.graph.neighbors(v) if self.colors[w] is None)

    def slack(self, v: int) -> int:
        """Palette size minus uncolored degree."""
        return len(self.palettes[v]) - self.uncolored_degree(v)

    def color(self, v: int, c: int) -> None:
        if c not in self.palettes[v]:
            raise PreconditionError(f"color {c} is not in the palette of node {v}")
        self.colors[v] = c
        for w in self.graph.neighbors(v):
            self.palettes[w].discard(c)

    def copy(self) -> "ColoringState":
        return ColoringState(self.graph, [set(p) for p in self.palettes], list(self.colors), self.color_bound)

    def used_colors(self) -> set:
        return {c for c in self.colors if c is not None}

    def check(self) -> None:
        """Raise unless colored neighbors differ and uncolored palettes exclude neighbor colors."""
        for v in range(self.graph.n):
            c = self.colors[v]
            for w in self.graph.neighbors(v):
                cw = self.colors[w]
                if cw is None:
                    continue
                if c == cw:
                    raise InternalConsistencyError(f"coloring state corrupted: edge ({v}, {w}) both have color {c}")
                if c is None and cw in self.palettes[v]:
                    raise InternalConsistencyError(f"coloring state corrupted: palette of {v} still holds {cw}")

    def to_json(self) -> dict:
        return {str(v): c for v, c in enumerate(self.colors)}


def slack_gain(colors: list, nbrs: Iterable[int]) -> int:
    """Colored neighbors minus distinct colors among them."""
    held = [colors[w] for w in nbrs if colors[w] is not None]
    return len(held) - len(set(held))


# ---------------------------------------------------------------------------
# TryColor


def try_color(state: ColoringState, v: int, c_v: int, neighbor_candidates: Mapping[int, int]) -> bool:
    """Permanently color ``v`` with ``c_v`` unless a neighbor tries the same color."""
    if c_v not in state.palettes[v]:
        raise PreconditionError(f"candidate {c_v} is not in the palette of node {v}")
    if any(neighbor_candidates.get(w) == c_v for w in state.graph.neighbors(v)):
        return False
    state.color(v, c_v)
    return True


def try_color_round(state: ColoringState, candidates: Mapping[int, int]) -> set:
    """One synchronous TryColor round; returns the nodes that kept their candidate."""
    g = state.graph
    kept = []
    for v, c in candidates.items():
        if state.colors[v] is not None:
            raise PreconditionError(f"node {v} is already colored")
        if c not in state.palettes[v]:
            raise PreconditionError(f"candidate {c} is not in the palette of node {v}")
        if not any(candidates.get(w) == c for w in g.neighbors(v)):
            kept.append(v)
    for v in kept:
        state.color(v, candidates[v])
    return set(kept)


# ---------------------------------------------------------------------------
# slack reports


def slack_threshold(m_bar, chi, c_prime=C_PRIME) -> float:
    """``e^{-3/c'} · m̄ / (500 χ)``."""
    return math.exp(-3.0 / c_prime) * float(m_bar) / (500.0 * chi)


@dataclass
class SlackReport:
    chi: int
    c_prime: float
    m_bar: dict = field(default_factory=dict)
    gain: dict = field(default_factory=dict)
    z: dict = field(default_factory=dict)
    threshold: dict = field(default_factory=dict)

    @property
    def nodes(self) -> list:
        return sorted(self.gain)

    def meeting(self) -> list:
        return [v for v in self.nodes if self.gain[v] >= self.threshold[v]]

    def fraction_meeting(self) -> float:
        return len(self.meeting()) / len(self.gain) if self.gain else 1.0

    def to_json(self) -> dict:
        return {
            "chi": self.chi,
            "c_prime": self.c_prime,
            "nodes": len(self.gain),
            "fraction_meeting": self.fraction_meeting(),
            "min_gain": min(self.gain.values(), default=None),
            "total_gain": sum(self.gain.values()),
        }


def z_statistic(g: Graph, nbrs: list, candidates: Mapping[int, int], kept: set) -> int:
    """Colors tried by a non-adjacent pair of ``nbrs`` and retained by every neighbor trying them."""
    by_color: dict = {}
    for u in nbrs:
        c = candidates.get(u, INACTIVE)
        if c != INACTIVE:
            by_color.setdefault(c, []).append(u)
    z = 0
    for c, tried in by_color.items():
        if len(tried) < 2 or not all(u in kept for u in tried):
            continue
        if any(not g.has_edge(a, b) for i, a in enumerate(tried) for b in tried[i + 1:]):
            z += 1
    return z


def _non_edges_among(g: Graph, nodes) -> int:
    nodes = list(nodes)
    return len(nodes) * (len(nodes) - 1) // 2 - edges_within(g, nodes)


def slack_generation(
    g: Graph,
    S,
    chi: int,
    rng=None,
    *,
    activation: float = ACTIVATION,
    c_prime: float = C_PRIME,
    state: ColoringState | None = None,
    offset: int = 0,
    report_nodes: Iterable[int] | None = None,
) -> tuple[ColoringState, SlackReport]:
    """One round of random slack generation over ``S``.

    Each uncolored node of ``S`` is active with probability ``activation`` and
    tries a uniform color of its palette within ``[offset, offset + χ)``.
    """
    rng = as_rng(rng)
    S = set(S)
    state = ColoringState.fresh(g, offset + chi) if state is None else state
    lo, hi = offset, offset + chi
    candidates = {}
    for u in sorted(S):
        if state.colors[u] is not None:
            continue
        active = rng.random() < activation
        pal = sorted(c for c in state.palettes[u] if lo <= c < hi)
        if active and pal:
            candidates[u] = pal[int(rng.integers(len(pal)))]
    before = list(state.colors)
    kept = try_color_round(state, candidates)
    if report_nodes is None:
        report_nodes = [v for v in range(g.n) if sum(1 for w in g.neighbors(v) if w in S) >= 2]
    report = SlackReport(chi, c_prime)
    for v in report_nodes:
        nbrs = [w for w in g.neighbors(v) if w in S]
        m_bar = _non_edges_among(g, nbrs)
        report.m_bar[v] = m_bar
        report.gain[v] = slack_gain(state.colors, g.neighbors(v)) - slack_gain(before, g.neighbors(v))
        report.z[v] = z_statistic(g, nbrs, candidates, kept)
        report.threshold[v] = slack_threshold(m_bar, chi, c_prime)
    return state, report


# ---------------------------------------------------------------------------
# slack generation as a disjoint-variable-set LLL


def _gain_event(g, v, side, free, colors, threshold, event_id):
    """"``v`` gains fewer than ``threshold`` colors from the nodes ``free`` of one side."""
    inner = [u for u in g.neighbors(v) if u in free]
    outer = sorted({w for u in inner for w in g.neighbors(u) if w in free} - set(inner))
    vbl = tuple(inner) + tuple(outer)
    pos = {x: i for i, x in enumerate(vbl)}
    conflicts = [tuple(pos[w] for w in g.neighbors(u) if w in free) for u in inner]
    present = frozenset(colors[w] for w in g.neighbors(v) if colors[w] is not None)

    def predicate(values, _conf=conflicts, _present=present, _t=threshold):
        kept = []
        for i, nb in enumerate(_conf):
            c = values[i]
            if c == INACTIVE or c is None:
                continue
            for j in nb:
                if values[j] == c:
                    break
            else:
                kept.append(c)
        return len(kept) - len(set(kept) - _present) < _t

    return EventSpec(event_id, vbl, predicate, v, None, "none", None, f"gain{side}[{v}]")


def _candidate_variable(u, palette, activation):
    pal = tuple(sorted(palette))
    if not pal:
        return VariableSpec(u, (INACTIVE,), (1.0,), host=u)
    share = activation / len(pal)
    return VariableSpec(u, (INACTIVE,) + pal, (1.0 - activation,) + (share,) * len(pal), host=u)


def slack_gen_two_sets(
    g: Graph,
    W,
    S1,
    S2,
    chi: int,
    rng=None,
    *,
    threshold=None,
    m_bar=None,
    delta_s=None,
    c_prime: float = C_PRIME,
    activation: float = ACTIVATION,
    state: ColoringState | None = None,
    offsets: tuple[int, int] | None = None,
    post_solver=None,
) -> tuple[ColoringState, SlackReport, dict]:
    """Slack for every node of ``W`` from one TryColor round on ``S1 ∪ S2``.

    ``S1`` tries colors in ``[o1, o1+χ)`` and ``S2`` in ``[o2, o2+χ)``.  The event
    of ``v ∈ W`` is "gain from S1 below threshold" ∩ "gain from S2 below
    threshold"; it is solved with :func:`~distlll.shatter.solve_disjoint`.
    ``threshold`` is a number, a per-node mapping, or ``None`` for the formula.
    """
    rng = as_rng(rng)
    W = sorted(set(W))
    S1, S2 = set(S1), set(S2)
    if S1 & S2:
        raise PreconditionError("S1 and S2 must be disjoint")
    offsets = (0, chi) if offsets is None else tuple(offsets)
    state = ColoringState.fresh(g, max(offsets) + chi) if state is None else state
    sides = (S1, S2)

    observed_ds = 0
    heavy = []
    for v in sorted(set(W) | S1 | S2):
        for S in sides:
            c = sum(1 for w in g.neighbors(v) if w in S)
            observed_ds = max(observed_ds, c)
            if delta_s is not None and c > delta_s:
                heavy.append(v)
    if heavy:
        raise PreconditionError(f"nodes with more than Δs = {delta_s} neighbors in a side: {heavy[:10]}")
    delta_s = observed_ds if delta_s is None else delta_s
    mbars = {v: tuple(_non_edges_among(g, [w for w in g.neighbors(v) if w in S]) for S in sides) for v in W}
    if m_bar is not None:
        thin = [v for v in W if min(mbars[v]) < m_bar]
        if thin:
            raise PreconditionError(f"nodes with fewer than m̄ = {m_bar} non-edges into a side: {thin[:10]}")
    else:
        m_bar = min((min(x) for x in mbars.values()), default=0)
    formula = slack_threshold(m_bar, chi, c_prime)
    if threshold is None:
        thr = {v: formula for v in W}
    elif isinstance(threshold, Mapping):
        thr = {v: threshold[v] for v in W}
    else:
        thr = {v: threshold for v in W}

    free = []
    variables = []
    for S, off in zip(sides, offsets):
        f = {u for u in S if state.colors[u] is None}
        free.append(f)
        for u in sorted(f):
            variables.append(_candidate_variable(u, {c for c in state.palettes[u] if off <= c < off + chi}, activation))
    parts = []
    stuck = []
    for v in W:
        if thr[v] <= 0:
            continue
        e1 = _gain_event(g, v, 1, free[0], state.colors, thr[v], v)
        e2 = _gain_event(g, v, 2, free[1], state.colors, thr[v], v)
        if not e1.vbl and not e2.vbl:
            stuck.append(v)
        parts.append((v, e1, e2, v))
    if stuck:
        raise InfeasibleParametersError(f"nodes needing slack without uncolored neighbors in S1 ∪ S2: {stuck[:10]}")
    inst = two_set_instance(variables, parts, free[0], free[1], g, "slack-two-sets", p_bound=1)
    phi, shatter = solve_disjoint(
        inst, post_solver or cps_post_solver(), rng, fill="sample", diagnostics=False
    )
    candidates = {u: phi.get(u) for u in free[0] | free[1] if phi.get(u) not in (None, INACTIVE)}
    before = list(state.colors)
    kept = try_color_round(state, candidates)

    report = SlackReport(chi, c_prime)
    for v in W:
        present = {before[w] for w in g.neighbors(v) if before[w] is not None}
        gains = []
        for S in sides:
            new = [state.colors[w] for w in g.neighbors(v) if w in S and w in kept]
            gains.append(len(new) - len(set(new) - present))
        total = slack_gain(state.colors, g.neighbors(v)) - slack_gain(before, g.neighbors(v))
        if total != sum(gains):
            raise InternalConsistencyError(f"node {v}: side gains {gains} do not add up to {total}")
        if thr[v] > 0 and max(gains) < thr[v]:
            raise InternalConsistencyError(f"node {v}: solver output leaves both gains below {thr[v]}")
        report.m_bar[v] = min(mbars[v])
        report.gain[v] = total
        report.threshold[v] = thr[v]
        report.z[v] = sum(
            z_statistic(g, [w for w in g.neighbors(v) if w in S], candidates, kept) for S in sides
        )
    max_new = max((sum(1 for w in g.neighbors(v) if w in kept) for v in range(g.n)), default=0)
    if max_new > 2 * delta_s:
        raise InternalConsistencyError("a node received more than 2Δs newly colored neighbors")
    trace = {
        "W": len(W),
        "S1": len(S1),
        "S2": len(S2),
        "chi": chi,
        "delta_s": delta_s,
        "m_bar": m_bar,
        "threshold": {"formula": formula, "used": _summ(thr.values())},
        "activation": activation,
        "post_events": len(shatter.post_event_ids),
        "post_variables": shatter.n_post_variables,
        "residual_component_hist": {str(k): v for k, v in sorted(shatter.residual_component_hist.items())},
        "colored": len(kept),
        "max_new_colored_neighbors": max_new,
    }
    return state, report, trace


def _summ(values) -> dict:
    values = [float(x) for x in values]
    if not values:
        return {"min": None, "max": None}
    return {"min": min(values), "max": max(values)}


# ---------------------------------------------------------------------------
# completion


def d1lc_deficient(state: ColoringState) -> list:
    return [v for v in state.uncolored() if len(state.palettes[v]) <= state.uncolored_degree(v)]


def greedy_d1lc(g: Graph, state: ColoringState, rng=None, rounds: int = 16) -> ColoringState:
    """Finish a (degree+1)-list coloring: random TryColor rounds, then sequential greedy."""
    rng = as_rng(rng)
    bad = d1lc_deficient(state)
    if bad:
        raise PreconditionError(f"{len(bad)} uncolored nodes lack slack (palette ≤ uncolored degree): {bad[:10]}")
    for _ in range(rounds):
        todo = state.uncolored()
        if not todo:
            break
        candidates = {}
        for v in todo:
            pal = sorted(state.palettes[v])
            candidates[v] = pal[int(rng.integers(len(pal)))]
        try_color_round(state, candidates)
    for v in state.uncolored():
        state.color(v, min(state.palettes[v]))
    return state


# ---------------------------------------------------------------------------
# partition


@dataclass
class Partition:
    labels: list
    k: int
    epsilon: float
    attempts: int
    max_deviation: float

    @property
    def classes(self) -> list:
        out = [[] for _ in range(self.k)]
        for v, lab in enumerate(self.labels):
            out[lab].append(v)
        return out

    def to_json(self) -> dict:
        return {"k": self.k, "epsilon": self.epsilon, "attempts": self.attempts, "max_deviation": self.max_deviation}


def partition_vertices(g: Graph, k: int, epsilon: float, rng=None, retries: int = 5, repair_moves: int | None = None) -> Partition:
    """Split ``V`` into ``k`` classes with ``d(v)/k ± εΔ/k`` neighbors per class.

    Each attempt assigns classes uniformly and then repairs violations by local
    moves (a node leaves a class in which some neighbor is over-represented).
    """
    rng = as_rng(rng)
    if k < 1:
        raise PreconditionError("k must be positive")
    n = g.n
    delta = max(g.max_degree, 1)
    tol = epsilon * delta / k
    deg = np.array([g.degree(v) for v in range(n)], dtype=float)
    nbrs = [np.array(g.neighbors(v), dtype=np.int64) for v in range(n)]
    repair_moves = 20 * n if repair_moves is None else repair_moves
    worst = (0.0, None, None)
    for attempt in range(1, retries + 1):
        labels = rng.integers(k, size=n)
        counts = np.zeros((n, k))
        for v in range(n):
            if len(nbrs[v]):
                np.add.at(counts[v], labels[nbrs[v]], 1)
        dev = counts - deg[:, None] / k

        def excess(rows):
            return np.maximum(np.abs(dev[rows]) - tol, 0).sum()

        for _ in range(repair_moves):
            viol = np.argwhere(np.abs(dev) > tol + 1e-12)
            if not len(viol):
                break
            v, i = viol[int(rng.integers(len(viol)))]
            if dev[v, i] > 0:
                pool = nbrs[v][labels[nbrs[v]] == i]
                target = int(np.argmin(dev[v]))
            else:
                pool = nbrs[v][labels[nbrs[v]] != i]
                target = int(i)
            if not len(pool):
                continue
            u = int(pool[int(rng.integers(len(pool)))])
            src = int(labels[u])
            if src == target:
                continue
            rows = nbrs[u]
            old = excess(rows)
            dev[rows, src] -= 1
            dev[rows, target] += 1
            if excess(rows) <= old:
                labels[u] = target
            else:
                dev[rows, src] += 1
                dev[rows, target] -= 1
        max_dev = float(np.abs(dev).max()) if n else 0.0
        if max_dev <= tol + 1e-12:
            part = Partition([int(x) for x in labels], k, epsilon, attempt, max_dev)
            if not scan_partition(g, part.labels, k, epsilon):
                raise InternalConsistencyError("partition scan disagrees with the incremental counts")
            return part
        v, i = np.unravel_index(int(np.argmax(np.abs(dev))), dev.shape)
        if max_dev > worst[0]:
            worst = (max_dev, int(v), int(i))
    raise InfeasibleParametersError(
        f"no partition within ±{tol:g} after {retries} attempts; worst deviation {worst[0]:g} "
        f"at node {worst[1]}, class {worst[2]}"
    )


# ---------------------------------------------------------------------------
# pipelines


def _loglog(n: int) -> float:
    return math.log2(max(math.log2(max(n, 4)), 2.0))


def select_branch(delta: int, n: int) -> str:
    """``small`` for Δ ≤ (log log n)², ``large`` for Δ ≥ 100 ln n, else ``mid``."""
    if delta >= 100 * math.log(max(n, 2)):
        return "large"
    if delta <= _loglog(n) ** 2:
        return "small"
    return "mid"


ELAPSED = "elapsed_seconds"


def split_timings(trace: dict) -> dict:
    """Move wall-clock fields out of a pipeline trace (so the trace is reproducible)."""
    timings = {}
    for entry in trace.get("stages", []):
        if ELAPSED in entry:
            timings[entry["stage"]] = timings.get(entry["stage"], 0.0) + entry.pop(ELAPSED)
    return timings


@dataclass
class PipelineResult:
    state: ColoringState
    num_colors: int
    trace: dict
    timings: dict = field(default_factory=dict)

    @property
    def colors(self) -> list:
        return self.state.colors

    def to_json(self) -> dict:
        return {"num_colors": self.num_colors, "coloring": self.state.to_json(), "trace": self.trace}


def _run_stage(name: str, fn: Callable, rng, retries: int, stages: list):
    """Run ``fn(rng)`` with fresh child generators until it succeeds or ``retries`` is exhausted."""
    errors = []
    start = time.perf_counter()
    for attempt in range(1, retries + 1):
        child = np.random.default_rng(rng.integers(2**63))
        try:
            out, info = fn(child)
        except (LLLError, StageError) as exc:
            errors.append(f"{type(exc).__name__}: {exc}"[:300])
            log.info("stage %s attempt %d failed: %s", name, attempt, exc)
            continue
        stages.append({"stage": name, "attempts": attempt, "errors": errors, **info, ELAPSED: time.perf_counter() - start})
        return out
    stages.append({"stage": name, "attempts": retries, "errors": errors, "failed": True, ELAPSED: time.perf_counter() - start})
    raise StageError(name, f"stage {name!r} failed after {retries} attempts: {errors[-1] if errors else ''}", stages)


def _verify(state: ColoringState, stage: str) -> None:
    try:
        state.check()
    except InternalConsistencyError as exc:
        raise StageError(stage, str(exc), None) from exc


def _deficit(state: ColoringState, v: int) -> int:
    return 1 - state.slack(v)


def _round_thresholds(state, W, rounds_left, shares, mode):
    """``auto``: plain rounds (no events) until the last one, which must close every deficit."""
    if mode == "auto":
        if rounds_left > 1:
            return 0
        return {v: math.ceil(_deficit(state, v) / shares) for v in W}
    return mode


def _slack_rounds(g, state, pairs, chi, rng, *, rounds, activation, threshold, c_prime, post_solver):
    """Repeated two-set slack generation over class pairs until no node lacks slack."""
    history = []
    for r in range(rounds):
        W = [v for v in state.uncolored() if _deficit(state, v) > 0]
        if not W:
            break
        thr = _round_thresholds(state, W, rounds - r, len(pairs), threshold)
        for (S1, S2, offsets) in pairs:
            f1 = [u for u in S1 if state.colors[u] is None]
            f2 = [u for u in S2 if state.colors[u] is None]
            state, report, tr = slack_gen_two_sets(
                g, W, f1, f2, chi, rng,
                threshold=thr, c_prime=c_prime, activation=activation,
                state=state, offsets=offsets, post_solver=post_solver,
            )
            tr["round"] = r
            tr["total_gain"] = sum(report.gain.values())
            history.append(tr)
            _verify(state, "slack")
    deficient = [v for v in state.uncolored() if _deficit(state, v) > 0]
    return deficient, history


def _finish_d1lc(g, state, rng, stages, retries):
    def attempt(child):
        s = greedy_d1lc(g, state.copy(), child)
        _verify(s, "d1lc")
        return s, {}

    return _run_stage("d1lc", attempt, rng, retries, stages)


def color_triangle_free(
    g: Graph,
    gamma: float | None = None,
    rng=None,
    *,
    k: int | None = None,
    epsilon: float = 0.5,
    activation: float | None = None,
    slack_rounds: int | None = None,
    threshold="auto",
    branch: str = "auto",
    c_prime: float = C_PRIME,
    retries: int = 5,
    post_solver=None,
) -> PipelineResult:
    """Color a triangle-free graph with ``⌊γΔ⌋`` colors.

    ``gamma`` defaults to ``1 - 1e-7``; desk-scale runs override it together with
    ``k``, ``activation`` and ``slack_rounds``.  ``threshold`` is ``"auto"``
    (spread the remaining deficit over the remaining rounds), ``None`` (the
    analytic threshold) or a number.
    """
    rng = as_rng(rng)
    tri = g.find_triangle()
    if tri is not None:
        raise PreconditionError(f"graph contains the triangle {tri}")
    delta = g.max_degree
    n = g.n
    gamma_formula = 1 - 1e-7
    gamma_used = gamma_formula if gamma is None else gamma
    C = int(math.floor(gamma_used * delta))
    if C < 1:
        raise InfeasibleParametersError("γΔ < 1 leaves no colors")
    chosen = select_branch(delta, n) if branch == "auto" else branch
    if chosen not in ("small", "mid", "large"):
        raise PreconditionError(f"unknown branch {branch!r}")
    act = ACTIVATION if activation is None else activation
    rounds = 1 if slack_rounds is None else slack_rounds
    trace: dict = {
        "pipeline": "triangle-free",
        "n": n,
        "delta": delta,
        "branch": chosen,
        "gamma": {"formula": gamma_formula, "used": gamma_used},
        "num_colors": C,
        "activation": {"formula": ACTIVATION, "used": act},
        "slack_rounds": {"formula": 1, "used": rounds},
        "stages": [],
    }
    stages = trace["stages"]
    state = ColoringState.fresh(g, C)
    trace["needing_slack"] = sum(1 for v in range(n) if _deficit(state, v) > 0)

    if chosen == "mid":
        ll = _loglog(n)
        k_formula = 2 * epsilon**4 * delta / (math.log(delta) * ll * ll)
        k_used = k if k is not None else max(2, 2 * int(k_formula // 2))
        if k_used < 2 or k_used % 2:
            raise PreconditionError("k must be an even number ≥ 2")
        chi = C // k_used
        trace["k"] = {"formula": k_formula, "used": k_used}
        trace["chi"] = chi
        part = _run_stage(
            "partition",
            lambda child: (lambda p: (p, p.to_json()))(partition_vertices(g, k_used, epsilon, child, retries=1)),
            rng, retries, stages,
        )
        classes = part.classes
        pairs = [(classes[2 * j], classes[2 * j + 1], (2 * j * chi, (2 * j + 1) * chi)) for j in range(k_used // 2)]
        state = _slack_stage(g, state, pairs, chi, rng, rounds, act, threshold, c_prime, post_solver, retries, stages)
    elif chosen == "large":
        state = _single_round_stage(g, state, C, rng, act, c_prime, rounds, retries, stages)
    else:
        state = _small_stage(g, state, C, rng, act, retries, stages)
    state = _finish_d1lc(g, state, rng, stages, retries)
    final = scan_coloring(g, state.colors, max_colors=C)
    if not final:
        raise StageError("final", f"final coloring invalid: {final.violations[:3]}", trace)
    trace["final"] = final.stats
    return PipelineResult(state, C, trace, split_timings(trace))


def _slack_stage(g, state, pairs, chi, rng, rounds, act, threshold, c_prime, post_solver, retries, stages):
    def attempt(child):
        s = state.copy()
        deficient, history = _slack_rounds(
            g, s, pairs, chi, child, rounds=rounds, activation=act,
            threshold=threshold, c_prime=c_prime, post_solver=post_solver,
        )
        if deficient:
            raise StageError("slack", f"{len(deficient)} nodes still lack slack: {deficient[:10]}", history)
        return s, {"rounds": history}

    return _run_stage("slack", attempt, rng, retries, stages)


def _single_round_stage(g, state, C, rng, act, c_prime, rounds, retries, stages):
    """All colors, all nodes: repeated random slack generation without an LLL."""
    def attempt(child):
        s = state.copy()
        reports = []
        for _ in range(rounds):
            need = [v for v in s.uncolored() if _deficit(s, v) > 0]
            if not need:
                break
            s, rep = slack_generation(
                g, range(g.n), C, child, activation=act, c_prime=c_prime, state=s, report_nodes=need
            )
            reports.append(rep.to_json())
            _verify(s, "slack")
        deficient = [v for v in s.uncolored() if _deficit(s, v) > 0]
        if deficient:
            raise StageError("slack", f"{len(deficient)} nodes still lack slack: {deficient[:10]}", reports)
        return s, {"rounds": reports}

    return _run_stage("slack", attempt, rng, retries, stages)


def _small_stage(g, state, C, rng, act, retries, stages):
    """Slack generation as one LLL over all nodes, solved by parallel resampling."""
    def attempt(child):
        s = state.copy()
        need = {v: _deficit(s, v) for v in s.uncolored() if _deficit(s, v) > 0}
        if not need:
            return s, {"events": 0}
        free = {u for u in range(g.n) if s.colors[u] is None}
        variables = [_candidate_variable(u, s.palettes[u], act) for u in sorted(free)]
        events = [_gain_event(g, v, 0, free, s.colors, t, v) for v, t in sorted(need.items())]
        inst = LLLInstance(variables, events, g, "slack-small", p_bound=1)
        phi, tr = solve_cps(inst, rng=child, max_iters=10_000)
        if not tr.success:
            raise StageError("slack", "resampling did not converge", tr.to_json())
        candidates = {u: phi.get(u) for u in free if phi.get(u) != INACTIVE}
        try_color_round(s, candidates)
        _verify(s, "slack")
        deficient = [v for v in s.uncolored() if _deficit(s, v) > 0]
        if deficient:
            raise StageError("slack", f"{len(deficient)} nodes still lack slack", None)
        return s, {"events": len(events), "resample": tr.to_json()}

    return _run_stage("slack", attempt, rng, retries, stages)


def sparse_x_formula(delta: int, n: int) -> float:
    """``log Δ · log log n / 6``."""
    return math.log2(delta) * _loglog(n) / 6


def color_sparse(
    g: Graph,
    epsilon: float,
    rng=None,
    *,
    x: int | None = None,
    mu: float | None = None,
    chi: int | None = None,
    activation: float | None = None,
    slack_rounds: int | None = None,
    threshold="auto",
    branch: str = "auto",
    c_prime: float = C_PRIME,
    retries: int = 5,
    post_solver=None,
) -> PipelineResult:
    """Color a graph of sparsity ``ζ ≥ ε²Δ`` with ``Δ − x`` colors.

    The mid-range branch samples two disjoint sparsity-preserving sets, generates
    slack from both with disjoint halves of a ``2χ`` palette, then finishes with a
    (degree+1)-list coloring.
    """
    rng = as_rng(rng)
    delta = g.max_degree
    n = g.n
    if delta < 2:
        raise PreconditionError("sparse coloring needs Δ ≥ 2")
    need_sparsity = epsilon * epsilon * delta
    dense = [v for v in range(n) if local_sparsity(g, v, delta) < need_sparsity]
    if dense:
        raise PreconditionError(f"{len(dense)} nodes have sparsity below ε²Δ = {need_sparsity:g}: {dense[:10]}")
    x_formula = sparse_x_formula(delta, n)
    x_used = int(math.floor(x_formula)) if x is None else int(x)
    C = delta - x_used
    if C < 1:
        raise InfeasibleParametersError("Δ − x < 1 leaves no colors")
    chosen = select_branch(delta, n) if branch == "auto" else branch
    if chosen not in ("small", "mid", "large"):
        raise PreconditionError(f"unknown branch {branch!r}")
    act = ACTIVATION if activation is None else activation
    rounds = 1 if slack_rounds is None else slack_rounds
    trace: dict = {
        "pipeline": "sparse",
        "n": n,
        "delta": delta,
        "branch": chosen,
        "epsilon": epsilon,
        "x": {"formula": x_formula, "used": x_used},
        "num_colors": C,
        "activation": {"formula": ACTIVATION, "used": act},
        "slack_rounds": {"formula": 1, "used": rounds},
        "stages": [],
    }
    stages = trace["stages"]
    state = ColoringState.fresh(g, C)
    D = [v for v in range(n) if g.degree(v) >= C]
    trace["needing_slack"] = len(D)

    if chosen == "mid":
        alpha1 = epsilon * epsilon / 2
        alpha2 = epsilon * epsilon / 4

        def sample(child):
            S1, t1 = dss_sample(g, D, range(n), alpha1, mu, child)
            rest = set(range(n)) - S1
            # the second sample keeps ε²Δ²/4 non-edges only when Δs ≪ ε²Δ; otherwise
            # fall back to the largest α the remaining neighborhoods support
            floor = min((_non_edges_among(g, [w for w in g.neighbors(v) if w in rest]) for v in D), default=0)
            a2 = min(alpha2, floor / (delta * delta))
            if a2 <= 0:
                raise StageError("dss", "a node of D keeps no non-edges outside S1", None)
            S2, t2 = dss_sample(g, D, rest, a2, mu, child)
            info = {"S1": t1.to_json(), "S2": t2.to_json(), "sizes": [len(S1), len(S2)]}
            info["alpha"] = {"formula": [alpha1, alpha2], "used": [alpha1, a2]}
            return (S1, S2), info

        S1, S2 = _run_stage("dss", sample, rng, retries, stages)
        delta_s = max(
            max((sum(1 for w in g.neighbors(v) if w in S) for v in range(n)), default=0) for S in (S1, S2)
        )
        chi_formula = delta_s
        chi_used = min(chi_formula, C // 2) if chi is None else chi
        if 2 * chi_used > C:
            raise InfeasibleParametersError(f"2χ = {2 * chi_used} exceeds the {C} available colors")
        trace["delta_s"] = delta_s
        trace["chi"] = {"formula": chi_formula, "used": chi_used}
        pairs = [(sorted(S1), sorted(S2), (0, chi_used))]
        state = _slack_stage(g, state, pairs, chi_used, rng, rounds, act, threshold, c_prime, post_solver, retries, stages)
    elif chosen == "large":
        state = _single_round_stage(g, state, C, rng, act, c_prime, rounds, retries, stages)
    else:
        state = _small_stage(g, state, C, rng, act, retries, stages)
    state = _finish_d1lc(g, state, rng, stages, retries)
    final = scan_coloring(g, state.colors, max_colors=C)
    if not final:
        raise StageError("final", f"final coloring invalid: {final.violations[:3]}", trace)
    trace["final"] = final.stats
    return PipelineResult(state, C, trace, split_timings(trace))
