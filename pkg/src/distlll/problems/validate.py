"""Independent validity scanners.

These read only the graph and the raw output (colors, arcs, node sets); they
never consult solver state, so they can also check colorings produced elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from ..graph import Graph


@dataclass
class ScanResult:
    name: str
    ok: bool
    violations: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok

    def to_json(self) -> dict:
        return {"name": self.name, "ok": self.ok, "violations": self.violations[:20], "stats": self.stats}


def _as_list(g: Graph, colors) -> list:
    if isinstance(colors, Mapping):
        return [colors.get(v, colors.get(str(v))) for v in range(g.n)]
    colors = list(colors)
    if len(colors) != g.n:
        raise ValueError(f"expected {g.n} colors, got {len(colors)}")
    return colors


def scan_coloring(g: Graph, colors, max_colors: int | None = None, complete: bool = True) -> ScanResult:
    """Properness (colored endpoints differ), completeness, and the color budget."""
    colors = _as_list(g, colors)
    violations = []
    for u, v in g.edges():
        if colors[u] is not None and colors[u] == colors[v]:
            violations.append(["conflict", u, v, colors[u]])
    missing = [v for v in range(g.n) if colors[v] is None]
    if complete and missing:
        violations.append(["uncolored", missing[:20], len(missing)])
    used = {c for c in colors if c is not None}
    if max_colors is not None:
        outside = sorted(c for c in used if not (isinstance(c, int) and 0 <= c < max_colors))
        if outside:
            violations.append(["outside-budget", outside[:20], max_colors])
    stats = {"num_colors_used": len(used), "uncolored": len(missing), "max_colors": max_colors}
    return ScanResult("coloring", not violations, violations, stats)


def scan_orientation(g: Graph, arcs: Iterable[Sequence[int]]) -> ScanResult:
    """Every edge oriented exactly once and every node has an outgoing arc."""
    arcs = [tuple(a) for a in arcs]
    violations = []
    seen = set()
    out_deg = [0] * g.n
    for u, v in arcs:
        key = (min(u, v), max(u, v))
        if not g.has_edge(u, v):
            violations.append(["not-an-edge", u, v])
            continue
        if key in seen:
            violations.append(["oriented-twice", u, v])
        seen.add(key)
        out_deg[u] += 1
    if len(seen) != g.num_edges:
        violations.append(["unoriented-edges", g.num_edges - len(seen)])
    sinks = [v for v in range(g.n) if out_deg[v] == 0]
    if sinks:
        violations.append(["sinks", sinks[:20], len(sinks)])
    return ScanResult("orientation", not violations, violations, {"min_out_degree": min(out_deg, default=0)})


def scan_degree_bounds(g: Graph, S: Iterable[int], low, high, nodes: Iterable[int] | None = None) -> ScanResult:
    """``low ≤ |N(v) ∩ S| ≤ high`` for every scanned node."""
    S = set(S)
    nodes = range(g.n) if nodes is None else nodes
    violations = []
    counts = []
    for v in nodes:
        c = sum(1 for w in g.neighbors(v) if w in S)
        counts.append(c)
        if not low <= c <= high:
            violations.append([v, c])
    stats = {"min": min(counts, default=None), "max": max(counts, default=None), "low": float(low), "high": float(high)}
    return ScanResult("degree-bounds", not violations, violations, stats)


def _non_edges(g: Graph, nodes: Sequence[int]) -> int:
    nodes = list(nodes)
    inside = set(nodes)
    edges = sum(1 for u in nodes for w in g.neighbors(u) if w in inside) // 2
    return len(nodes) * (len(nodes) - 1) // 2 - edges


def scan_dss(g: Graph, X: Iterable[int], S: Iterable[int], mu, alpha) -> ScanResult:
    """Both sampling guarantees: at most ``4μ`` S-neighbors and ``≥ αμ²/2`` non-edges among them."""
    S = set(S)
    violations = []
    worst_deg, worst_ne = 0, None
    for v in X:
        inside = [w for w in g.neighbors(v) if w in S]
        ne = _non_edges(g, inside)
        worst_deg = max(worst_deg, len(inside))
        worst_ne = ne if worst_ne is None else min(worst_ne, ne)
        if len(inside) > 4 * mu:
            violations.append(["degree", v, len(inside)])
        if ne < alpha * mu * mu / 2:
            violations.append(["non-edges", v, ne])
    stats = {"max_degree_into_S": worst_deg, "min_non_edges": worst_ne, "size": len(S)}
    return ScanResult("dss", not violations, violations, stats)


def scan_partition(g: Graph, labels: Sequence[int], k: int, epsilon) -> ScanResult:
    """Every node has ``d(v)/k ± εΔ/k`` neighbors in every class."""
    delta = g.max_degree
    tol = epsilon * delta / k
    violations = []
    worst = 0.0
    if len(labels) != g.n or any(not 0 <= lab < k for lab in labels):
        return ScanResult("partition", False, [["bad-labels"]], {})
    for v in range(g.n):
        counts = [0] * k
        for w in g.neighbors(v):
            counts[labels[w]] += 1
        for i, c in enumerate(counts):
            dev = abs(c - g.degree(v) / k)
            worst = max(worst, dev)
            if dev > tol:
                violations.append([v, i, c])
    return ScanResult("partition", not violations, violations, {"max_deviation": worst, "tolerance": float(tol)})


def scan_palettes(g: Graph, colors, palettes) -> ScanResult:
    """Uncolored nodes' palettes exclude every color held by a neighbor."""
    colors = _as_list(g, colors)
    violations = []
    for v in range(g.n):
        if colors[v] is not None:
            continue
        for w in g.neighbors(v):
            if colors[w] is not None and colors[w] in palettes[v]:
                violations.append([v, w, colors[w]])
    return ScanResult("palettes", not violations, violations, {})


def slack_gain_from_colors(g: Graph, colors, v: int, among: Iterable[int] | None = None) -> int:
    """Colored neighbors minus distinct colors among them: the colors saved at ``v``."""
    colors = _as_list(g, colors) if not isinstance(colors, list) else colors
    if among is None:
        nbrs = g.neighbors(v)
    else:
        among = set(among)
        nbrs = [w for w in g.neighbors(v) if w in among]
    held = [colors[w] for w in nbrs if colors[w] is not None]
    return len(held) - len(set(held))
