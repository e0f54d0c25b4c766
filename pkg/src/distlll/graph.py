"""Undirected simple graphs, seeded generators and neighborhood sparsity counts."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import networkx as nx
import numpy as np

from .errors import InfeasibleParametersError, PreconditionError

FAMILIES = ("random-regular", "random-bipartite-regular", "erdos-renyi", "sparse-neighborhood")


class Graph:
    """Immutable simple undirected graph on nodes ``0..n-1``.

    Neighbor lists are kept sorted so every derived quantity is deterministic.
    """

    __slots__ = ("n", "adjacency", "max_degree", "_sets")

    def __init__(self, n: int, edges: Iterable[tuple[int, int]] = ()):
        if n < 0:
            raise PreconditionError("node count must be non-negative")
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise PreconditionError(f"edge ({u}, {v}) outside node range 0..{n - 1}")
            if u == v:
                raise PreconditionError(f"self-loop at node {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        self.n = n
        self.adjacency: tuple[tuple[int, ...], ...] = tuple(tuple(sorted(s)) for s in nbrs)
        self.max_degree = max((len(a) for a in self.adjacency), default=0)
        self._sets = tuple(frozenset(a) for a in self.adjacency)

    # -- basic queries -------------------------------------------------
    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def neighbor_set(self, v: int) -> frozenset[int]:
        return self._sets[v]

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_edge(self, u: int, v: int) -> bool:
        return v in self._sets[u]

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def __eq__(self, other) -> bool:
        return isinstance(other, Graph) and self.n == other.n and self.adjacency == other.adjacency

    def __hash__(self) -> int:
        return hash((self.n, self.adjacency))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, m={self.num_edges}, max_degree={self.max_degree})"

    # -- traversal -----------------------------------------------------
    def bfs_distances(self, source: int, limit: int | None = None) -> dict[int, int]:
        """Hop distances from ``source``, optionally truncated at ``limit`` hops."""
        dist = {source: 0}
        queue = deque([source])
        while queue:
            u = queue.popleft()
            du = dist[u]
            if limit is not None and du >= limit:
                continue
            for w in self.adjacency[u]:
                if w not in dist:
                    dist[w] = du + 1
                    queue.append(w)
        return dist

    def ball(self, sources: Iterable[int], radius: int) -> set[int]:
        """All nodes within ``radius`` hops of some source."""
        dist = {s: 0 for s in sources}
        queue = deque(dist)
        while queue:
            u = queue.popleft()
            if dist[u] >= radius:
                continue
            for w in self.adjacency[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return set(dist)

    def components(self, nodes: Iterable[int] | None = None) -> list[list[int]]:
        """Connected components of the subgraph induced on ``nodes`` (default: all)."""
        pool = set(range(self.n)) if nodes is None else set(nodes)
        seen: set[int] = set()
        out = []
        for s in sorted(pool):
            if s in seen:
                continue
            comp = [s]
            seen.add(s)
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for w in self.adjacency[u]:
                    if w in pool and w not in seen:
                        seen.add(w)
                        comp.append(w)
                        queue.append(w)
            out.append(sorted(comp))
        return out

    def subgraph(self, nodes: Sequence[int]) -> tuple["Graph", list[int]]:
        """Induced subgraph relabelled to ``0..len(nodes)-1`` plus the label map."""
        labels = sorted(set(nodes))
        index = {v: i for i, v in enumerate(labels)}
        edges = [
            (index[u], index[w])
            for u in labels
            for w in self.adjacency[u]
            if w in index and u < w
        ]
        return Graph(len(labels), edges), labels

    def find_triangle(self) -> tuple[int, int, int] | None:
        """Return some triangle ``(a, b, c)`` with ``a < b < c`` or ``None``."""
        for u in range(self.n):
            higher = [w for w in self.adjacency[u] if w > u]
            for i, v in enumerate(higher):
                sv = self._sets[v]
                for w in higher[i + 1:]:
                    if w in sv:
                        return (u, v, w)
        return None

    # -- serialization -------------------------------------------------
    def to_edgelist(self) -> str:
        lines = [f"{self.n} {self.num_edges}"]
        lines += [f"{u} {v}" for u, v in self.edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text: str) -> "Graph":
        rows = [ln.split() for ln in text.splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 2:
            raise PreconditionError("edge list must start with a 'n m' header line")
        n, m = int(rows[0][0]), int(rows[0][1])
        body = rows[1:]
        if len(body) != m:
            raise PreconditionError(f"header announces {m} edges but {len(body)} follow")
        seen = set()
        edges = []
        for lineno, row in enumerate(body, start=2):
            if len(row) != 2:
                raise PreconditionError(f"line {lineno}: expected 'u v'")
            u, v = int(row[0]), int(row[1])
            key = (min(u, v), max(u, v))
            if key in seen:
                raise PreconditionError(f"line {lineno}: duplicate edge {key}")
            seen.add(key)
            edges.append((u, v))
        return cls(n, edges)

    def to_networkx(self) -> nx.Graph:
        h = nx.Graph()
        h.add_nodes_from(range(self.n))
        h.add_edges_from(self.edges())
        return h


def load_edgelist(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return Graph.from_edgelist(fh.read())


def save_edgelist(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(g.to_edgelist())


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class GraphGenSpec:
    family: str
    n: int
    degree: int | None = None
    p: float | None = None
    seed: int = 0
    # sparse-neighborhood only: number of same-side edges per node and the
    # sparsity floor below which a node's same-side edges are dropped.
    intra_degree: int | None = None
    target_zeta: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"family": self.family, "n": self.n, "seed": self.seed}
        for key in ("degree", "p", "intra_degree", "target_zeta"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


def generate(spec: GraphGenSpec) -> Graph:
    """Build a graph of the requested family; identical specs give identical graphs."""
    if spec.family not in FAMILIES:
        raise InfeasibleParametersError(f"unknown family {spec.family!r}; expected one of {FAMILIES}")
    if spec.n < 2:
        raise InfeasibleParametersError("n must be at least 2")
    rng = np.random.default_rng(spec.seed)
    if spec.family == "erdos-renyi":
        if spec.p is None or not 0.0 <= spec.p <= 1.0:
            raise InfeasibleParametersError("erdos-renyi needs an edge probability p in [0, 1]")
        return _erdos_renyi(spec.n, spec.p, rng)
    if spec.degree is None or spec.degree < 0:
        raise InfeasibleParametersError(f"{spec.family} needs a non-negative degree")
    if spec.degree >= spec.n:
        raise InfeasibleParametersError(f"degree {spec.degree} must be below n = {spec.n}")
    if spec.family == "random-regular":
        return _random_regular(spec.n, spec.degree, rng)
    if spec.family == "random-bipartite-regular":
        return _random_bipartite_regular(spec.n, spec.degree, rng)
    return _sparse_neighborhood(spec, rng)


def _erdos_renyi(n: int, p: float, rng: np.random.Generator) -> Graph:
    iu, ju = np.triu_indices(n, k=1)
    keep = rng.random(iu.size) < p
    return Graph(n, zip(iu[keep].tolist(), ju[keep].tolist()))


def _random_regular(n: int, d: int, rng: np.random.Generator) -> Graph:
    if (n * d) % 2:
        raise InfeasibleParametersError(f"n * degree must be even (got {n} * {d})")
    h = nx.random_regular_graph(d, n, seed=int(rng.integers(2**32)))
    return Graph(n, h.edges())


def _bipartite_matchings(left: int, d: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Union of ``d`` edge-disjoint random perfect matchings between two sides of size ``left``."""
    taken: list[set[int]] = [set() for _ in range(left)]
    edges = []
    for _ in range(d):
        perm = rng.permutation(left)
        for _attempt in range(50 * left):
            bad = [i for i in range(left) if int(perm[i]) in taken[i]]
            if not bad:
                break
            for i in bad:
                j = int(rng.integers(left))
                if int(perm[j]) not in taken[i] and int(perm[i]) not in taken[j]:
                    perm[i], perm[j] = perm[j], perm[i]
        else:  # pragma: no cover - practically unreachable for d <= left / 2
            raise InfeasibleParametersError("could not complete an edge-disjoint matching")
        for i in range(left):
            taken[i].add(int(perm[i]))
            edges.append((i, left + int(perm[i])))
    return edges


def _random_bipartite_regular(n: int, d: int, rng: np.random.Generator) -> Graph:
    if n % 2:
        raise InfeasibleParametersError("random-bipartite-regular needs an even n")
    if d > n // 2:
        raise InfeasibleParametersError(f"degree {d} exceeds the side size {n // 2}")
    return Graph(n, _bipartite_matchings(n // 2, d, rng))


def _sparse_neighborhood(spec: GraphGenSpec, rng: np.random.Generator) -> Graph:
    n, d = spec.n, spec.degree
    if n % 2:
        raise InfeasibleParametersError("sparse-neighborhood needs an even n")
    half = n // 2
    intra = spec.intra_degree if spec.intra_degree is not None else max(0, d // 8)
    if intra > d:
        raise InfeasibleParametersError("intra_degree cannot exceed the degree")
    if (half * intra) % 2:
        raise InfeasibleParametersError("(n/2) * intra_degree must be even")
    if d - intra > half:
        raise InfeasibleParametersError("bipartite part does not fit into the sides")
    edges = _bipartite_matchings(half, d - intra, rng)
    intra_edges = []
    for offset in (0, half):
        if intra:
            h = nx.random_regular_graph(intra, half, seed=int(rng.integers(2**32)))
            intra_edges += [(offset + u, offset + v) for u, v in h.edges()]
    g = Graph(n, edges + intra_edges)
    if spec.target_zeta is None:
        return g
    # Drop same-side edges around nodes whose neighborhood is too dense.
    target = Fraction(spec.target_zeta).limit_denominator(10**6)
    same_side = {(min(u, v), max(u, v)) for u, v in intra_edges}
    for _ in range(n):
        low = [v for v in range(n) if local_sparsity(g, v, delta=d) < target]
        if not low:
            return g
        drop = set()
        for v in low:
            for w in g.neighbors(v):
                drop.add((min(v, w), max(v, w)))
                for x in g.neighbors(w):
                    if x in g.neighbor_set(v):
                        drop.add((min(w, x), max(w, x)))
        drop &= same_side
        if not drop:
            raise InfeasibleParametersError("cannot reach the requested sparsity floor")
        same_side -= drop
        g = Graph(n, edges + sorted(same_side))
    raise InfeasibleParametersError("sparsity repair did not converge")


# ---------------------------------------------------------------------------
# neighborhood counts


def edges_within(g: Graph, nodes: Iterable[int]) -> int:
    """Number of edges of ``g`` with both endpoints in ``nodes``."""
    members = set(nodes)
    return sum(len(g.neighbor_set(u) & members) for u in members) // 2


def non_edges_in_set(g: Graph, v: int, S: Iterable[int]) -> int:
    """Count unordered non-adjacent pairs inside ``N(v) ∩ S``."""
    inside = g.neighbor_set(v) & set(S)
    t = len(inside)
    return t * (t - 1) // 2 - edges_within(g, inside)


def local_sparsity(g: Graph, v: int, delta: int | None = None) -> Fraction:
    """Exact ``(C(Δ, 2) - m(N(v))) / Δ`` with ``Δ`` the maximum degree."""
    delta = g.max_degree if delta is None else delta
    if delta < 1:
        raise PreconditionError("local sparsity needs a maximum degree of at least 1")
    return Fraction(delta * (delta - 1) // 2 - edges_within(g, g.neighbors(v)), delta)


def count_triangles_bruteforce(g: Graph) -> int:
    """Triangle count by scanning every node triple (small graphs only)."""
    return sum(
        1
        for a, b, c in itertools.combinations(range(g.n), 3)
        if g.has_edge(a, b) and g.has_edge(b, c) and g.has_edge(a, c)
    )
