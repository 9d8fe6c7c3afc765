"""Undirected graphs, union-find and minimum spanning forests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .partition import SpanningForest

__all__ = [
    "Graph",
    "UnionFind",
    "load_graph",
    "minimum_spanning_forest",
    "sample_forest_prior",
    "connected_components",
]


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path compression and union by rank."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        """Merge the sets holding `a` and `b`; False if they were already joined."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def connected_components(p: int, edges: Iterable[tuple[int, int]]) -> np.ndarray:
    """Component label per vertex, numbered by smallest member vertex."""
    uf = UnionFind(p)
    for u, v in edges:
        uf.union(int(u), int(v))
    labels = np.empty(p, dtype=np.int64)
    root_label: dict[int, int] = {}
    for i in range(p):
        r = uf.find(i)
        if r not in root_label:
            root_label[r] = len(root_label)
        labels[i] = root_label[r]
    return labels


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable undirected simple graph on vertices ``0..p-1``.

    Attributes
    ----------
    p : int
        Vertex count.
    edges : ndarray of shape (m, 2)
        Edge list with ``u < v`` in every row, sorted lexicographically.
    component_label : ndarray of shape (p,)
        Connected-component id per vertex.
    n_c : int
        Number of connected components.
    """

    p: int
    edges: np.ndarray
    component_label: np.ndarray
    n_c: int
    adjacency: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]


def load_graph(edge_list: Iterable[Sequence[int]], p: int) -> Graph:
    """Build a `Graph` from vertex pairs, collapsing duplicates.

    Raises
    ------
    ValueError
        If ``p <= 0``, a vertex index is outside ``[0, p)``, or a self-loop
        is present.
    """
    if p <= 0:
        raise ValueError(f"vertex count must be positive, got {p}")
    seen: set[tuple[int, int]] = set()
    for pair in edge_list:
        u, v = (int(x) for x in pair)
        if not (0 <= u < p and 0 <= v < p):
            raise ValueError(f"edge ({u}, {v}) has a vertex outside [0, {p})")
        if u == v:
            raise ValueError(f"self-loop at vertex {u}")
        seen.add((min(u, v), max(u, v)))
    edges = np.array(sorted(seen), dtype=np.int64).reshape(-1, 2)
    adj: list[list[int]] = [[] for _ in range(p)]
    for u, v in edges:
        adj[u].append(int(v))
        adj[v].append(int(u))
    labels = connected_components(p, edges)
    n_c = int(labels.max()) + 1
    labels.setflags(write=False)
    edges.setflags(write=False)
    return Graph(p, edges, labels, n_c, tuple(tuple(a) for a in adj))


def _kruskal(p: int, edges: np.ndarray, weights: np.ndarray, size: int) -> np.ndarray:
    # stable sort: equal weights fall back to the smaller edge index
    order = np.argsort(weights, kind="stable")
    uf = UnionFind(p)
    chosen = []
    pairs = edges.tolist()
    for i in order.tolist():
        u, v = pairs[i]
        if uf.union(u, v):
            chosen.append(i)
            if len(chosen) == size:
                break
    return np.sort(np.array(chosen, dtype=np.int64))


def minimum_spanning_forest(g: Graph, w) -> "SpanningForest":
    """Kruskal minimum spanning forest of `g` under edge weights `w`.

    The returned forest has no cut edges.
    """
    from .partition import SpanningForest

    w = np.asarray(w, dtype=float)
    if w.shape != (g.m,):
        raise ValueError(f"expected {g.m} edge weights, got shape {w.shape}")
    idx = _kruskal(g.p, g.edges, w, g.p - g.n_c)
    return SpanningForest(g.edges[idx].copy(), np.zeros(len(idx), dtype=bool), g.p)


def sample_forest_prior(g: Graph, rng: np.random.Generator) -> "SpanningForest":
    """Random minimum spanning forest under iid Uniform(0, 1) edge weights."""
    return minimum_spanning_forest(g, rng.uniform(size=g.m))
