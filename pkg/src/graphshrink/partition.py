"""Contiguous partitions induced by cutting spanning-forest edges."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .graph import Graph, UnionFind, minimum_spanning_forest

__all__ = [
    "SpanningForest",
    "Partition",
    "Projection",
    "induce_partition",
    "projection_matrix",
    "split",
    "merge",
    "resample_forest_compatible",
    "is_contiguous",
    "canonical_labels",
]


def canonical_labels(labels) -> np.ndarray:
    """Relabel clusters 0, 1, ... in order of their smallest member vertex."""
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse.ravel()]


@dataclass(eq=False)
class SpanningForest:
    """Spanning forest edges plus a flag per edge marking the cut set.

    Attributes
    ----------
    forest_edges : ndarray of shape (p - n_c, 2)
    cut_flags : ndarray of bool, shape (p - n_c,)
    p : int
    """

    forest_edges: np.ndarray
    cut_flags: np.ndarray
    p: int

    @property
    def n_cut(self) -> int:
        return int(self.cut_flags.sum())

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per vertex, ``(neighbour, forest edge index)`` pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.p)]
        for i, (u, v) in enumerate(self.forest_edges.tolist()):
            adj[u].append((v, i))
            adj[v].append((u, i))
        return adj

    def with_cuts(self, cut_flags: np.ndarray) -> "SpanningForest":
        """Same forest with a different cut set; the adjacency cache is shared."""
        out = SpanningForest(self.forest_edges, cut_flags, self.p)
        if "adjacency" in self.__dict__:
            out.__dict__["adjacency"] = self.__dict__["adjacency"]
        return out


@dataclass(eq=False)
class Partition:
    """Canonically labelled vertex partition.

    ``labels[j]`` is the cluster of vertex ``j``; clusters are numbered by
    their smallest vertex so that two equal partitions have equal labels.
    """

    labels: np.ndarray
    K: int
    cluster_sizes: np.ndarray

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        lab = canonical_labels(labels)
        sizes = np.bincount(lab)
        return cls(lab, len(sizes), sizes)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.labels.tobytes())

    @property
    def p(self) -> int:
        return len(self.labels)

    def clusters(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(self.cluster_sizes)[:-1]
        return np.split(order, bounds)

    def to_line(self) -> str:
        return ",".join(str(int(x)) for x in self.labels)


@dataclass(eq=False)
class Projection:
    """Sparse K x p matrix with ``1/sqrt(|C_k|)`` on the members of cluster k."""

    members: list[np.ndarray]
    scale: np.ndarray
    p: int

    @property
    def K(self) -> int:
        return len(self.members)

    def toarray(self) -> np.ndarray:
        phi = np.zeros((self.K, self.p))
        for k, idx in enumerate(self.members):
            phi[k, idx] = self.scale[k]
        return phi

    def reduce(self, beta) -> np.ndarray:
        """Apply Phi to a p-vector (or to the columns of an n x p matrix)."""
        beta = np.asarray(beta, dtype=float)
        if beta.ndim == 1:
            return np.array([beta[idx].sum() * s for idx, s in zip(self.members, self.scale)])
        return np.column_stack([beta[:, idx].sum(axis=1) * s for idx, s in zip(self.members, self.scale)])

    def expand(self, beta_tilde) -> np.ndarray:
        """Apply Phi transpose, mapping K reduced coefficients back to p."""
        out = np.empty(self.p)
        for idx, s, b in zip(self.members, self.scale, np.asarray(beta_tilde, dtype=float)):
            out[idx] = b * s
        return out


def induce_partition(f: SpanningForest, g: Graph | None = None) -> Partition:
    """Partition whose clusters are the pieces of `f` after removing its cut edges."""
    if g is not None and g.p != f.p:
        raise ValueError("forest and graph disagree on the vertex count")
    uf = UnionFind(f.p)
    for (u, v), cut in zip(f.forest_edges.tolist(), f.cut_flags.tolist()):
        if not cut:
            uf.union(u, v)
    return Partition.from_labels([uf.find(i) for i in range(f.p)])


def projection_matrix(pi: Partition) -> Projection:
    members = pi.clusters()
    return Projection(members, 1.0 / np.sqrt(pi.cluster_sizes.astype(float)), pi.p)


def split(f: SpanningForest, edge_idx: int) -> SpanningForest:
    """Cut forest edge `edge_idx`, raising the induced cluster count by one."""
    if f.cut_flags[edge_idx]:
        raise ValueError(f"forest edge {edge_idx} is already cut")
    cut = f.cut_flags.copy()
    cut[edge_idx] = True
    return f.with_cuts(cut)


def merge(f: SpanningForest, cut_idx: int) -> SpanningForest:
    """Restore cut forest edge `cut_idx`, fusing the two clusters it separates."""
    if not f.cut_flags[cut_idx]:
        raise ValueError(f"forest edge {cut_idx} is not cut")
    cut = f.cut_flags.copy()
    cut[cut_idx] = False
    return f.with_cuts(cut)


def resample_forest_compatible(g: Graph, pi: Partition, rng: np.random.Generator) -> SpanningForest:
    """Draw a fresh spanning forest that induces `pi` once its between-cluster edges are cut.

    Every edge gets an iid Uniform(0, 1) weight and between-cluster edges are
    shifted up by one, so Kruskal finishes a random spanning tree inside each
    cluster before it links clusters together.
    """
    lab = pi.labels
    between = lab[g.edges[:, 0]] != lab[g.edges[:, 1]]
    w = rng.uniform(size=g.m) + between
    f = minimum_spanning_forest(g, w)
    cut = lab[f.forest_edges[:, 0]] != lab[f.forest_edges[:, 1]]
    return f.with_cuts(cut)


def is_contiguous(g: Graph, labels) -> bool:
    """True if every cluster of `labels` induces a connected subgraph of `g`."""
    labels = np.asarray(labels)
    seen = np.zeros(g.p, dtype=bool)
    done_clusters = set()
    for start in range(g.p):
        if seen[start]:
            continue
        c = labels[start]
        if c in done_clusters:
            return False
        done_clusters.add(c)
        seen[start] = True
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in g.adjacency[v]:
                if not seen[w] and labels[w] == c:
                    seen[w] = True
                    queue.append(w)
    return True
