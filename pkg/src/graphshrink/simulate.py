"""Synthetic lattice regression problems with Gaussian-process predictors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .graph import Graph, UnionFind, load_graph
from .model import Dataset
from .partition import Partition

__all__ = [
    "SimConfig",
    "SyntheticData",
    "lattice_graph",
    "lattice_coords",
    "paper_like_beta",
    "partition_of",
    "gp_predictors",
    "generate_synthetic",
]

# (row, first column, last column) runs of four irregular blobs on a 30 x 30 grid
_BLOBS = (
    (8.0, [(3, 4, 7), (4, 3, 8), (5, 3, 9), (6, 4, 9), (7, 5, 10), (8, 6, 9), (9, 7, 9)]),
    (-8.0, [(4, 19, 26), (5, 19, 26), (6, 23, 26), (7, 23, 26), (8, 23, 26), (9, 22, 27), (10, 22, 27)]),
    (10.0, [(18, 6, 7), (19, 5, 8), (20, 2, 11), (21, 2, 11), (22, 5, 8), (23, 6, 7)]),
    (6.0, [(17, 24, 24), (18, 23, 25), (19, 22, 26), (20, 21, 27), (21, 20, 28), (22, 19, 29)]),
)
PAPER_LIKE_SIDE = 30


@dataclass(frozen=True)
class SimConfig:
    lattice_side: int = 30
    n_train: int = 100
    n_test: int = 1000
    theta: float = 0.0
    snr: float = 4.0
    true_beta_spec: str = "paper-like"
    seed: int = 0

    def __post_init__(self):
        if self.lattice_side < 2:
            raise ValueError("lattice_side must be at least 2")
        if self.n_train < 2 or self.n_test < 0:
            raise ValueError("n_train must be at least 2 and n_test nonnegative")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if not self.theta >= 0:
            raise ValueError("theta must be nonnegative")


@dataclass(eq=False)
class SyntheticData:
    graph: Graph
    data: Dataset
    beta: np.ndarray
    partition: Partition
    X_test: np.ndarray
    y_test: np.ndarray
    sigma2: float

    @property
    def X_train(self) -> np.ndarray:
        return self.data.X


def lattice_graph(side: int) -> Graph:
    """``side x side`` grid with 4-neighbour edges; vertex ``r * side + c``."""
    idx = np.arange(side * side).reshape(side, side)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return load_graph(np.vstack([horiz, vert]), side * side)


def lattice_coords(side: int) -> np.ndarray:
    r, c = np.divmod(np.arange(side * side), side)
    return np.column_stack([r, c]).astype(float)


def paper_like_beta(side: int = PAPER_LIKE_SIDE) -> np.ndarray:
    """Four irregular constant blobs on a zero background, 84% zeros on a 30 x 30 grid.

    On other grid sizes the blobs are rescaled to the new side length, so
    the sparsity is only approximately preserved.
    """
    img = np.zeros((side, side))
    scale = side / PAPER_LIKE_SIDE
    for value, runs in _BLOBS:
        for row, c0, c1 in runs:
            if scale == 1.0:
                img[row, c0:c1 + 1] = value
                continue
            r0, r1 = int(math.floor(row * scale)), int(math.floor((row + 1) * scale))
            a, b = int(math.floor(c0 * scale)), int(math.floor((c1 + 1) * scale))
            img[r0:max(r1, r0 + 1), a:max(b, a + 1)] = value
    return img.ravel()


def partition_of(beta, g: Graph) -> Partition:
    """Contiguous pieces of equal value: components of the edges whose ends agree."""
    beta = np.asarray(beta)
    uf = UnionFind(g.p)
    for u, v in g.edges.tolist():
        if beta[u] == beta[v]:
            uf.union(u, v)
    return Partition.from_labels([uf.find(i) for i in range(g.p)])


def gp_predictors(n: int, coords: np.ndarray, theta: float, rng: np.random.Generator,
                  jitter: float = 1e-10) -> np.ndarray:
    """Rows from a zero-mean GP with kernel ``exp(-d / theta)``; ``theta = 0`` gives iid N(0, 1)."""
    p = len(coords)
    Z = rng.standard_normal((n, p))
    if theta == 0:
        return Z
    cov = np.exp(-cdist(coords, coords) / theta)
    cov[np.diag_indices(p)] += jitter
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"GP kernel is not positive definite after jitter {jitter}") from exc
    return Z @ L.T


def _load_beta(spec: str, p: int) -> np.ndarray:
    from .io import read_vector

    beta = read_vector(Path(spec))
    if len(beta) != p:
        raise ValueError(f"true beta file has {len(beta)} entries, lattice has {p}")
    return beta


def generate_synthetic(cfg: SimConfig, rng: Optional[np.random.Generator] = None) -> SyntheticData:
    """Lattice graph, standardized GP design, response at the requested SNR, and a test set.

    Training and test rows are drawn together; columns are scaled to unit
    norm on the training rows and the same scaling is applied to the test
    rows.  ``sigma^2`` is the sample variance of ``X beta`` over the
    training rows divided by the SNR.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    side = cfg.lattice_side
    g = lattice_graph(side)
    if cfg.true_beta_spec == "paper-like":
        beta = paper_like_beta(side)
    else:
        beta = _load_beta(cfg.true_beta_spec, g.p)
    X_all = gp_predictors(cfg.n_train + cfg.n_test, lattice_coords(side), cfg.theta, rng)
    X_train, X_test = X_all[:cfg.n_train], X_all[cfg.n_train:]
    norms = np.linalg.norm(X_train, axis=0)
    X_train = X_train / norms
    X_test = X_test / norms
    signal = X_train @ beta
    var_signal = float(np.var(signal, ddof=1))
    sigma2 = var_signal / cfg.snr if var_signal > 0 else 1.0
    sd = math.sqrt(sigma2)
    y = signal + sd * rng.standard_normal(cfg.n_train)
    y_test = X_test @ beta + sd * rng.standard_normal(cfg.n_test)
    data = Dataset(y, X_train, np.ones(g.p))
    return SyntheticData(g, data, beta, partition_of(beta, g), X_test, y_test, sigma2)
