"""Posterior summaries and accuracy metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .partition import Partition, canonical_labels

__all__ = [
    "ChainOutput",
    "coclustering_matrix",
    "dahl_point_estimate",
    "posterior_median_beta",
    "rand_index",
    "mspe",
    "k_distribution",
    "summarize",
]


@dataclass(eq=False)
class ChainOutput:
    """Thinned posterior draws.

    Attributes
    ----------
    iteration : ndarray of shape (T,)
        Post-burn-in iteration index of each draw.
    labels : ndarray of shape (T, p)
        Canonical cluster labels.
    beta : ndarray of shape (T, p)
    sigma2, tau : ndarray of shape (T,)
    K : ndarray of shape (T,)
    acceptance : dict
        Per-move-kind acceptance rates (``"split"``, ``"merge"``, ``"change"``,
        ``"hyper"``, ``"tau"``) and proposal counts under ``"<kind>_n"``.
    runtime_seconds : float
    chain : ndarray of shape (T,)
        Chain index of each draw.
    """

    iteration: np.ndarray
    labels: np.ndarray
    beta: np.ndarray
    sigma2: np.ndarray
    tau: np.ndarray
    K: np.ndarray
    acceptance: dict = field(default_factory=dict)
    runtime_seconds: float = 0.0
    chain: np.ndarray | None = None

    def __post_init__(self):
        if self.chain is None:
            self.chain = np.zeros(len(self.iteration), dtype=np.int64)

    def __len__(self) -> int:
        return len(self.iteration)

    @property
    def p(self) -> int:
        return self.labels.shape[1]

    @classmethod
    def concatenate(cls, outputs: list["ChainOutput"]) -> "ChainOutput":
        """Pool chains; acceptance is reported per chain under ``"chains"``."""
        if len(outputs) == 1:
            return outputs[0]
        cat = lambda name: np.concatenate([getattr(o, name) for o in outputs])
        chain = np.concatenate([np.full(len(o), i, dtype=np.int64) for i, o in enumerate(outputs)])
        acc: dict = {"chains": [o.acceptance for o in outputs]}
        for kind in ("split", "merge", "change", "hyper", "tau"):
            n = sum(o.acceptance.get(f"{kind}_n", 0) for o in outputs)
            a = sum(o.acceptance.get(kind, 0.0) * o.acceptance.get(f"{kind}_n", 0) for o in outputs)
            acc[kind] = a / n if n else 0.0
            acc[f"{kind}_n"] = n
        return cls(
            cat("iteration"), cat("labels"), cat("beta"), cat("sigma2"), cat("tau"), cat("K"),
            acc, max(o.runtime_seconds for o in outputs), chain,
        )


def _one_hot_blocks(labels: np.ndarray, chunk: int):
    # yields dense one-hot matrices H (p x sum K) and the draw index of each column
    T, p = labels.shape
    rows = np.arange(p)
    for start in range(0, T, chunk):
        block = labels[start:start + chunk]
        ks = block.max(axis=1) + 1
        offsets = np.concatenate([[0], np.cumsum(ks)])
        H = np.zeros((p, offsets[-1]))
        for t, lab in enumerate(block):
            H[rows, offsets[t] + lab] = 1.0
        owner = np.repeat(np.arange(start, start + len(block)), ks)
        yield H, owner


def coclustering_matrix(labels, chunk: int = 256) -> np.ndarray:
    """Fraction of draws in which each pair of vertices shares a cluster."""
    labels = np.asarray(labels)
    T, p = labels.shape
    P = np.zeros((p, p))
    for H, _ in _one_hot_blocks(labels, chunk):
        P += H @ H.T
    return P / T


def dahl_point_estimate(out: ChainOutput | np.ndarray, chunk: int = 256) -> Partition:
    """Sampled partition closest in squared Frobenius distance to the co-clustering matrix.

    Ties go to the earliest draw.
    """
    labels = np.asarray(out.labels if isinstance(out, ChainOutput) else out)
    if labels.ndim != 2 or len(labels) == 0:
        raise ValueError("no draws to summarize")
    P = coclustering_matrix(labels, chunk)
    T = len(labels)
    # ||D_t - P||^2 = sum(P^2) + sum_k n_k^2 - 2 sum_k 1_k^T P 1_k
    within = np.zeros(T)
    for H, owner in _one_hot_blocks(labels, chunk):
        np.add.at(within, owner, np.einsum("ij,ij->j", H, P @ H))
    sq = np.array([np.sum(np.bincount(lab).astype(float) ** 2) for lab in labels])
    loss = float(np.sum(P * P)) + sq - 2.0 * within
    # exact ties differ by rounding only; the earliest near-minimal draw wins
    tol = 1e-9 * max(1.0, float(np.max(np.abs(loss))))
    best = int(np.flatnonzero(loss <= loss.min() + tol)[0])
    return Partition.from_labels(labels[best])


def posterior_median_beta(out: ChainOutput | np.ndarray, level: float = 0.9):
    """Coordinate-wise posterior median with an equal-tailed credible interval.

    Returns
    -------
    median, lower, upper : ndarray of shape (p,)
    """
    beta = np.asarray(out.beta if isinstance(out, ChainOutput) else out, dtype=float)
    if beta.ndim != 2 or len(beta) == 0:
        raise ValueError("no draws to summarize")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    alpha = (1.0 - level) / 2.0
    lower, median, upper = np.quantile(beta, [alpha, 0.5, 1.0 - alpha], axis=0)
    return median, lower, upper


def rand_index(a, b) -> float:
    """Fraction of vertex pairs on which two partitions agree."""
    la = np.asarray(a.labels if isinstance(a, Partition) else a)
    lb = np.asarray(b.labels if isinstance(b, Partition) else b)
    if la.shape != lb.shape:
        raise ValueError("partitions have different sizes")
    p = len(la)
    if p < 2:
        return 1.0
    la, lb = canonical_labels(la), canonical_labels(lb)
    table = np.zeros((la.max() + 1, lb.max() + 1))
    np.add.at(table, (la, lb), 1.0)
    pairs = lambda x: float(np.sum(x * (x - 1.0) / 2.0))
    total = p * (p - 1) / 2.0
    both = pairs(table)
    agree = total + 2.0 * both - pairs(table.sum(axis=1)) - pairs(table.sum(axis=0))
    return agree / total


def mspe(beta_hat, X_test, y_test) -> float:
    """Mean squared prediction error ``mean((y - X beta)^2)``."""
    beta_hat = np.asarray(beta_hat, dtype=float)
    X_test = np.asarray(X_test, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if X_test.ndim != 2 or X_test.shape != (len(y_test), len(beta_hat)):
        raise ValueError(
            f"X_test of shape {X_test.shape} does not match y_test ({len(y_test)}) and beta ({len(beta_hat)})"
        )
    r = y_test - X_test @ beta_hat
    return float(r @ r) / len(y_test)


def k_distribution(out: ChainOutput) -> dict[int, float]:
    """Posterior probability of each sampled cluster count."""
    ks, counts = np.unique(out.K, return_counts=True)
    return {int(k): float(c) / len(out) for k, c in zip(ks, counts)}


def summarize(out: ChainOutput, level: float = 0.9) -> dict:
    """Point estimates and intervals computed from the draws alone.

    Keys: ``n_draws``, ``level``, ``partition`` (Dahl labels), ``K``,
    ``beta_median``, ``beta_lower``, ``beta_upper``, ``k_distribution``.
    """
    pi = dahl_point_estimate(out)
    median, lower, upper = posterior_median_beta(out, level)
    return {
        "n_draws": len(out),
        "level": level,
        "partition": pi.labels.tolist(),
        "K": pi.K,
        "beta_median": median.tolist(),
        "beta_lower": lower.tolist(),
        "beta_upper": upper.tolist(),
        "k_distribution": {str(k): v for k, v in k_distribution(out).items()},
    }
