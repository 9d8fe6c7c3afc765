"""Prior hierarchy, data container and the sampler's parameter state."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .graph import Graph, sample_forest_prior
from .linalg import CholState, cholesky, collapsed_terms
from .partition import Partition, Projection, SpanningForest, induce_partition, is_contiguous

__all__ = [
    "Hyperparams",
    "Dataset",
    "ModelState",
    "log_prior_K",
    "log_prior_partition_given_forest",
    "log_prior_local_scales",
    "log_binom",
    "build_state",
    "initial_state",
    "validate_state",
]

LOG_2_OVER_PI = math.log(2.0 / math.pi)


@dataclass(frozen=True)
class Hyperparams:
    """Model and sampler settings.

    `move_probs` are the probabilities of the split, merge, change and
    hyper moves.  `sigma2_prior` is the inverse-gamma ``(shape, rate)`` for
    the noise variance; the default ``(0, 0)`` is the scale-invariant
    ``1/sigma^2`` prior used for fitting, and a proper prior is only needed
    by the joint-distribution self-consistency harness.
    """

    tau0: float = 1.0
    c: float = 0.5
    move_probs: tuple[float, float, float, float] = (0.3, 0.3, 0.35, 0.05)
    mh_step_tau: float = 0.5
    sigma2_prior: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not self.tau0 > 0:
            raise ValueError("tau0 must be positive")
        if not 0 <= self.c < 1:
            raise ValueError("c must lie in [0, 1)")
        probs = tuple(float(x) for x in self.move_probs)
        if len(probs) != 4 or min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("move_probs must be four nonnegative numbers summing to 1")
        object.__setattr__(self, "move_probs", probs)
        if not self.mh_step_tau > 0:
            raise ValueError("mh_step_tau must be positive")
        a, b = self.sigma2_prior
        if a < 0 or b < 0:
            raise ValueError("sigma2_prior entries must be nonnegative")


@dataclass(eq=False)
class Dataset:
    """Response and column-standardized design.

    With ``X is None`` the design is the identity (normal-means mode) and
    ``n == p``.
    """

    y: np.ndarray
    X: Optional[np.ndarray]
    column_norms: np.ndarray
    xty: np.ndarray = field(init=False, repr=False)
    yty: float = field(init=False, repr=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        if self.y.ndim != 1 or len(self.y) < 1:
            raise ValueError("y must be a nonempty vector")
        if self.X is not None:
            if self.X.shape[0] != len(self.y):
                raise ValueError(f"X has {self.X.shape[0]} rows but y has length {len(self.y)}")
            self.xty = self.X.T @ self.y
        else:
            self.xty = self.y.copy()
        self.yty = float(self.y @ self.y)

    @classmethod
    def from_arrays(cls, X, y, standardize: bool = True) -> "Dataset":
        X = np.array(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a matrix")
        norms = np.linalg.norm(X, axis=0)
        if standardize:
            if np.any(norms == 0):
                bad = np.flatnonzero(norms == 0)
                raise ValueError(f"zero-norm columns cannot be standardized: {bad[:10].tolist()}")
            X /= norms
        else:
            norms = np.ones(X.shape[1])
        return cls(np.asarray(y, dtype=float), X, norms)

    @classmethod
    def normal_means(cls, y) -> "Dataset":
        y = np.asarray(y, dtype=float)
        return cls(y, None, np.ones(len(y)))

    @property
    def identity(self) -> bool:
        return self.X is None

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def p(self) -> int:
        return len(self.y) if self.X is None else self.X.shape[1]

    def design(self) -> np.ndarray:
        return np.eye(self.n) if self.X is None else self.X

    def column_sum(self, idx: np.ndarray) -> Optional[np.ndarray]:
        """Sum of the design columns in `idx` (None for the identity design)."""
        if self.X is None:
            return None
        return self.X[:, idx].sum(axis=1)

    def reduced_design(self, proj: Projection) -> np.ndarray:
        return proj.reduce(self.design())


def log_binom(n: int, k: int) -> float:
    return float(gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1))


def log_prior_K(k: int, g: Graph, h: Hyperparams) -> float:
    """Log of ``Pr(K = k)``, geometric in k on ``n_c..p``."""
    if not g.n_c <= k <= g.p:
        raise ValueError(f"K={k} outside [{g.n_c}, {g.p}]")
    if h.c == 0.0:
        return -math.log(g.p - g.n_c + 1)
    r = math.log1p(-h.c)
    support = np.arange(g.n_c, g.p + 1) * r
    return k * r - float(logsumexp(support))


def log_prior_partition_given_forest(pi: Partition, g: Graph) -> float:
    """Log probability of one particular cut set of size ``K - n_c``."""
    return -log_binom(g.p - g.n_c, pi.K - g.n_c)


def log_prior_local_scales(lam) -> float:
    """Sum of standard half-Cauchy log densities."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("local scales must be positive")
    return float(np.sum(LOG_2_OVER_PI - np.log1p(lam * lam)))


@dataclass(eq=False)
class ModelState:
    """Current parameters of one chain plus the cached linear algebra.

    Clusters are stored in *slot* order, which is the column order of the
    Cholesky factor: ``members[k]`` are the vertices of slot ``k`` and
    ``lam[k]``, ``beta_tilde[k]`` its local scale and reduced coefficient.
    Slot order is an internal detail; `partition` returns canonical labels.

    ``S`` holds per-slot column sums of the design (None for the identity
    design), ``XtX`` and ``Xty`` the reduced Gram matrix and ``Xt^T y``,
    and ``chol`` factors ``XtX + diag(1 / (tau lam)^2)``.  ``logdet`` and
    ``quad`` are ``log|Sigma|`` and ``y^T Sigma^{-1} y`` at the current
    ``(tau, lam, partition)``.
    """

    forest: SpanningForest
    slot_of: np.ndarray
    members: list
    lam: np.ndarray
    beta_tilde: np.ndarray
    tau: float
    sigma2: float
    XtX: np.ndarray
    Xty: np.ndarray
    S: Optional[np.ndarray]
    chol: CholState
    logdet: float
    quad: float

    @property
    def K(self) -> int:
        return len(self.members)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.members], dtype=float)

    @property
    def partition(self) -> Partition:
        return Partition.from_labels(self.slot_of)

    @property
    def projection(self) -> Projection:
        """Projection in slot order, matching `beta_tilde`."""
        return Projection(self.members, 1.0 / np.sqrt(self.sizes), len(self.slot_of))

    @property
    def beta(self) -> np.ndarray:
        return self.projection.expand(self.beta_tilde)

    def a_matrix(self) -> np.ndarray:
        A = self.XtX.copy()
        A[np.diag_indices_from(A)] += 1.0 / (self.tau * self.lam) ** 2
        return A

    def copy(self, **changes) -> "ModelState":
        # dataclasses.replace re-runs __init__; a dict copy is several times cheaper
        if not changes.keys() <= _STATE_FIELDS:
            raise TypeError(f"unknown ModelState fields {sorted(set(changes) - _STATE_FIELDS)}")
        new = object.__new__(ModelState)
        new.__dict__.update(self.__dict__)
        new.__dict__.update(changes)
        return new


_STATE_FIELDS = frozenset(f.name for f in fields(ModelState))


def _gram(data: Dataset, members: list, sizes: np.ndarray):
    if data.identity:
        return None, np.eye(len(members))
    S = np.column_stack([data.column_sum(m) for m in members])
    return S, (S.T @ S) / np.sqrt(np.outer(sizes, sizes))


def build_state(
    data: Dataset,
    forest: SpanningForest,
    tau: float,
    lam=None,
    sigma2: float = 1.0,
    beta_tilde=None,
) -> ModelState:
    """Assemble a `ModelState` from scratch for the partition induced by `forest`."""
    pi = induce_partition(forest)
    members = pi.clusters()
    sizes = pi.cluster_sizes.astype(float)
    K = pi.K
    lam = np.ones(K) if lam is None else np.asarray(lam, dtype=float)
    beta_tilde = np.zeros(K) if beta_tilde is None else np.asarray(beta_tilde, dtype=float)
    if len(lam) != K or len(beta_tilde) != K:
        raise ValueError(f"expected {K} local scales and reduced coefficients")
    S, XtX = _gram(data, members, sizes)
    Xty = np.array([data.xty[m].sum() for m in members]) / np.sqrt(sizes)
    A = XtX.copy()
    A[np.diag_indices_from(A)] += 1.0 / (tau * lam) ** 2
    chol = cholesky(A)
    logdet, quad = collapsed_terms(data.yty, Xty, chol, tau, lam)
    return ModelState(
        forest=forest,
        slot_of=pi.labels.copy(),
        members=members,
        lam=lam,
        beta_tilde=beta_tilde,
        tau=float(tau),
        sigma2=float(sigma2),
        XtX=XtX,
        Xty=Xty,
        S=S,
        chol=chol,
        logdet=logdet,
        quad=quad,
    )


def initial_state(data: Dataset, g: Graph, h: Hyperparams, rng: np.random.Generator) -> ModelState:
    """Prior-drawn forest with nothing cut, unit local scales and ``tau = tau0``."""
    forest = sample_forest_prior(g, rng)
    sigma2 = float(np.var(data.y, ddof=1)) if data.n > 1 else float(data.y[0] ** 2)
    if not sigma2 > 0:
        sigma2 = 1.0
    return build_state(data, forest, tau=h.tau0, sigma2=sigma2)


def validate_state(state: ModelState, data: Dataset, g: Graph, rtol: float = 1e-8) -> None:
    """Raise AssertionError if any structural or numerical invariant is broken."""
    p = g.p
    K = state.K
    assert len(state.slot_of) == p
    assert len(state.lam) == K and len(state.beta_tilde) == K
    assert state.XtX.shape == (K, K) and state.chol.dim == K and len(state.Xty) == K
    assert np.all(state.lam > 0) and state.tau > 0 and state.sigma2 > 0
    assert g.n_c <= K <= p
    f = state.forest
    assert len(f.forest_edges) == p - g.n_c
    assert f.n_cut == K - g.n_c, "cut-set size disagrees with K"
    for k, m in enumerate(state.members):
        assert np.all(state.slot_of[m] == k)
        assert np.all(np.diff(m) > 0)
    assert sum(len(m) for m in state.members) == p
    induced = induce_partition(f)
    assert induced == state.partition, "forest does not induce the stored partition"
    assert is_contiguous(g, state.slot_of), "non-contiguous cluster"
    # reduced Gram, Xt^T y and the factor against a from-scratch computation
    proj = state.projection
    Xt = data.reduced_design(proj)
    XtX = Xt.T @ Xt
    assert np.allclose(state.XtX, XtX, rtol=rtol, atol=rtol)
    assert np.allclose(state.Xty, Xt.T @ data.y, rtol=rtol, atol=rtol * max(1.0, abs(data.yty)) ** 0.5)
    A = state.a_matrix()
    err = np.linalg.norm(state.chol.matrix() - A) / np.linalg.norm(A)
    assert err < rtol, f"Cholesky factor drifted: relative error {err:.3e}"
    assert np.allclose(np.triu(state.chol.R), state.chol.R)
    assert abs(state.chol.logdet_A - 2 * np.log(np.diag(state.chol.R)).sum()) < 1e-9
    # Phi Phi^T = I and beta round trip
    phi = proj.toarray()
    assert np.abs(phi @ phi.T - np.eye(K)).max() < 1e-12
    assert np.allclose(proj.reduce(state.beta), state.beta_tilde, atol=1e-10)
