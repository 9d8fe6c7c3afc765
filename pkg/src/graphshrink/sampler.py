"""Collapsed reversible-jump MCMC over forest-induced partitions.

One iteration is: a partition move with the reduced coefficients and the
noise variance integrated out, then the block ``tau -> sigma^2 ->
beta_tilde``, then a slice update of the local scales.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from functools import lru_cache

from .graph import Graph
from .inference import ChainOutput
from .linalg import (
    NotPositiveDefiniteError,
    append_index,
    cholesky,
    collapsed_terms,
    factor_unchecked,
    delete_index,
    loglik_from_terms,
    solve_r,
    solve_rt,
)
from .model import Dataset, Hyperparams, ModelState, initial_state, log_binom, validate_state
from .partition import Partition, resample_forest_compatible

__all__ = [
    "MoveRecord",
    "Schedule",
    "likelihood_ratio",
    "step_partition",
    "update_tau",
    "update_sigma2",
    "update_beta_tilde",
    "update_lambda",
    "iterate",
    "run_chain",
    "run_chains",
    "propose_split",
    "propose_merge",
    "Proposal",
    "available_move_probs",
]

log = logging.getLogger(__name__)

MOVES = ("split", "merge", "change", "hyper")
# below this many clusters one LAPACK factorization beats incremental updates in wall time
DENSE_REFACTOR_MAX_K = 16
TARGET_TAU_ACCEPT = 0.4


@dataclass
class MoveRecord:
    move_kind: str
    log_A: float = 0.0
    log_P: float = 0.0
    log_L: float = 0.0
    accepted: bool = False

    @property
    def log_ratio(self) -> float:
        return self.log_A + self.log_P + self.log_L


@dataclass(frozen=True)
class Schedule:
    """``burnin`` warm-up iterations, then ``iters`` iterations keeping every ``thin``-th."""

    iters: int
    burnin: int = 0
    thin: int = 1

    def __post_init__(self):
        if self.iters < 0 or self.burnin < 0 or self.thin < 1:
            raise ValueError("iters and burnin must be >= 0 and thin >= 1")

    @property
    def n_draws(self) -> int:
        return self.iters // self.thin


def _loglik(state: ModelState, n: int, h: Hyperparams) -> float:
    return loglik_from_terms(state.logdet, state.quad, n, h.sigma2_prior)


def likelihood_ratio(current: ModelState, proposed: ModelState, n: int, sigma2_prior=(0.0, 0.0)) -> float:
    """Log ratio of the collapsed likelihoods ``proposed / current``."""
    a, b = sigma2_prior
    if b == 0.0 and current.quad == 0.0 and proposed.quad == 0.0:
        # y = 0: the quadratic terms are equal (and infinite) on both sides
        return -0.5 * (proposed.logdet - current.logdet)
    return (loglik_from_terms(proposed.logdet, proposed.quad, n, sigma2_prior)
            - loglik_from_terms(current.logdet, current.quad, n, sigma2_prior))


# ---------------------------------------------------------------------------
# partition proposals


def _smaller_side(state: ModelState, u: int, v: int, skip_edge: int) -> np.ndarray:
    """The component of `u` or of `v` once `skip_edge` is removed, whichever is smaller.

    Both searches advance in lockstep and stop as soon as one runs out, so the
    cost is proportional to the smaller side.
    """
    adj = state.forest.adjacency
    cut = state.forest.cut_flags
    seen = ({u}, {v})
    queues = (deque([u]), deque([v]))
    while True:
        for i in (0, 1):
            q = queues[i]
            if not q:
                return np.fromiter(seen[i], dtype=np.int64, count=len(seen[i]))
            x = q.popleft()
            mine = seen[i]
            for w, e in adj[x]:
                if e != skip_edge and not cut[e] and w not in mine:
                    mine.add(w)
                    q.append(w)


@dataclass(eq=False)
class Proposal:
    """A partition proposal evaluated only as far as the acceptance test needs.

    Slots in `removed` are dropped from `source` and `new_members` are
    appended after the survivors; `state()` assembles the full `ModelState`.
    """

    source: ModelState
    edge: int
    cut_edge: bool
    keep: list
    new_members: list
    lam: np.ndarray
    XtX: np.ndarray
    Xty: np.ndarray
    S_new: Optional[np.ndarray]
    chol: object
    logdet: float
    quad: float

    @property
    def K(self) -> int:
        return len(self.lam)

    def state(self) -> ModelState:
        src = self.source
        keep = self.keep
        K0 = len(keep)
        remap = np.full(src.K, -1, dtype=np.int64)
        remap[keep] = np.arange(K0)
        slot_of = remap[src.slot_of]
        for j, m in enumerate(self.new_members):
            slot_of[m] = K0 + j
        S = None
        if self.S_new is not None:
            S = np.concatenate([src.S[:, keep], self.S_new], axis=1)
        cut = src.forest.cut_flags.copy()
        cut[self.edge] = self.cut_edge
        beta_tilde = np.zeros(self.K)
        beta_tilde[:K0] = src.beta_tilde[keep]
        return src.copy(
            forest=src.forest.with_cuts(cut), slot_of=slot_of,
            members=[src.members[k] for k in keep] + self.new_members,
            lam=self.lam, beta_tilde=beta_tilde, XtX=self.XtX, Xty=self.Xty, S=S,
            chol=self.chol, logdet=self.logdet, quad=self.quad,
        )


def _evaluate(state: ModelState, data: Dataset, edge: int, cut_edge: bool,
              removed: list, new_members: list, new_lam: list,
              S_new: Optional[np.ndarray] = None) -> Proposal:
    """Drop the `removed` slots, border with `new_members`, and evaluate the likelihood terms.

    `S_new` holds the design column sums of `new_members` when the caller can
    derive them from existing sums; otherwise they are computed here.
    """
    K = state.K
    keep = np.array([k for k in range(K) if k not in removed], dtype=np.intp)
    K0, J = len(keep), len(new_members)
    Kn = K0 + J
    nm = np.array([len(m) for m in new_members], dtype=float)
    if data.identity:
        S_new = None
        G = np.zeros((Kn, Kn))
        G.reshape(-1)[::Kn + 1] = 1.0
    else:
        G = np.empty((Kn, Kn))
        G[:K0, :K0] = state.XtX[keep][:, keep]
        if S_new is None:
            S_new = np.column_stack([data.column_sum(m) for m in new_members])
        cross = state.S[:, keep].T @ S_new
        cross /= np.sqrt(np.outer(state.sizes[keep], nm))
        G[:K0, K0:] = cross
        G[K0:, :K0] = cross.T
        G[K0:, K0:] = (S_new.T @ S_new) / np.sqrt(np.outer(nm, nm))
    Xty = np.empty(Kn)
    Xty[:K0] = state.Xty[keep]
    Xty[K0:] = [data.xty[m].sum() for m in new_members]
    Xty[K0:] /= np.sqrt(nm)
    lam = np.empty(Kn)
    lam[:K0] = state.lam[keep]
    lam[K0:] = new_lam
    tau = state.tau
    if Kn <= DENSE_REFACTOR_MAX_K:
        A = G.copy()
        A.reshape(-1)[::Kn + 1] += 1.0 / (tau * lam) ** 2
        chol = factor_unchecked(A)
    else:
        chol = state.chol
        for s in sorted(removed, reverse=True):
            chol = delete_index(chol, s)
        for j in range(K0, Kn):
            chol = append_index(chol, G[:j, j], G[j, j] + 1.0 / (tau * lam[j]) ** 2)
    logdet, quad = collapsed_terms(data.yty, Xty, chol, tau, lam)
    return Proposal(state, edge, cut_edge, keep, new_members, lam, G, Xty, S_new, chol, logdet, quad)


def _split_proposal(state: ModelState, data: Dataset, edge: int, lam_new: float) -> Proposal:
    f = state.forest
    if f.cut_flags[edge]:
        raise ValueError(f"forest edge {edge} is already cut")
    u, v = (int(x) for x in f.forest_edges[edge])
    s = int(state.slot_of[u])
    parent = state.members[s]
    small = _smaller_side(state, u, v, edge)
    mask = np.zeros(state.slot_of.shape[0], dtype=bool)
    mask[small] = True
    inside = mask[parent]
    side_a, side_b = parent[inside], parent[~inside]
    S_new = None
    if not data.identity:
        S_a = data.column_sum(side_a)
        S_new = np.column_stack([S_a, state.S[:, s] - S_a])
    # the child holding the parent's smallest vertex comes first and keeps its scale
    if not inside[0]:
        side_a, side_b = side_b, side_a
        if S_new is not None:
            S_new = S_new[:, ::-1]
    return _evaluate(state, data, edge, True, [s], [side_a, side_b], [state.lam[s], lam_new], S_new)


def _merge_proposal(state: ModelState, data: Dataset, edge: int) -> Proposal:
    f = state.forest
    if not f.cut_flags[edge]:
        raise ValueError(f"forest edge {edge} is not cut")
    u, v = (int(x) for x in f.forest_edges[edge])
    su, sv = int(state.slot_of[u]), int(state.slot_of[v])
    mu, mv = state.members[su], state.members[sv]
    kept = state.lam[su] if mu[0] < mv[0] else state.lam[sv]
    merged = np.sort(np.concatenate([mu, mv]))
    S_new = None if data.identity else (state.S[:, su] + state.S[:, sv])[:, None]
    return _evaluate(state, data, edge, False, [su, sv], [merged], [kept], S_new)


def propose_split(state: ModelState, data: Dataset, edge: int, lam_new: float) -> ModelState:
    """State with uncut forest edge `edge` cut.

    The child holding the parent's smallest vertex keeps the parent's local
    scale; the other child gets `lam_new`.
    """
    return _split_proposal(state, data, edge, lam_new).state()


def propose_merge(state: ModelState, data: Dataset, edge: int) -> ModelState:
    """State with cut forest edge `edge` restored.

    The merged cluster keeps the local scale of the side holding the smaller
    vertex.
    """
    return _merge_proposal(state, data, edge).state()


def available_move_probs(K: int, p: int, n_c: int, probs) -> np.ndarray:
    """Move probabilities at cluster count `K`, renormalized over available moves."""
    avail = np.array([K < p, K > n_c, K > n_c, True], dtype=float)
    w = np.asarray(probs, dtype=float) * avail
    total = w.sum()
    return w / total if total > 0 else w


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@lru_cache(maxsize=4096)
def _split_log_ratios(K: int, p: int, n_c: int, h: Hyperparams) -> tuple[float, float]:
    """Prior and proposal log ratios for a split from `K` to ``K + 1`` clusters."""
    N = p - n_c
    log_A = math.log1p(-h.c) + log_binom(N, K - n_c) - log_binom(N, K + 1 - n_c)
    here = available_move_probs(K, p, n_c, h.move_probs)
    there = available_move_probs(K + 1, p, n_c, h.move_probs)
    log_P = (_log(there[1]) - math.log(K + 1 - n_c)) - (_log(here[0]) - math.log(p - K))
    return log_A, log_P


@lru_cache(maxsize=4096)
def _move_cdf(K: int, p: int, n_c: int, probs: tuple) -> tuple:
    return tuple(np.cumsum(available_move_probs(K, p, n_c, probs)).tolist())


def _pick(items: np.ndarray, rng: np.random.Generator) -> int:
    # uniform element; cheaper than Generator.integers for one draw
    n = len(items)
    return int(items[min(int(rng.random() * n), n - 1)])


def _accept(log_ratio: float, rng: np.random.Generator) -> bool:
    if log_ratio >= 0.0:
        return True
    if math.isnan(log_ratio):
        return False
    return rng.random() < math.exp(log_ratio)


def step_partition(
    state: ModelState,
    data: Dataset,
    g: Graph,
    h: Hyperparams,
    rng: np.random.Generator,
    fixed_lambda: Optional[float] = None,
) -> tuple[ModelState, MoveRecord]:
    """One split, merge, change or hyper move.

    New clusters draw their local scale from the standard half-Cauchy prior,
    whose density cancels between prior and proposal; with `fixed_lambda`
    they get that value instead and the local scales play no part in the
    acceptance ratio.
    """
    p, n_c, K = g.p, g.n_c, state.K
    cdf = _move_cdf(K, p, n_c, h.move_probs)
    if cdf[-1] == 0:
        return state, MoveRecord("none", accepted=True)
    r = rng.random() * cdf[-1]
    kind = MOVES[next(i for i, x in enumerate(cdf) if r < x)]
    cut = state.forest.cut_flags

    def new_lambda() -> float:
        if fixed_lambda is not None:
            return float(fixed_lambda)
        return abs(math.tan(math.pi * (rng.random() - 0.5)))

    try:
        if kind == "split":
            uncut = np.flatnonzero(~cut)
            edge = _pick(uncut, rng)
            proposal = _split_proposal(state, data, edge, new_lambda())
            log_A, log_P = _split_log_ratios(K, p, n_c, h)
        elif kind == "merge":
            cuts = np.flatnonzero(cut)
            edge = _pick(cuts, rng)
            proposal = _merge_proposal(state, data, edge)
            log_A, log_P = _split_log_ratios(K - 1, p, n_c, h)
            log_A, log_P = -log_A, -log_P
        elif kind == "change":
            cuts = np.flatnonzero(cut)
            edge = _pick(cuts, rng)
            mid = _merge_proposal(state, data, edge).state()
            uncut = np.flatnonzero(~mid.forest.cut_flags)
            edge2 = _pick(uncut, rng)
            proposal = _split_proposal(mid, data, edge2, new_lambda())
            log_A = log_P = 0.0
        else:
            forest = resample_forest_compatible(g, Partition.from_labels(state.slot_of), rng)
            return state.copy(forest=forest), MoveRecord("hyper", accepted=True)
    except NotPositiveDefiniteError:
        return state, MoveRecord(kind, log_L=-math.inf, accepted=False)

    rec = MoveRecord(kind, log_A, log_P, likelihood_ratio(state, proposal, data.n, h.sigma2_prior))
    rec.accepted = _accept(rec.log_ratio, rng)
    return (proposal.state() if rec.accepted else state), rec


# ---------------------------------------------------------------------------
# tau, sigma^2, beta_tilde


def _refactor(state: ModelState, data: Dataset, tau: float, lam: np.ndarray) -> ModelState:
    A = state.XtX.copy()
    A[np.diag_indices_from(A)] += 1.0 / (tau * lam) ** 2
    chol = cholesky(A)
    logdet, quad = collapsed_terms(data.yty, state.Xty, chol, tau, lam)
    return state.copy(tau=float(tau), lam=lam, chol=chol, logdet=logdet, quad=quad)


def _log_prior_tau(tau: float, tau0: float) -> float:
    return -math.log1p((tau / tau0) ** 2)


def update_tau(
    state: ModelState,
    data: Dataset,
    h: Hyperparams,
    rng: np.random.Generator,
    step: Optional[float] = None,
) -> tuple[ModelState, bool]:
    """Random-walk Metropolis on ``log tau`` against the collapsed likelihood.

    Returns the new state and whether the proposal was accepted.
    """
    step = h.mh_step_tau if step is None else step
    tau_new = state.tau * math.exp(step * rng.standard_normal())
    try:
        proposal = _refactor(state, data, tau_new, state.lam)
    except NotPositiveDefiniteError:
        return state, False
    log_ratio = (
        likelihood_ratio(state, proposal, data.n, h.sigma2_prior)
        + _log_prior_tau(tau_new, h.tau0) - _log_prior_tau(state.tau, h.tau0)
        + math.log(tau_new) - math.log(state.tau)
    )
    if _accept(log_ratio, rng):
        return proposal, True
    return state, False


def update_sigma2(state: ModelState, data: Dataset, rng: np.random.Generator, h: Optional[Hyperparams] = None) -> ModelState:
    """Draw sigma^2 from its inverse-gamma conditional with beta_tilde integrated out."""
    a, b = (0.0, 0.0) if h is None else h.sigma2_prior
    shape = 0.5 * data.n + a
    rate = b + 0.5 * state.quad
    return state.copy(sigma2=rate / rng.gamma(shape))


def update_beta_tilde(state: ModelState, data: Dataset, rng: np.random.Generator) -> ModelState:
    """Gaussian draw ``N(A^{-1} Xt^T y, sigma^2 A^{-1})`` using the cached factor."""
    R = state.chol.R
    z = solve_rt(R, state.Xty)
    noise = math.sqrt(state.sigma2) * rng.standard_normal(state.K)
    return state.copy(beta_tilde=solve_r(R, z + noise))


# ---------------------------------------------------------------------------
# local scales


def _slice_eta(eta: np.ndarray, b: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One slice step for densities proportional to ``exp(-b eta) / (1 + eta)``."""
    u = rng.uniform(0.0, 1.0 / (1.0 + eta))
    upper = (1.0 - u) / u
    v = rng.uniform(size=len(eta))
    bt = b * upper
    out = np.empty_like(eta)
    small = bt < 1e-10
    # inverse CDF of Exp(b) truncated to [0, upper]
    out[~small] = -np.log1p(v[~small] * np.expm1(-bt[~small])) / b[~small]
    out[small] = v[small] * upper[small]
    return out


def update_lambda(state: ModelState, data: Dataset, rng: np.random.Generator) -> ModelState:
    """Slice-sample each local scale through ``eta = 1 / lam^2``."""
    b = state.beta_tilde ** 2 / (2.0 * state.sigma2 * state.tau ** 2)
    eta = _slice_eta(1.0 / state.lam ** 2, b, rng)
    lam = 1.0 / np.sqrt(np.maximum(eta, 1e-300))
    try:
        return _refactor(state, data, state.tau, lam)
    except NotPositiveDefiniteError:
        log.warning("local-scale update broke positive definiteness; keeping previous scales")
        return state


# ---------------------------------------------------------------------------
# driver


@dataclass
class _Counts:
    proposed: dict
    accepted: dict

    @classmethod
    def empty(cls):
        kinds = MOVES + ("tau",)
        return cls({k: 0 for k in kinds}, {k: 0 for k in kinds})

    def add(self, kind: str, accepted: bool):
        if kind in self.proposed:
            self.proposed[kind] += 1
            self.accepted[kind] += int(accepted)

    def rates(self) -> dict:
        out = {}
        for k, n in self.proposed.items():
            out[k] = self.accepted[k] / n if n else 0.0
            out[f"{k}_n"] = n
        return out


def iterate(
    state: ModelState,
    data: Dataset,
    g: Graph,
    h: Hyperparams,
    rng: np.random.Generator,
    tau_step: Optional[float] = None,
) -> tuple[ModelState, MoveRecord, bool]:
    """One full sweep: partition move, then tau, sigma^2, beta_tilde, then local scales."""
    state, rec = step_partition(state, data, g, h, rng)
    state, tau_ok = update_tau(state, data, h, rng, tau_step)
    state = update_sigma2(state, data, rng, h)
    state = update_beta_tilde(state, data, rng)
    state = update_lambda(state, data, rng)
    return state, rec, tau_ok


def run_chain(
    data: Dataset,
    g: Graph,
    h: Hyperparams,
    schedule: Schedule,
    rng: np.random.Generator,
    debug: bool = False,
    init: Optional[ModelState] = None,
    adapt: bool = True,
) -> ChainOutput:
    """Run one chain and keep thinned post-burn-in draws.

    During burn-in the log-tau random-walk step is tuned toward 40%
    acceptance; it is frozen afterwards.  With `debug` every state is checked
    by `validate_state`.
    """
    if data.p != g.p:
        raise ValueError(f"data has {data.p} coefficients but the graph has {g.p} vertices")
    t0 = time.perf_counter()
    state = initial_state(data, g, h, rng) if init is None else init
    step = h.mh_step_tau
    counts = _Counts.empty()
    T = schedule.n_draws
    out_iter = np.empty(T, dtype=np.int64)
    out_labels = np.empty((T, g.p), dtype=np.int64)
    out_beta = np.empty((T, g.p))
    out_sigma2 = np.empty(T)
    out_tau = np.empty(T)
    out_K = np.empty(T, dtype=np.int64)
    window_acc = window_n = 0
    kept = 0
    for it in range(schedule.burnin + schedule.iters):
        state, rec, tau_ok = iterate(state, data, g, h, rng, step)
        if debug:
            validate_state(state, data, g)
        burning = it < schedule.burnin
        if burning and adapt:
            window_acc += tau_ok
            window_n += 1
            if window_n == 50:
                rate = window_acc / window_n
                step *= math.exp((rate - TARGET_TAU_ACCEPT) * min(1.0, 10.0 / math.sqrt(it + 1)))
                window_acc = window_n = 0
            continue
        if burning:
            continue
        counts.add(rec.move_kind, rec.accepted)
        counts.add("tau", tau_ok)
        j = it - schedule.burnin + 1
        if j % schedule.thin == 0 and kept < T:
            out_iter[kept] = j
            out_labels[kept] = state.partition.labels
            out_beta[kept] = state.beta
            out_sigma2[kept] = state.sigma2
            out_tau[kept] = state.tau
            out_K[kept] = state.K
            kept += 1
    acc = counts.rates()
    acc["tau_step"] = step
    return ChainOutput(
        out_iter, out_labels, out_beta, out_sigma2, out_tau, out_K,
        acceptance=acc, runtime_seconds=time.perf_counter() - t0,
    )


def run_chains(
    data: Dataset,
    g: Graph,
    h: Hyperparams,
    schedule: Schedule,
    seed: int,
    chains: int = 1,
    debug: bool = False,
    max_workers: Optional[int] = None,
) -> ChainOutput:
    """Independent chains on threads, seeded from one `SeedSequence`, then pooled."""
    seeds = np.random.SeedSequence(seed).spawn(chains)
    rngs = [np.random.default_rng(s) for s in seeds]
    if chains == 1:
        return run_chain(data, g, h, schedule, rngs[0], debug)
    with ThreadPoolExecutor(max_workers=max_workers or chains) as pool:
        outs = list(pool.map(lambda r: run_chain(data, g, h, schedule, r, debug), rngs))
    return ChainOutput.concatenate(outs)
