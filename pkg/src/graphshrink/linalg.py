"""Upper Cholesky factors with cheap updates, and the collapsed Gaussian likelihood.

Factors are upper triangular, ``R.T @ R == A``.  Failures to stay positive
definite raise `NotPositiveDefiniteError` rather than being jittered away;
callers inside the sampler treat that as a rejected proposal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg.lapack import dpotrf, dtrtrs

__all__ = [
    "NotPositiveDefiniteError",
    "CholState",
    "cholesky",
    "factor_unchecked",
    "rank_one_update",
    "diagonal_update",
    "delete_index",
    "append_index",
    "triangular_solve",
    "solve_r",
    "solve_rt",
    "collapsed_loglik",
    "collapsed_terms",
    "loglik_from_terms",
    "PIVOT_RTOL",
]

# pivots below this fraction of the largest diagonal count as breakdown
PIVOT_RTOL = 1e-12


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


def solve_rt(R: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``R^T x = b`` for upper-triangular ``R``."""
    if R.shape[0] == 0:
        return np.zeros(0)
    return dtrtrs(R, b, lower=0, trans=1)[0]


def solve_r(R: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``R x = b`` for upper-triangular ``R``."""
    if R.shape[0] == 0:
        return np.zeros(0)
    return dtrtrs(R, b, lower=0, trans=0)[0]


@dataclass(eq=False)
class CholState:
    """Upper-triangular factor ``R`` with ``R.T @ R = A``.

    Attributes
    ----------
    R : ndarray of shape (K, K)
    logdet_A : float
        ``2 * sum(log(diag(R)))``.
    """

    R: np.ndarray
    logdet_A: float

    @classmethod
    def from_factor(cls, R: np.ndarray) -> "CholState":
        return cls(R, 2.0 * float(np.log(R.diagonal()).sum()))

    @property
    def dim(self) -> int:
        return self.R.shape[0]

    def matrix(self) -> np.ndarray:
        return self.R.T @ self.R


def cholesky(A) -> CholState:
    """Factor a symmetric positive-definite matrix.

    Raises
    ------
    NotPositiveDefiniteError
        If a pivot is non-positive or below ``PIVOT_RTOL`` times the largest
        diagonal entry of `A`.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 0:
        return CholState(np.zeros((0, 0)), 0.0)
    return factor_unchecked(A)


def factor_unchecked(A: np.ndarray) -> CholState:
    """`cholesky` without input validation, for nonempty square float arrays."""
    R, info = dpotrf(A, lower=0, clean=1)
    if info != 0:
        raise NotPositiveDefiniteError(f"leading minor {info} is not positive")
    d2 = R.diagonal() ** 2
    if len(d2) <= 8:
        # builtins beat numpy reductions on tiny arrays
        small = d2.tolist()
        if not min(small) > PIVOT_RTOL * max(A.diagonal().tolist()):
            raise NotPositiveDefiniteError("pivot below tolerance")
        prod = math.prod(small)
        if 1e-250 < prod < 1e250:
            return CholState(R, math.log(prod))
    elif not d2.min() > PIVOT_RTOL * A.diagonal().max():
        raise NotPositiveDefiniteError("pivot below tolerance")
    return CholState(R, float(np.log(d2).sum()))


def _update_inplace(R: np.ndarray, x: np.ndarray, sign: float, start: int = 0) -> None:
    # Givens-style sweep; x is consumed.  Rows before `start` are untouched.
    K = R.shape[0]
    tol = PIVOT_RTOL * float(np.max(np.abs(np.diag(R)))) ** 2 if K else 0.0
    for k in range(start, K):
        xk = x[k]
        if xk == 0.0:
            continue
        rkk = R[k, k]
        r2 = rkk * rkk + sign * xk * xk
        if not r2 > tol:
            raise NotPositiveDefiniteError("downdate lost positive definiteness")
        r = math.sqrt(r2)
        c = r / rkk
        s = xk / rkk
        R[k, k] = r
        if k + 1 < K:
            row = R[k, k + 1:]
            row += sign * s * x[k + 1:]
            row /= c
            x[k + 1:] *= c
            x[k + 1:] -= s * row


def rank_one_update(c: CholState, v, sign: int = 1) -> CholState:
    """Factor of ``A + sign * v v^T`` in O(K^2)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    x = np.array(v, dtype=float)
    if x.shape != (c.dim,):
        raise ValueError(f"vector of length {c.dim} expected")
    nz = np.flatnonzero(x)
    R = c.R.copy()
    if len(nz):
        _update_inplace(R, x, float(sign), int(nz[0]))
    return CholState.from_factor(R)


def diagonal_update(c: CholState, k: int, delta: float) -> CholState:
    """Factor of ``A + delta * e_k e_k^T``; only rows and columns >= k change."""
    if delta == 0.0:
        return CholState(c.R.copy(), c.logdet_A)
    x = np.zeros(c.dim)
    x[k] = math.sqrt(abs(delta))
    R = c.R.copy()
    _update_inplace(R, x, 1.0 if delta > 0 else -1.0, k)
    return CholState.from_factor(R)


def delete_index(c: CholState, k: int) -> CholState:
    """Factor of `A` with row and column `k` removed.

    The leading block is unchanged; the trailing block ``T`` becomes the
    factor of ``T^T T + r r^T`` with ``r`` the removed row of ``R``, which is
    refactored in one LAPACK call rather than swept row by row.
    """
    K = c.dim
    if not 0 <= k < K:
        raise IndexError(f"index {k} out of range for dimension {K}")
    R = c.R
    out = np.zeros((K - 1, K - 1))
    out[:k, :k] = R[:k, :k]
    out[:k, k:] = R[:k, k + 1:]
    if k < K - 1:
        T = R[k + 1:, k + 1:]
        r = R[k, k + 1:]
        B = T.T @ T
        B += np.outer(r, r)
        U, info = dpotrf(B, lower=0, clean=1)
        if info != 0:
            raise NotPositiveDefiniteError("trailing block lost positive definiteness")
        out[k:, k:] = U
    return CholState.from_factor(out)


def append_index(c: CholState, col, diag: float) -> CholState:
    """Factor of ``[[A, col], [col^T, diag]]``, bordering `A` by one index."""
    K = c.dim
    col = np.asarray(col, dtype=float)
    R = np.zeros((K + 1, K + 1))
    if K:
        r = solve_rt(c.R, col)
        R[:K, :K] = c.R
        R[:K, K] = r
        d2 = diag - float(r @ r)
        scale = max(float(c.R.diagonal().max()) ** 2, diag)
    else:
        d2 = diag
        scale = diag
    if not d2 > PIVOT_RTOL * scale:
        raise NotPositiveDefiniteError("bordered matrix is not positive definite")
    R[K, K] = math.sqrt(d2)
    return CholState(R, c.logdet_A + math.log(d2))


def triangular_solve(c: CholState, b, mode: str = "lower") -> np.ndarray:
    """Solve ``R^T x = b`` (``mode="lower"``) or ``R x = b`` (``mode="upper"``)."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != c.dim:
        raise ValueError(f"right-hand side has length {b.shape[0]}, factor has dimension {c.dim}")
    if mode == "lower":
        return solve_rt(c.R, b)
    if mode == "upper":
        return solve_r(c.R, b)
    raise ValueError(f"mode must be 'lower' or 'upper', got {mode!r}")


def collapsed_terms(yty: float, Xty, chol: CholState, tau: float, lam) -> tuple[float, float]:
    """``(log|Sigma|, y^T Sigma^{-1} y)`` for ``Sigma = I + tau^2 Xt diag(lam^2) Xt^T``.

    `chol` must factor ``tau^-2 diag(lam^-2) + Xt^T Xt``; `Xty` is ``Xt^T y``.
    """
    lam = np.asarray(lam, dtype=float)
    K = len(lam)
    if K:
        z = solve_rt(chol.R, np.asarray(Xty, dtype=float))
        quad = yty - float(z @ z)
        logdet = chol.logdet_A + 2.0 * K * math.log(tau) + 2.0 * _log_sum(lam)
    else:
        quad, logdet = yty, 0.0
    return logdet, max(quad, 0.0)


def _log_sum(v: np.ndarray) -> float:
    # sum of logs; one log of the product is cheaper while it cannot under- or overflow
    if len(v) <= 8:
        prod = float(v.prod())
        if 1e-250 < prod < 1e250:
            return math.log(prod)
    return float(np.log(v).sum())


def loglik_from_terms(logdet: float, quad: float, n: int, sigma2_prior=(0.0, 0.0)) -> float:
    """``-logdet/2 - (n/2 + a) log(b + quad/2)`` for an IG(a, b) prior on sigma^2.

    ``a = b = 0`` is the 1/sigma^2 prior.
    """
    a, b = sigma2_prior
    s = b + 0.5 * quad
    if s <= 0.0:
        return math.inf
    return -0.5 * logdet - (0.5 * n + a) * math.log(s)


def collapsed_loglik(y, Xt, tau: float, lam, sigma2_prior=(0.0, 0.0)) -> tuple[float, CholState]:
    """Log of ``|Sigma|^{-1/2} (y^T Sigma^{-1} y / 2)^{-n/2}`` via Woodbury and the determinant lemma.

    Parameters
    ----------
    y : ndarray of shape (n,)
    Xt : ndarray of shape (n, K)
        Reduced design ``X Phi^T``.
    tau : float
        Global scale.
    lam : ndarray of shape (K,)
        Local scales; the prior covariance of the reduced coefficients is
        ``tau^2 diag(lam^2)`` (times sigma^2).
    sigma2_prior : (float, float)
        Inverse-gamma shape and rate for sigma^2; zeros give ``1/sigma^2``.

    Returns
    -------
    loglik : float
    chol : CholState
        Factor of ``tau^-2 diag(lam^-2) + Xt^T Xt``.
    """
    y = np.asarray(y, dtype=float)
    Xt = np.asarray(Xt, dtype=float).reshape(len(y), -1)
    lam = np.asarray(lam, dtype=float)
    if Xt.shape[1] != len(lam):
        raise ValueError("Xt columns and lam length differ")
    if tau <= 0 or np.any(lam <= 0):
        raise ValueError("tau and lam must be strictly positive")
    A = Xt.T @ Xt
    A[np.diag_indices_from(A)] += 1.0 / (tau * tau * lam * lam)
    chol = cholesky(A)
    logdet, quad = collapsed_terms(float(y @ y), Xt.T @ y, chol, tau, lam)
    return loglik_from_terms(logdet, quad, len(y), sigma2_prior), chol
