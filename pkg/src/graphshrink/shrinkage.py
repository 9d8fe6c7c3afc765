"""Bayes factors for merging two clusters under normal and horseshoe-difference priors.

In the normal-means setting a merge proposal compares a one-mean model with
a two-mean model, so its likelihood ratio is the Bayes factor of a
two-sample t test.  With independent half-Cauchy local scales on the two
cluster means, their difference is a scale mixture of normals whose mixing
density over the variance ``w`` is `mixing_density`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

__all__ = [
    "QuadratureError",
    "TwoSampleStat",
    "mixing_density",
    "mixing_cdf",
    "bf_normal",
    "bf_horseshoe",
    "scale_match",
    "Scenario",
    "default_scenarios",
    "bf_curve",
]

QUAD_RTOL = 1e-6
# the mixing density is negligible outside [s e^-U, s e^U] for s = tau1^2 + tau2^2
_U_SPAN = 60.0


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class TwoSampleStat:
    """Two-sample t statistic.

    Group sizes may be non-integer (a 9:1 split of ``nu + 2`` observations
    rarely is); only ``nu`` and ``n_delta`` enter the Bayes factors.
    """

    t: float
    n1: float
    n2: float

    def __post_init__(self):
        if not (self.n1 > 0 and self.n2 > 0):
            raise ValueError("group sizes must be positive")
        if not self.nu > 0:
            raise ValueError("n1 + n2 - 2 must be positive")

    @property
    def nu(self) -> float:
        return self.n1 + self.n2 - 2.0

    @property
    def n_delta(self) -> float:
        return 1.0 / (1.0 / self.n1 + 1.0 / self.n2)


def _check_scales(tau1, tau2):
    if not (tau1 > 0 and tau2 > 0):
        raise ValueError("scales must be positive")


def mixing_density(w, tau1: float, tau2: float):
    """Density of the normal-mixture variance of the difference of two horseshoe draws."""
    _check_scales(tau1, tau2)
    w_arr = np.asarray(w, dtype=float)
    if np.any(w_arr <= 0):
        raise ValueError("w must be positive")
    a1, a2 = tau1 * tau1, tau2 * tau2
    r1, r2 = np.sqrt(w_arr + a1), np.sqrt(w_arr + a2)
    out = (tau1 * r1 + tau2 * r2) / (r1 * r2 * (w_arr + a1 + a2)) / math.pi
    return float(out) if np.ndim(w) == 0 else out


def _log_quad(fn, tau1: float, tau2: float, lo: float = -math.inf, hi: float = math.inf,
              points=(), rtol: float = QUAD_RTOL) -> float:
    """Integrate ``fn(w) f_W(w)`` over ``w`` in ``[e^lo, e^hi]`` using ``w = e^u``."""
    center = math.log(tau1 * tau1 + tau2 * tau2)
    a = max(lo, center - _U_SPAN)
    b = min(hi, center + _U_SPAN)
    if a >= b:
        return 0.0

    def integrand(u):
        w = math.exp(u)
        return fn(w) * mixing_density(w, tau1, tau2) * w

    cuts = sorted({a, b, *(x for x in (center, *points) if a < x < b)})
    total = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        val, err, info = _quad(integrand, left, right, rtol)
        total += val
    return total


def _quad(f, a, b, rtol):
    val, err, *rest = integrate.quad(f, a, b, epsabs=0.0, epsrel=rtol * 1e-2, limit=500, full_output=1)
    ier = rest[1] if len(rest) > 1 else 0
    if ier != 0 and not err <= rtol * abs(val):
        msg = rest[2] if len(rest) > 2 else "no detail"
        raise QuadratureError(f"quadrature did not converge on [{a}, {b}]: {msg}")
    return val, err, ier


def mixing_cdf(x: float, tau1: float, tau2: float) -> float:
    """``P(W <= x)`` by quadrature."""
    _check_scales(tau1, tau2)
    if x <= 0:
        return 0.0
    return _log_quad(lambda w: 1.0, tau1, tau2, hi=math.log(x))


def _log_t_kernel(t: float, nu: float, scale: float) -> float:
    # log of (1 + t^2 / (nu scale))^(-(nu+1)/2)
    return -0.5 * (nu + 1.0) * math.log1p(t * t / (nu * scale))


def bf_normal(s: TwoSampleStat) -> float:
    """Bayes factor of one group against two under a standard normal prior on the standardized difference."""
    nu, nd = s.nu, s.n_delta
    log_bf = _log_t_kernel(s.t, nu, 1.0) + 0.5 * math.log1p(nd) - _log_t_kernel(s.t, nu, 1.0 + nd)
    return math.exp(log_bf)


def bf_horseshoe(s: TwoSampleStat, tau1: float, tau2: float) -> float:
    """Bayes factor of one group against two under the horseshoe-difference prior.

    Raises
    ------
    QuadratureError
        If the mixing integral does not reach the relative tolerance.
    """
    _check_scales(tau1, tau2)
    nu, nd, t = s.nu, s.n_delta, s.t
    log_num = _log_t_kernel(t, nu, 1.0)

    def ratio(w):
        # integrand divided by the numerator, so values stay O(1) at large |t|
        scale = 1.0 + nd * w
        return math.exp(-0.5 * math.log(scale) + _log_t_kernel(t, nu, scale) - log_num)

    # the integrand changes regime near n_delta w ~ t^2 / nu
    points = (math.log(max(t * t / nu, 1e-300) / nd), -math.log(nd))
    den = _log_quad(ratio, tau1, tau2, points=points)
    if not den > 0:
        raise QuadratureError("mixing integral is not positive")
    return 1.0 / den


def scale_match(n1: float = 1.0, n2: float = 1.0, tol: float = 1e-8) -> tuple[float, float]:
    """Common scale ``tau1 = tau2`` putting the median of the mixing density at 1.

    The median-1 criterion does not involve the group sizes; they are
    accepted for interface symmetry and validated.
    """
    if not (n1 > 0 and n2 > 0):
        raise ValueError("group sizes must be positive")
    tau = _median_one_scale(tol)
    return tau, tau


@lru_cache(maxsize=8)
def _median_one_scale(tol: float) -> float:
    f = lambda log_tau: mixing_cdf(1.0, math.exp(log_tau), math.exp(log_tau)) - 0.5
    lo, hi = math.log(1e-3), math.log(1e3)
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise QuadratureError("median-1 scale is not bracketed")
    # the CDF at 1 decreases in tau
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


@dataclass(frozen=True)
class Scenario:
    """Group sizes ``n1 = share * (nu + 2)`` and ``n2 = (1 - share) * (nu + 2)``."""

    name: str
    nu: float
    share: float = 0.5

    @property
    def n1(self) -> float:
        return self.share * (self.nu + 2.0)

    @property
    def n2(self) -> float:
        return (1.0 - self.share) * (self.nu + 2.0)

    def stat(self, t: float) -> TwoSampleStat:
        return TwoSampleStat(t, self.n1, self.n2)


def default_scenarios() -> list[Scenario]:
    out = []
    for nu in (5, 10, 20):
        out.append(Scenario(f"balanced_nu{nu}", float(nu), 0.5))
        out.append(Scenario(f"unbalanced_nu{nu}", float(nu), 0.9))
    return out


def bf_curve(scenario: Scenario, t_grid, scales=None) -> np.ndarray:
    """Rows of ``(|t|, BF normal, BF horseshoe)`` over `t_grid`."""
    if not (0 < scenario.share < 1 and scenario.nu > 0):
        raise ValueError(f"invalid scenario {scenario.name}")
    tau1, tau2 = scale_match(scenario.n1, scenario.n2) if scales is None else scales
    rows = []
    for t in np.abs(np.asarray(t_grid, dtype=float)):
        s = scenario.stat(float(t))
        rows.append((float(t), bf_normal(s), bf_horseshoe(s, tau1, tau2)))
    return np.array(rows)
