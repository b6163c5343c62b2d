"""Rényi divergence primitives.

The sampled Gaussian mechanism value

    S_alpha(q, sigma) = D_alpha(N(0, s^2) || (1-q) N(0, s^2) + q N(1, s^2))

has no closed form for non-integer alpha. We write it as
``log(I) / (alpha - 1)`` with ``I = E_{x ~ N(0, s^2)}[(1 + u(x))**(1 - alpha)]``
and ``u(x) = q * (exp((2x - 1) / (2 s^2)) - 1)``, the likelihood ratio minus
one. The integrand is log-concave, which gives both a cheap bracket for its
mode and rigorous analytic tail bounds for the truncated quadrature.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from functools import lru_cache
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy import optimize, special

log = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_TAIL_RTOL = 1e-13
_SERIES_TERMS = 30


class NumericalError(RuntimeError):
    """A numerical routine could not reach its accuracy target."""

    def __init__(self, message: str, error_estimate: float = math.nan):
        self.error_estimate = error_estimate
        super().__init__(f"{message} (achieved error estimate {error_estimate:.3g})")


def gaussian_rdp(alpha: float, sensitivity: float, sigma: float) -> float:
    """``alpha * sensitivity**2 / (2 sigma**2)``, the RDP of a Gaussian pair."""
    if not alpha > 1:
        raise ValueError(f"alpha must exceed 1, got {alpha}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if not sensitivity >= 0:
        raise ValueError(f"sensitivity must be >= 0, got {sensitivity}")
    return alpha * sensitivity * sensitivity / (2.0 * sigma * sigma)


def sgm_small_q_heuristic(alpha: float, q: float, sigma: float) -> float:
    """The ``2 alpha q^2 / sigma^2`` approximation, valid only in some regimes.

    Used as a diagnostic; never treated as a bound.
    """
    return 2.0 * alpha * q * q / (sigma * sigma)


def _log_mixture_ratio(x, q, sigma):
    """``log(1 + u(x))`` evaluated without overflow."""
    z = (2.0 * x - 1.0) / (2.0 * sigma * sigma)
    if q == 1.0:
        return z
    return np.logaddexp(math.log1p(-q), math.log(q) + z)


def _mode(alpha, q, sigma):
    # d/dx log f = -(x + (alpha-1) p(x)) / sigma^2 with p in [0, 1]
    logit_shift = math.log(q) - math.log1p(-q) - 0.5 / sigma ** 2 if q < 1 else math.inf
    if math.isinf(logit_shift):
        return -(alpha - 1.0)

    def slope(x):
        return x + (alpha - 1.0) * special.expit(logit_shift + x / sigma ** 2)

    lo, hi = -(alpha - 1.0), 0.0
    if slope(lo) >= 0.0:
        return lo
    if slope(hi) <= 0.0:
        return hi
    return optimize.brentq(slope, lo, hi, xtol=1e-14, rtol=1e-14)


def _log_integrand(x, alpha, q, sigma):
    log_mu = -0.5 * (x / sigma) ** 2 - math.log(sigma * math.sqrt(2 * math.pi))
    return log_mu + (1.0 - alpha) * _log_mixture_ratio(x, q, sigma)


def _log_integrand_slope(x, alpha, q, sigma):
    z = (2.0 * x - 1.0) / (2.0 * sigma * sigma)
    if q == 1.0:
        p = 1.0
    else:
        p = special.expit(math.log(q) - math.log1p(-q) + z)
    return -(x + (alpha - 1.0) * p) / sigma ** 2


def _binomial_series(u, alpha):
    """``(1+u)**(1-alpha) - 1 - (1-alpha) u`` for ``(alpha+1)|u| <= 1/2``."""
    total = np.zeros_like(u)
    coef = 1.0 - alpha  # binom(1-alpha, 1)
    power = u.copy()
    for k in range(2, _SERIES_TERMS + 2):
        coef *= (1.0 - alpha - (k - 1)) / k
        power = power * u
        total = total + coef * power
    return total


def _centered_density(x, alpha, q, sigma):
    """``mu * ((1+u)**(1-alpha) - 1 - (1-alpha) u)`` at the nodes.

    The bracket is convex in u and vanishes to second order at u=0; since
    ``E_mu[u] = 0`` its mu-integral equals ``I - 1`` with no cancellation
    between large terms. Away from u=0 we use ``mu (1+u) = nu`` and
    ``mu u = q (nu_1 - mu)`` with ``nu_1`` the N(1, s^2) density, so nothing
    overflows for small sigma.
    """
    c = math.log(sigma * math.sqrt(2 * math.pi))
    log_mu = -0.5 * (x / sigma) ** 2 - c
    z = (2.0 * x - 1.0) / (2.0 * sigma * sigma)
    with np.errstate(over="ignore"):
        u = q * np.expm1(z)
    small = (alpha + 1.0) * np.abs(u) <= 0.5
    out = np.empty_like(x)
    if np.any(small):
        out[small] = np.exp(log_mu[small]) * _binomial_series(u[small], alpha)
    big = ~small
    if np.any(big):
        xb, lm = x[big], log_mu[big]
        log_nu = lm + _log_mixture_ratio(xb, q, sigma)
        mu = np.exp(lm)
        nu1 = np.exp(-0.5 * ((xb - 1.0) / sigma) ** 2 - c)
        out[big] = (np.exp(alpha * lm + (1.0 - alpha) * log_nu) - mu
                    + (alpha - 1.0) * q * (nu1 - mu))
    return out


def _panel_nodes(lo, hi, n_panels):
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return x, w


def sgm_renyi(alpha: float, q: float, sigma: float, *, radius_scale: float = 1.0,
              resolution: float = 1.0, max_widenings: int = 4) -> float:
    """Rényi divergence of order alpha of the sampled Gaussian mechanism.

    Args:
      alpha: Rényi order, > 1.
      q: Sampling probability in [0, 1].
      sigma: Noise multiplier (noise std over sensitivity), > 0.
      radius_scale: Multiplier on the truncation radius. Exposed so callers can
        check that the result does not move when the window grows.
      resolution: Multiplier on the number of quadrature panels.
      max_widenings: How often the window may be doubled before giving up.

    Returns:
      ``S_alpha(q, sigma)``; exactly 0 at q=0 and exactly ``alpha/(2 sigma^2)``
      at q=1.

    Raises:
      NumericalError: if the analytic tail bound stays above the target.
    """
    if not alpha > 1 or not math.isfinite(alpha):
        raise ValueError(f"alpha must be a finite real > 1, got {alpha}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return gaussian_rdp(alpha, 1.0, sigma)
    return _sgm_cached(float(alpha), float(q), float(sigma), float(radius_scale),
                       float(resolution), int(max_widenings))


@lru_cache(maxsize=65536)
def _sgm_cached(alpha, q, sigma, radius_scale, resolution, max_widenings):
    mode = _mode(alpha, q, sigma)
    width = 1.0 / math.sqrt(1.0 / sigma ** 2 + (alpha - 1.0) / (4.0 * sigma ** 4))
    R = max(12.0, math.sqrt(2.0 * alpha * math.log(1e16))) * radius_scale
    err = math.inf
    for _ in range(max_widenings + 1):
        lo = min(-R * sigma, mode - R * sigma)
        hi = max(1.0 + R * sigma, mode + R * sigma)
        n_panels = max(64, math.ceil(resolution * (hi - lo) / (0.5 * width)))
        x, w = _panel_nodes(lo, hi, n_panels)
        logf = _log_integrand(x, alpha, q, sigma)
        m = float(np.max(logf))
        log_I = m + math.log(float(np.dot(w, np.exp(logf - m))))

        # log-concavity: beyond each end the integrand decays at least
        # exponentially with the slope it has there
        tails = 0.0
        for end, sign in ((lo, 1.0), (hi, -1.0)):
            s = sign * _log_integrand_slope(end, alpha, q, sigma)
            lf = float(_log_integrand(np.array([end]), alpha, q, sigma)[0])
            tails += math.exp(lf - log_I) / s if s > 0 else math.inf

        if log_I < 1.0:
            # recompute I - 1 without cancellation, as mu-expectation of a
            # non-negative term; mu's own tails bound the truncation error
            J = float(np.dot(w, _centered_density(x, alpha, q, sigma)))
            mu_tail = special.ndtr(lo / sigma) + special.ndtr(-hi / sigma)
            err_abs = tails * math.exp(log_I) + mu_tail * (1.0 + (alpha - 1.0) * (1.0 + q))
            err = err_abs / J if J > 0 else math.inf
            if J > 0 and err < _TAIL_RTOL:
                value = math.log1p(J) / (alpha - 1.0)
                break
            if J <= 0 and err_abs < 1e-300:
                value = 0.0
                break
        else:
            err = tails
            if err < _TAIL_RTOL:
                value = log_I / (alpha - 1.0)
                break
        R *= 2.0
    else:
        raise NumericalError(
            f"sgm_renyi(alpha={alpha}, q={q}, sigma={sigma}) tail bound not met", err)

    if value > sgm_small_q_heuristic(alpha, q, sigma):
        log.debug("S_alpha(%g, %g) = %g exceeds the 2 alpha q^2/sigma^2 heuristic",
                  q, sigma, value)
    return max(value, 0.0)


@dataclasses.dataclass(frozen=True)
class RdpCurve:
    """Pairs ``(alpha, epsilon)`` with strictly increasing alphas."""

    points: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        pts = tuple((float(a), float(e)) for a, e in self.points)
        object.__setattr__(self, "points", pts)
        for a, e in pts:
            if not a > 1:
                raise ValueError(f"alpha must exceed 1, got {a}")
            if not e >= 0:
                raise ValueError(f"epsilon must be >= 0, got {e}")
        if any(b[0] <= a[0] for a, b in zip(pts, pts[1:])):
            raise ValueError("alphas must be strictly increasing")

    @classmethod
    def from_arrays(cls, alphas: Iterable[float], epsilons: Iterable[float]):
        return cls(tuple(zip(alphas, epsilons)))

    @property
    def alphas(self) -> np.ndarray:
        return np.array([a for a, _ in self.points])

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([e for _, e in self.points])


def rdp_to_dp(curve: RdpCurve, delta: float) -> Tuple[float, float]:
    """Converts an RDP curve to (epsilon, delta)-DP.

    Uses ``eps = eps_rdp(alpha) + log(1/delta) / (alpha - 1)`` minimised over
    the curve's grid.

    Returns:
      ``(epsilon, alpha_star)``.
    """
    if not curve.points:
        raise ValueError("cannot convert an empty RDP curve")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    a = curve.alphas
    eps = curve.epsilons + math.log(1.0 / delta) / (a - 1.0)
    i = int(np.argmin(eps))
    return float(eps[i]), float(a[i])


def sgm_table(alpha: float, q: float, sigmas: Sequence[float]) -> np.ndarray:
    """``sgm_renyi`` at several noise levels, inf where sigma is 0."""
    return np.array([sgm_renyi(alpha, q, s) if s > 0 else math.inf
                     for s in sigmas])
