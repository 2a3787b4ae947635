"""Arrival-count kernels: discounted transition weights per service law.

For a service duration T ~ g(t) and Poisson(lambda) arrivals, the weight of
seeing exactly m arrivals during one (discounted) service is

    w[m] = E[e^{-gamma T} * P(m arrivals in T)]
         = integral e^{-gamma t} * e^{-lambda t} (lambda t)^m / m! * g(t) dt.

Weights are truncated at m = M; the residual mass (buffer overflow) is
returned separately so that callers can lump it onto the full-buffer state.
Setting gamma = 0 yields the plain (undiscounted) arrival-count law used by
the embedded-chain policy evaluator; the model layer enforces gamma > 0 for
the discounted solvers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import InvalidSupport, NonPositiveRate
from .model import Deterministic, Exponential, ServiceDistribution, Uniform

NORMALIZATION_TOL = 1e-12
# The uniform-law integrals are evaluated two independent ways (regularized
# lower incomplete gamma vs adaptive Gauss-Legendre); disagreement beyond
# this is treated as a numerical fault, not rounded over.
CROSS_CHECK_TOL = 1e-8


def poisson_count_prob(m: int, lam: float, t: float) -> float:
    """P(m arrivals in an interval of length t), computed in log-space."""
    if m < 0 or lam < 0 or t < 0:
        raise NonPositiveRate(f"need m, lam, t >= 0, got {(m, lam, t)}")
    mean = lam * t
    if mean == 0:
        return 1.0 if m == 0 else 0.0
    return float(np.exp(-mean + m * np.log(mean) - gammaln(m + 1)))


@dataclass(frozen=True)
class DiscountedWeights:
    """Truncated discounted arrival-count weights for one service law.

    weights[m] is the mass of m arrivals, m = 0 .. M; `overflow` is the
    residual routed to the full-buffer state; `total_discount` = E[e^{-gamma T}].
    """

    weights: np.ndarray
    overflow: float
    total_discount: float

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))


def clamp_residual_mass(overflow: float) -> float:
    """Clamp float-rounding negativity to zero; larger negativity is a fault."""
    if overflow < 0:
        if overflow < -NORMALIZATION_TOL:
            raise ArithmeticError(
                f"overflow mass {overflow} is negative beyond rounding residue"
            )
        return 0.0
    return overflow


def _finalize(weights: np.ndarray, total: float) -> DiscountedWeights:
    low = weights.min()
    if low < 0:
        if low < -NORMALIZATION_TOL:
            raise ArithmeticError(f"weight {low} is negative beyond rounding residue")
        weights = np.maximum(weights, 0.0)
    overflow = clamp_residual_mass(total - weights.sum())
    return DiscountedWeights(weights=weights, overflow=float(overflow), total_discount=total)


def weights_exponential(lam: float, mu: float, gamma: float, max_arrivals: int) -> DiscountedWeights:
    """Closed form w[m] = mu * lam^m / (gamma + mu + lam)^(m+1)."""
    if mu <= 0 or lam < 0 or gamma < 0:
        raise NonPositiveRate(f"need mu > 0 and lam, gamma >= 0, got {(lam, mu, gamma)}")
    total = mu / (gamma + mu)
    w = np.zeros(max_arrivals + 1)
    if lam == 0:
        w[0] = total
    else:
        m = np.arange(max_arrivals + 1)
        w[:] = np.exp(np.log(mu) + m * np.log(lam) - (m + 1) * np.log(gamma + mu + lam))
    return _finalize(w, total)


def weights_deterministic(lam: float, tau: float, gamma: float, max_arrivals: int) -> DiscountedWeights:
    """w[m] = e^{-gamma tau} * Poisson_m(lam tau)."""
    if tau <= 0 or lam < 0 or gamma < 0:
        raise NonPositiveRate(f"need tau > 0 and lam, gamma >= 0, got {(lam, tau, gamma)}")
    total = float(np.exp(-gamma * tau))
    pmf = np.array([poisson_count_prob(m, lam, tau) for m in range(max_arrivals + 1)])
    return _finalize(total * pmf, total)


def _uniform_total_discount(alpha: float, beta: float, gamma: float) -> float:
    if gamma == 0:
        return 1.0
    # (e^{-gamma alpha} - e^{-gamma beta}) / (gamma (beta - alpha)), via expm1
    return float(-np.exp(-gamma * alpha) * np.expm1(-gamma * (beta - alpha)) / (gamma * (beta - alpha)))


def _uniform_weights_gamma_path(lam, alpha, beta, gamma, max_arrivals):
    # w[m] = (beta-alpha)^{-1} lam^m / c^{m+1} * [P(m+1, c beta) - P(m+1, c alpha)]
    # with c = gamma + lam and P the regularized lower incomplete gamma.
    c = gamma + lam
    m = np.arange(max_arrivals + 1)
    scale = np.exp(m * np.log(lam) - (m + 1) * np.log(c)) / (beta - alpha)
    return scale * (gammainc(m + 1, c * beta) - gammainc(m + 1, c * alpha))


def _uniform_weights_quadrature(lam, alpha, beta, gamma, max_arrivals):
    def integrand(t, m):
        return np.exp(-gamma * t) * np.array([poisson_count_prob(m, lam, ti) for ti in t])

    return np.array(
        [
            gauss_legendre_adaptive(lambda t, m=m: integrand(t, m), alpha, beta) / (beta - alpha)
            for m in range(max_arrivals + 1)
        ]
    )


def weights_uniform(lam: float, alpha: float, beta: float, gamma: float, max_arrivals: int) -> DiscountedWeights:
    """Uniform service on [alpha, beta]; incomplete-gamma evaluation with a
    quadrature cross-check (hard error on disagreement)."""
    if not (0 <= alpha < beta):
        raise InvalidSupport(f"need 0 <= alpha < beta, got [{alpha}, {beta}]")
    if lam < 0 or gamma < 0:
        raise NonPositiveRate(f"need lam, gamma >= 0, got {(lam, gamma)}")
    total = _uniform_total_discount(alpha, beta, gamma)
    w = np.zeros(max_arrivals + 1)
    if lam == 0:
        w[0] = total
        return _finalize(w, total)
    w[:] = _uniform_weights_gamma_path(lam, alpha, beta, gamma, max_arrivals)
    check = _uniform_weights_quadrature(lam, alpha, beta, gamma, max_arrivals)
    gap = np.max(np.abs(w - check))
    if gap > CROSS_CHECK_TOL:
        raise ArithmeticError(
            f"uniform weights: incomplete-gamma and quadrature paths differ by {gap}"
        )
    return _finalize(w, total)


def total_discount(dist: ServiceDistribution, gamma: float) -> float:
    """E[e^{-gamma T}] for the given service law."""
    if isinstance(dist, Exponential):
        return dist.mu / (gamma + dist.mu)
    if isinstance(dist, Deterministic):
        return float(np.exp(-gamma * dist.tau))
    return _uniform_total_discount(dist.alpha, dist.beta, gamma)


def discounted_weights(dist: ServiceDistribution, lam: float, gamma: float, max_arrivals: int) -> DiscountedWeights:
    """Dispatch on the service law."""
    if isinstance(dist, Exponential):
        return weights_exponential(lam, dist.mu, gamma, max_arrivals)
    if isinstance(dist, Deterministic):
        return weights_deterministic(lam, dist.tau, gamma, max_arrivals)
    return weights_uniform(lam, dist.alpha, dist.beta, gamma, max_arrivals)


def expected_reward(loss_p: float, total_discount: float, size_factor: float = 1.0) -> float:
    """Expected discounted impulse reward of one transmission attempt.

    size_factor * (1 - loss_p) * E[e^{-gamma T}]; loss_p = 1 is accepted as
    the certain-loss boundary.
    """
    if not (0 <= loss_p <= 1):
        raise NonPositiveRate(f"loss probability must be in [0, 1], got {loss_p}")
    if not (0 < total_discount <= 1):
        raise NonPositiveRate(f"total_discount must be in (0, 1], got {total_discount}")
    if size_factor < 0:
        raise NonPositiveRate(f"size_factor must be >= 0, got {size_factor}")
    return size_factor * (1.0 - loss_p) * total_discount


# -------- adaptive Gauss-Legendre (cross-check path) --------

_GL32 = np.polynomial.legendre.leggauss(32)
_GL64 = np.polynomial.legendre.leggauss(64)


def _gl_on(f, a: float, b: float, rule) -> float:
    nodes, wts = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return float(half * np.dot(wts, f(mid + half * nodes)))


def gauss_legendre_adaptive(f, a: float, b: float, tol: float = 1e-13, max_depth: int = 24) -> float:
    """Adaptive bisection with 32- vs 64-node Gauss-Legendre agreement test."""

    def recurse(lo, hi, depth):
        coarse = _gl_on(f, lo, hi, _GL32)
        fine = _gl_on(f, lo, hi, _GL64)
        if abs(fine - coarse) <= tol * max(1.0, abs(fine)) or depth >= max_depth:
            return fine
        mid = 0.5 * (lo + hi)
        return recurse(lo, mid, depth + 1) + recurse(mid, hi, depth + 1)

    return recurse(a, b, 0)
