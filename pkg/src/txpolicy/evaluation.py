"""Long-run throughput of a fixed threshold policy via its embedded chain.

Fixing the policy turns the system into a semi-Markov process observed at
decision epochs (service completions and arrivals to an empty system).  Its
state space is

    Omega = {(0, idle)} u {(i, a): 0 < i <= T} u {(i, b): T < i <= B-1},

of size B.  The chain's transition rows come from the undiscounted
arrival-count law of the active service distribution (the gamma = 0 kernels),
the per-state holding times are 1/lambda at the idle state and the mean
service time otherwise, and each transmission earns an expected impulse
reward of 1 - p_u.  Stationary visit frequencies are time-weighted to yield
the throughput, computed by two formulas that must agree to 1e-10.

The policy uses path "a" iff the occupancy at the start of a transmission
(including the packet being sent) is at most T; in particular an arrival to
an empty system starts at occupancy 1 and is routed to path "a" iff T >= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonStochasticRow, OutOfRange, ReducibleChain
from .kernels import clamp_residual_mass, discounted_weights
from .model import ACTION_A, ACTION_B, ServiceDistribution, ValidatedModel

IDLE = "0"

STATIONARY_TOL = 1e-12
FORMULA_AGREEMENT_TOL = 1e-10


def _occupancy_rows(dist: ServiceDistribution, lam: float, B: int) -> np.ndarray:
    dw = discounted_weights(dist, lam, 0.0, B - 1)
    partial = np.cumsum(dw.weights)
    P = np.zeros((B, B))
    for i in range(1, B):
        m_max = B - i
        P[i, i - 1 : B] = dw.weights[: m_max + 1]
        P[i, B - 1] += clamp_residual_mass(1.0 - partial[m_max])
    return P


def service_transition_matrix(dist: ServiceDistribution, model: ValidatedModel) -> np.ndarray:
    """Occupancy transition rows for one service law.

    Entry [i, j], i = 1 .. B-1, is the probability of j packets right after a
    transmission that started with i in the system; arrivals beyond the
    buffer are lumped at j = B-1.  Row 0 is unused (no transmission starts at
    an empty system).  Rows are checked to sum to one.
    """
    P = _occupancy_rows(dist, model.arrival_rate, model.buffer_size)
    sums = P[1:].sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-12):
        raise NonStochasticRow(f"service transition rows sum to {sums}, not 1")
    return P


@dataclass(frozen=True)
class EmbeddedChain:
    """Embedded decision-epoch chain of a fixed threshold policy."""

    threshold: int
    labels: tuple[str, ...]  # per state: "0" (idle), "a" or "b"
    transition: np.ndarray  # (B, B) row-stochastic
    holding: np.ndarray  # mean sojourn per visit
    reward: np.ndarray  # expected impulse reward per visit


def build_embedded_chain(
    threshold: int,
    model: ValidatedModel,
    dist_a: ServiceDistribution,
    dist_b: ServiceDistribution,
) -> EmbeddedChain:
    B = model.buffer_size
    if not 0 <= threshold <= B - 1:
        raise OutOfRange(f"threshold {threshold} outside 0..{B - 1}")
    p_a, p_b = model.action(ACTION_A).loss, model.action(ACTION_B).loss
    P_a = service_transition_matrix(dist_a, model)
    P_b = service_transition_matrix(dist_b, model)

    labels = [IDLE] + [ACTION_A if i <= threshold else ACTION_B for i in range(1, B)]
    P = np.zeros((B, B))
    P[0, 1] = 1.0  # arrival to empty; occupancy 1 starts on the labelled path
    holding = np.empty(B)
    reward = np.empty(B)
    holding[0] = 1.0 / model.arrival_rate
    reward[0] = 0.0
    for i in range(1, B):
        if labels[i] == ACTION_A:
            P[i] = P_a[i]
            holding[i] = dist_a.mean()
            reward[i] = 1.0 - p_a
        else:
            P[i] = P_b[i]
            holding[i] = dist_b.mean()
            reward[i] = 1.0 - p_b
    return EmbeddedChain(
        threshold=threshold,
        labels=tuple(labels),
        transition=P,
        holding=holding,
        reward=reward,
    )


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Stationary vector of a row-stochastic matrix by GTH elimination.

    The Grassmann-Taksar-Heyman recursion avoids subtractions, so the result
    is accurate to machine precision; a zero elimination pivot means the
    chain has no unique stationary distribution.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ReducibleChain("transition matrix must be square")
    n = P.shape[0]
    sums = P.sum(axis=1)
    if np.any(P < 0) or np.any(np.abs(sums - 1.0) > 1e-12):
        raise NonStochasticRow(f"rows must sum to 1, got {sums}")
    if n == 1:
        return np.ones(1)
    A = P.copy()
    for k in range(n - 1, 0, -1):
        s = A[k, :k].sum()
        if s <= 0.0:
            raise ReducibleChain(f"state {k} cannot be eliminated (no mass to lower states)")
        A[:k, k] /= s
        A[:k, :k] += np.outer(A[:k, k], A[k, :k])
    x = np.zeros(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ A[:k, k]
    return x / x.sum()


@dataclass(frozen=True)
class ThroughputReport:
    threshold: int
    visit_frequencies: np.ndarray  # pi
    time_fractions: np.ndarray  # pi-tilde
    cycle_time: float  # kappa
    throughput: float
    alt_throughput: float  # channel-occupancy formula
    agreement_gap: float
    stationary_residual: float


def throughput(chain: EmbeddedChain, pi: np.ndarray | None = None) -> ThroughputReport:
    """Time-weight the stationary visits and sum the impulse-reward rates.

    Cross-checks the per-state formula against the channel-occupancy form
    (busy-fraction times mean success rate per path); a gap above 1e-10
    indicates an internal inconsistency and raises.
    """
    if pi is None:
        pi = stationary_distribution(chain.transition)
    residual = float(np.max(np.abs(pi @ chain.transition - pi)))
    kappa = float(pi @ chain.holding)
    tilde = pi * chain.holding / kappa
    value = float(np.sum(tilde * chain.reward / chain.holding))

    alt = 0.0
    for u in (ACTION_A, ACTION_B):
        mask = np.array([lab == u for lab in chain.labels])
        if not mask.any():
            continue
        mean_time = chain.holding[mask][0]
        success = chain.reward[mask][0]
        alt += tilde[mask].sum() * success / mean_time
    gap = abs(value - alt)
    if gap >= FORMULA_AGREEMENT_TOL:
        raise ArithmeticError(f"throughput formulas disagree by {gap}")
    return ThroughputReport(
        threshold=chain.threshold,
        visit_frequencies=pi,
        time_fractions=tilde,
        cycle_time=kappa,
        throughput=value,
        alt_throughput=alt,
        agreement_gap=gap,
        stationary_residual=residual,
    )


@dataclass(frozen=True)
class SweepResult:
    reports: tuple[ThroughputReport, ...]
    best_threshold: int
    is_flat: bool
    is_unimodal: bool

    @property
    def curve(self) -> np.ndarray:
        return np.array([r.throughput for r in self.reports])


def sweep_thresholds(
    model: ValidatedModel,
    dist_a: ServiceDistribution,
    dist_b: ServiceDistribution,
) -> SweepResult:
    """Evaluate every threshold T = 0 .. B-1 and locate the maximizer.

    A flat curve (degenerate equal-action configurations) reports threshold
    0; unimodality of the curve is reported, never assumed.
    """
    reports = tuple(
        throughput(build_embedded_chain(T, model, dist_a, dist_b))
        for T in range(model.buffer_size)
    )
    curve = np.array([r.throughput for r in reports])
    spread = float(curve.max() - curve.min())
    flat = spread <= 1e-12 * max(1.0, abs(float(curve.max())))
    best = 0 if flat else int(curve.argmax())
    rising = np.diff(curve) >= -1e-12
    # unimodal: nonincreasing after the last rise
    first_fall = int(np.argmin(rising)) if not rising.all() else len(curve) - 1
    unimodal = bool(rising.all() or not np.any(np.diff(curve)[first_fall:] > 1e-12))
    return SweepResult(reports=reports, best_threshold=best, is_flat=flat, is_unimodal=unimodal)
