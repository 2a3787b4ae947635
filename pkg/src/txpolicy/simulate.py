"""Discrete-event simulation of the finite-buffer sender under a threshold policy.

The event loop follows the system's three event types: Poisson packet
arrivals (admitted while fewer than B packets are present), instantaneous
service starts (path "a" iff the occupancy at the start is at most T), and
service completions (success drawn at completion with the path's loss
probability; a lost packet still consumed its transmission time).  Counters
only advance for events inside the horizon.

Randomness comes from counter-based Philox streams: replication r of a
threshold-T run draws from Generator(Philox(SeedSequence((base_seed, T, r)))),
so runs are reproducible bit-for-bit and streams never overlap.  Replications
are embarrassingly parallel; the jitted kernel releases the GIL.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import stats

from .errors import ConfigError, OutOfRange
from .model import (
    ACTION_A,
    ACTION_B,
    Deterministic,
    Exponential,
    ServiceDistribution,
    Uniform,
    ValidatedModel,
)

_EXPONENTIAL, _DETERMINISTIC, _UNIFORM = 0, 1, 2


def _dist_code(dist: ServiceDistribution) -> tuple[int, float, float]:
    if isinstance(dist, Exponential):
        return _EXPONENTIAL, dist.mu, 0.0
    if isinstance(dist, Deterministic):
        return _DETERMINISTIC, dist.tau, 0.0
    return _UNIFORM, dist.alpha, dist.beta


@njit(cache=True, nogil=True)
def _draw_service(gen, kind, p1, p2):
    if kind == _EXPONENTIAL:
        return gen.exponential(1.0 / p1)
    if kind == _DETERMINISTIC:
        return p1
    return p1 + (p2 - p1) * gen.random()


@njit(cache=True, nogil=True)
def _event_loop(
    gen,
    lam,
    buffer_size,
    threshold,
    kind_a,
    p1_a,
    p2_a,
    kind_b,
    p1_b,
    p2_b,
    loss_a,
    loss_b,
    horizon,
):
    waiting = 0  # packets in the buffer, excluding the one in service
    busy = 0  # 0 or 1
    serving_a = False
    service_start = 0.0
    arrivals = 0
    accepted = 0
    blocked = 0
    success = 0
    fail = 0
    busy_time = 0.0

    t_arrival = gen.exponential(1.0 / lam) if lam > 0 else np.inf
    t_complete = np.inf

    while True:
        completion_next = t_complete <= t_arrival
        t = t_complete if completion_next else t_arrival
        if t > horizon:
            break
        if completion_next:
            busy = 0
            busy_time += t - service_start
            if serving_a:
                if gen.random() >= loss_a:
                    success += 1
                else:
                    fail += 1
            else:
                if gen.random() >= loss_b:
                    success += 1
                else:
                    fail += 1
            t_complete = np.inf
            if waiting > 0:
                serving_a = waiting <= threshold
                waiting -= 1
                busy = 1
                service_start = t
                if serving_a:
                    t_complete = t + _draw_service(gen, kind_a, p1_a, p2_a)
                else:
                    t_complete = t + _draw_service(gen, kind_b, p1_b, p2_b)
        else:
            arrivals += 1
            if waiting + busy < buffer_size:
                accepted += 1
                waiting += 1
                if busy == 0:
                    serving_a = waiting <= threshold
                    waiting -= 1
                    busy = 1
                    service_start = t
                    if serving_a:
                        t_complete = t + _draw_service(gen, kind_a, p1_a, p2_a)
                    else:
                        t_complete = t + _draw_service(gen, kind_b, p1_b, p2_b)
            else:
                blocked += 1
            t_arrival = t + (gen.exponential(1.0 / lam) if lam > 0 else np.inf)

    if busy == 1:
        busy_time += horizon - service_start
    in_system = waiting + busy
    return arrivals, accepted, blocked, success, fail, in_system, busy_time


def run_replication(
    lam: float,
    buffer_size: int,
    threshold: int,
    dist_a: ServiceDistribution,
    dist_b: ServiceDistribution,
    loss_a: float,
    loss_b: float,
    horizon: float,
    seed_key: tuple,
) -> dict:
    """One event-loop run; returns raw counters plus the busy-time integral."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed_key)))
    ka, a1, a2 = _dist_code(dist_a)
    kb, b1, b2 = _dist_code(dist_b)
    arrivals, accepted, blocked, success, fail, in_system, busy_time = _event_loop(
        gen, lam, buffer_size, threshold, ka, a1, a2, kb, b1, b2, loss_a, loss_b, horizon
    )
    return {
        "arrivals": arrivals,
        "accepted": accepted,
        "blocked": blocked,
        "served_success": success,
        "served_fail": fail,
        "in_system_at_horizon": in_system,
        "busy_time": busy_time,
        "throughput": success / horizon,
    }


@dataclass(frozen=True)
class SimConfig:
    model: ValidatedModel
    dist_a: ServiceDistribution
    dist_b: ServiceDistribution
    threshold: int
    horizon: float = 100_000.0
    replications: int = 30
    base_seed: int = 20260809

    def __post_init__(self):
        if self.horizon <= 0:
            raise ConfigError(f"horizon must be > 0, got {self.horizon}")
        if self.replications < 2:
            raise ConfigError(f"need at least 2 replications, got {self.replications}")
        B = self.model.buffer_size
        if not 0 <= self.threshold <= B - 1:
            raise OutOfRange(f"threshold {self.threshold} outside 0..{B - 1}")


@dataclass(frozen=True)
class SimResult:
    threshold: int
    horizon: float
    base_seed: int
    throughputs: np.ndarray
    counts: dict  # name -> per-replication int array
    mean: float
    ci_half_width: float  # 95% Student-t over replication means

    @property
    def ci(self) -> tuple[float, float]:
        return self.mean - self.ci_half_width, self.mean + self.ci_half_width

    def contains(self, value: float) -> bool:
        lo, hi = self.ci
        return lo <= value <= hi


def simulate(config: SimConfig, threads: int = 1) -> SimResult:
    """Run all replications of one threshold and summarize."""
    m = config.model
    lam = m.arrival_rate
    loss_a, loss_b = m.action(ACTION_A).loss, m.action(ACTION_B).loss

    def one(rep: int) -> dict:
        return run_replication(
            lam,
            m.buffer_size,
            config.threshold,
            config.dist_a,
            config.dist_b,
            loss_a,
            loss_b,
            config.horizon,
            (config.base_seed, config.threshold, rep),
        )

    reps = range(config.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, reps))
    else:
        rows = [one(r) for r in reps]

    thr = np.array([r["throughput"] for r in rows])
    counts = {
        key: np.array([r[key] for r in rows])
        for key in (
            "arrivals",
            "accepted",
            "blocked",
            "served_success",
            "served_fail",
            "in_system_at_horizon",
        )
    }
    n = len(thr)
    half = float(stats.t.ppf(0.975, n - 1) * thr.std(ddof=1) / np.sqrt(n))
    return SimResult(
        threshold=config.threshold,
        horizon=config.horizon,
        base_seed=config.base_seed,
        throughputs=thr,
        counts=counts,
        mean=float(thr.mean()),
        ci_half_width=half,
    )


def simulate_sweep(
    model: ValidatedModel,
    dist_a: ServiceDistribution,
    dist_b: ServiceDistribution,
    thresholds=None,
    horizon: float = 100_000.0,
    replications: int = 30,
    base_seed: int = 20260809,
    threads: int = 1,
) -> list[SimResult]:
    """Simulate a list of thresholds (default: all of 0 .. B-1)."""
    if thresholds is None:
        thresholds = range(model.buffer_size)
    out = []
    for T in thresholds:
        config = SimConfig(
            model=model,
            dist_a=dist_a,
            dist_b=dist_b,
            threshold=int(T),
            horizon=horizon,
            replications=replications,
            base_seed=base_seed,
        )
        out.append(simulate(config, threads=threads))
    return out
