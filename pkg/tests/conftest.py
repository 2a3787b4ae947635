"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from txpolicy import ActionParams, ModelParams, ValidatedModel, validate


def make_model(
    lam=17.0,
    B=10,
    gamma=0.01,
    mu_a=10.0,
    p_a=0.25,
    mu_b=13.0,
    p_b=0.42,
    reward_mode="unit",
    channel=None,
    sizes=None,
    allow_degenerate=False,
) -> ValidatedModel:
    params = ModelParams(
        arrival_rate=lam,
        buffer_size=B,
        discount_rate=gamma,
        action_a=ActionParams(mu=mu_a, loss=p_a),
        action_b=ActionParams(mu=mu_b, loss=p_b),
        reward_mode=reward_mode,
    )
    return validate(params, channel, sizes, allow_degenerate=allow_degenerate)


def random_exponential_model(rng: np.random.Generator, max_buffer=30) -> ValidatedModel:
    """Random model with the orderings respected; load ratio in [0.1, 3]."""
    mu_a = rng.uniform(0.5, 5.0)
    mu_b = mu_a * rng.uniform(1.1, 4.0)
    p_a = rng.uniform(0.01, 0.6)
    p_b = min(p_a + rng.uniform(0.05, 0.3), 0.9)
    lam = mu_a * rng.uniform(0.1, 3.0)
    gamma = float(np.exp(rng.uniform(np.log(0.05), np.log(1.0))))
    B = int(rng.integers(2, max_buffer + 1))
    return make_model(lam=lam, B=B, gamma=gamma, mu_a=mu_a, p_a=p_a, mu_b=mu_b, p_b=p_b)


def enumerate_policy_values(op) -> np.ndarray:
    """Exhaustive-policy oracle: exact linear solve per stationary policy.

    Returns the pointwise maximum of the fixed policies' value vectors, which
    equals the optimal value function of the discounted problem.
    """
    t_a, r_a = op.action_matrices("a")
    t_b, r_b = op.action_matrices("b")
    S = op.num_states
    hk = op.boundary.shape[0]
    n_dec = S - hk
    eye = np.eye(S)
    best = np.full(S, -np.inf)
    for bits in itertools.product((0, 1), repeat=n_dec):
        t = t_a.copy()
        r = r_a.copy()
        for i, bit in enumerate(bits):
            if bit:
                t[hk + i] = t_b[hk + i]
                r[hk + i] = r_b[hk + i]
        v = np.linalg.solve(eye - t, r)
        best = np.maximum(best, v)
    return best


def power_method_stationary(P: np.ndarray, tol=1e-15, max_iter=10**6) -> np.ndarray:
    """Damped power iteration; the damping removes periodicity without
    changing the stationary vector."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    M = 0.5 * (np.eye(n) + P)
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        new = x @ M
        if np.max(np.abs(new - x)) < tol:
            return new / new.sum()
        x = new
    raise AssertionError("power method did not converge")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
