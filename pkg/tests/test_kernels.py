"""Arrival-kernel oracles: closed forms vs independent quadrature."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from txpolicy import (
    Deterministic,
    Exponential,
    Uniform,
    discounted_weights,
    expected_reward,
    poisson_count_prob,
    total_discount,
    weights_deterministic,
    weights_exponential,
    weights_uniform,
)
from txpolicy.errors import InvalidSupport, NonPositiveRate
from txpolicy.kernels import gauss_legendre_adaptive

# frozen from a 60-digit mpmath evaluation of e^-1300 * 1300^1200 / 1200!
POIS_1200_LAM13_T100 = 2.220079896574015587202534e-4


def quad_weight(dist, lam, gamma, m):
    """Independent oracle: adaptive Gauss-Kronrod integration of the
    discounted arrival-count integrand against the service density."""

    def integrand(t):
        return np.exp(-gamma * t) * poisson_count_prob(m, lam, t) * density(t)

    if isinstance(dist, Exponential):
        density = lambda t: dist.mu * np.exp(-dist.mu * t)
        val, err = integrate.quad(
            integrand, 0, np.inf, limit=400, epsabs=1e-14, epsrel=1e-12
        )
    elif isinstance(dist, Deterministic):
        return np.exp(-gamma * dist.tau) * poisson_count_prob(m, lam, dist.tau)
    else:
        density = lambda t: 1.0 / (dist.beta - dist.alpha)
        val, err = integrate.quad(
            integrand, dist.alpha, dist.beta, limit=400, epsabs=1e-14, epsrel=1e-12
        )
    return val


class TestPoissonCountProb:
    def test_zero_arrivals_is_plain_exponential(self):
        for lam, t in [(0.5, 2.0), (13.0, 0.1), (4.0, 7.0)]:
            assert poisson_count_prob(0, lam, t) == pytest.approx(np.exp(-lam * t), rel=1e-15)

    def test_zero_rate(self):
        assert poisson_count_prob(0, 0.0, 5.0) == 1.0
        assert poisson_count_prob(3, 0.0, 5.0) == 0.0
        assert poisson_count_prob(0, 2.0, 0.0) == 1.0

    def test_large_count_matches_high_precision_oracle(self):
        got = poisson_count_prob(1200, 13.0, 100.0)
        assert got == pytest.approx(POIS_1200_LAM13_T100, rel=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(NonPositiveRate):
            poisson_count_prob(-1, 1.0, 1.0)
        with pytest.raises(NonPositiveRate):
            poisson_count_prob(1, -1.0, 1.0)

    @given(
        m=st.integers(0, 200),
        lam=st.floats(0.01, 50),
        t=st.floats(0.001, 50),
    )
    @settings(max_examples=150, deadline=None)
    def test_in_unit_interval(self, m, lam, t):
        p = poisson_count_prob(m, lam, t)
        assert 0.0 <= p <= 1.0


class TestWeightsExponential:
    def test_no_arrival_limit(self):
        dw = weights_exponential(1e-300, 3.0, 0.5, 5)
        assert dw.weights[0] == pytest.approx(3.0 / 3.5, rel=1e-12)
        assert np.all(dw.weights[1:] < 1e-290)
        assert dw.overflow < 1e-290
        dw0 = weights_exponential(0.0, 3.0, 0.5, 5)
        assert dw0.weights[0] == pytest.approx(3.0 / 3.5, rel=1e-15)
        assert dw0.overflow == 0.0

    def test_geometric_series_total(self):
        lam, mu, gamma = 5.0, 3.0, 0.2
        dw = weights_exponential(lam, mu, gamma, 400)
        # partial sums approach mu/(gamma+mu); tail bounded by the geometric ratio
        ratio = lam / (gamma + mu + lam)
        tail_bound = dw.weights[-1] * ratio / (1 - ratio)
        assert dw.weights.sum() == pytest.approx(mu / (gamma + mu), abs=2 * tail_bound + 1e-15)
        assert dw.total_discount == mu / (gamma + mu)

    def test_matches_quadrature(self):
        lam, mu, gamma = 17.0, 13.0, 0.01
        dw = weights_exponential(lam, mu, gamma, 9)
        dist = Exponential(mu)
        for m in range(10):
            assert dw.weights[m] == pytest.approx(quad_weight(dist, lam, gamma, m), abs=1e-10)

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(NonPositiveRate):
            weights_exponential(1.0, 0.0, 0.1, 3)


class TestWeightsDeterministic:
    def test_undiscounted_normalizes(self):
        dw = weights_deterministic(2.0, 1.5, 0.0, 4)
        assert dw.total_discount == 1.0
        assert dw.weights.sum() + dw.overflow == pytest.approx(1.0, abs=1e-14)

    def test_instantaneous_service_limit(self):
        dw = weights_deterministic(5.0, 1e-12, 0.3, 4)
        assert dw.weights[0] == pytest.approx(1.0, rel=1e-9)
        assert dw.weights[1:].sum() < 1e-10

    def test_matches_direct_pmf(self):
        lam, tau, gamma = 1.3, 1.0, 0.0
        dw = weights_deterministic(lam, tau, gamma, 5)
        for m in range(6):
            assert dw.weights[m] == pytest.approx(poisson_count_prob(m, lam, tau), abs=1e-14)


class TestWeightsUniform:
    def test_degenerate_support_matches_deterministic(self):
        lam, gamma, alpha, eps = 9.0, 0.01, 0.3, 1e-6
        du = weights_uniform(lam, alpha, alpha + eps, gamma, 6)
        dd = weights_deterministic(lam, alpha, gamma, 6)
        assert np.max(np.abs(du.weights - dd.weights)) < 1e-4
        assert du.total_discount == pytest.approx(dd.total_discount, abs=1e-4)

    def test_normalization(self):
        dw = weights_uniform(9.0, 0.2 / 9, 1.8 / 9, 0.01, 8)
        assert dw.weights.sum() + dw.overflow == pytest.approx(dw.total_discount, abs=1e-12)

    def test_incomplete_gamma_agrees_with_quadrature(self):
        lam, gamma = 9.0, 0.01
        alpha, beta = 0.2 / 9, 1.8 / 9
        dw = weights_uniform(lam, alpha, beta, gamma, 8)
        dist = Uniform(alpha, beta)
        for m in range(9):
            assert dw.weights[m] == pytest.approx(quad_weight(dist, lam, gamma, m), abs=1e-10)

    def test_rejects_bad_support(self):
        with pytest.raises(InvalidSupport):
            weights_uniform(1.0, 0.5, 0.5, 0.1, 3)
        with pytest.raises(InvalidSupport):
            weights_uniform(1.0, -0.1, 0.5, 0.1, 3)


class TestExpectedReward:
    def test_certain_loss_boundary(self):
        assert expected_reward(1.0, 0.9) == 0.0

    def test_exponential_closed_form(self):
        mu_b, p_b, gamma = 12.0, 0.42, 0.01
        got = expected_reward(p_b, total_discount(Exponential(mu_b), gamma))
        assert got == pytest.approx(0.58 * 12.0 / 12.01, rel=1e-15)

    def test_lossless_deterministic(self):
        tau, gamma = 0.7, 0.2
        got = expected_reward(0.0, total_discount(Deterministic(tau), gamma))
        assert got == pytest.approx(np.exp(-gamma * tau), rel=1e-15)

    def test_size_factor_scales(self):
        assert expected_reward(0.5, 0.8, size_factor=3.0) == pytest.approx(1.2)


DIST_STRATEGY = st.one_of(
    st.builds(Exponential, mu=st.floats(0.2, 30)),
    st.builds(Deterministic, tau=st.floats(0.01, 5)),
    st.builds(
        Uniform,
        alpha=st.floats(0.0, 0.5),
        beta=st.floats(0.6, 5),
    ),
)


class TestSharedInvariants:
    @given(
        dist=DIST_STRATEGY,
        lam=st.floats(0.0, 30),
        gamma=st.floats(0.0, 2),
        M=st.integers(0, 12),
    )
    @settings(max_examples=120, deadline=None)
    def test_normalization_and_nonnegativity(self, dist, lam, gamma, M):
        dw = discounted_weights(dist, lam, gamma, M)
        assert np.all(dw.weights >= 0)
        assert dw.overflow >= 0
        assert 0 < dw.total_discount <= 1
        assert dw.weights.sum() + dw.overflow == pytest.approx(dw.total_discount, abs=1e-12)

    @given(dist=DIST_STRATEGY, gamma=st.floats(0.01, 2))
    @settings(max_examples=80, deadline=None)
    def test_total_discount_decreases_in_gamma(self, dist, gamma):
        assert total_discount(dist, gamma + 0.1) < total_discount(dist, gamma)

    def test_random_draws_match_quadrature(self, rng):
        """100 random parameter draws per distribution vs scipy.quad."""
        for kind in ("exponential", "deterministic", "uniform"):
            for _ in range(100):
                lam = rng.uniform(0.1, 25)
                gamma = rng.uniform(0.001, 1.5)
                M = int(rng.integers(0, 9))
                if kind == "exponential":
                    dist = Exponential(rng.uniform(0.3, 20))
                elif kind == "deterministic":
                    dist = Deterministic(rng.uniform(0.02, 3))
                else:
                    alpha = rng.uniform(0, 0.4)
                    dist = Uniform(alpha, alpha + rng.uniform(0.05, 3))
                dw = discounted_weights(dist, lam, gamma, M)
                for m in range(M + 1):
                    want = quad_weight(dist, lam, gamma, m)
                    assert dw.weights[m] == pytest.approx(
                        want, rel=1e-9, abs=1e-12
                    ), f"{kind} m={m}"


class TestAdaptiveQuadrature:
    def test_polynomial_is_exact(self):
        got = gauss_legendre_adaptive(lambda t: 3 * t**2, 0.0, 2.0)
        assert got == pytest.approx(8.0, rel=1e-14)

    def test_oscillatory_integrand_subdivides(self):
        got = gauss_legendre_adaptive(lambda t: np.sin(40 * t), 0.0, np.pi)
        want = (1 - np.cos(40 * np.pi)) / 40
        assert got == pytest.approx(want, abs=1e-12)
