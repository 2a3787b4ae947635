"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; the suite is also part of the default pytest run.

The uniform service law has no stated support in the threshold-sweep
experiments; these tests pin it to [0.1/mu, 1.9/mu] (mean 1/mu), which
reproduces the reference thresholds at both buffer sizes with one
convention.  The solver default elsewhere stays [0.2/mu, 1.8/mu].
"""

import itertools
import time

import numpy as np
import pytest

from txpolicy import (
    ChannelModel,
    Deterministic,
    Exponential,
    SimConfig,
    SingleThreshold,
    Uniform,
    analyze_exponential,
    build_embedded_chain,
    check_concavity,
    check_monotone_nondecreasing,
    check_smdp_equivalence,
    detect_threshold,
    deterministic_sized_operator,
    exponential_operator,
    ge_uniform_operator,
    general_operator,
    simulate,
    solve_mdp,
    sweep_thresholds,
    throughput,
    value_iterate,
)
from txpolicy.model import PacketSizeModel

from conftest import enumerate_policy_values, make_model, random_exponential_model
from test_kernels import quad_weight

SWEEP_SUPPORT = (0.1, 1.9)  # fractions of 1/mu


def passline(n, text):
    print(f"\nACCEPTANCE {n}: PASS - {text}")


def service_triplet(mu_a, mu_b):
    """(deterministic, uniform, exponential) law pairs at the given rates."""
    lo, hi = SWEEP_SUPPORT
    return {
        "deterministic": (Deterministic(1 / mu_a), Deterministic(1 / mu_b)),
        "uniform": (Uniform(lo / mu_a, hi / mu_a), Uniform(lo / mu_b, hi / mu_b)),
        "exponential": (Exponential(mu_a), Exponential(mu_b)),
    }


@pytest.fixture(scope="module")
def b10_model():
    return make_model(lam=17.0, B=10, gamma=0.01, mu_a=10.0, p_a=0.25, mu_b=13.0, p_b=0.42)


@pytest.fixture(scope="module")
def b50_model():
    return make_model(lam=13.0, B=50, gamma=0.01, mu_a=10.0, p_a=0.25, mu_b=13.0, p_b=0.42)


@pytest.fixture(scope="module")
def b10_sweeps(b10_model):
    dists = service_triplet(10.0, 13.0)
    return {name: sweep_thresholds(b10_model, da, db) for name, (da, db) in dists.items()}


@pytest.fixture(scope="module")
def b50_sweeps(b50_model):
    dists = service_triplet(10.0, 13.0)
    return {name: sweep_thresholds(b50_model, da, db) for name, (da, db) in dists.items()}


class TestCriterion1ThresholdsB10:
    def test_criterion_01_thresholds_b10(self, b10_model):
        start = time.perf_counter()
        dists = service_triplet(10.0, 13.0)
        best = {
            name: sweep_thresholds(b10_model, da, db).best_threshold
            for name, (da, db) in dists.items()
        }
        elapsed = time.perf_counter() - start
        assert best == {"deterministic": 3, "uniform": 4, "exponential": 6}
        assert elapsed < 5.0, f"sweep took {elapsed:.2f}s"
        passline(1, f"B=10 thresholds det/unif/exp = 3/4/6 in {elapsed:.2f}s")

    def test_solver_threshold_matches_sweep_argmax_b10(self, b10_model):
        # the discounted optimum at small gamma coincides with the sweep argmax
        report = value_iterate(exponential_operator(b10_model), tol=1e-10)
        assert detect_threshold(report.policy) == SingleThreshold(t=6)


class TestCriterion2ThresholdsB50:
    def test_criterion_02_thresholds_b50(self, b50_model):
        start = time.perf_counter()
        dists = service_triplet(10.0, 13.0)
        best = {
            name: sweep_thresholds(b50_model, da, db).best_threshold
            for name, (da, db) in dists.items()
        }
        elapsed = time.perf_counter() - start
        assert best == {"deterministic": 12, "uniform": 15, "exponential": 21}
        assert elapsed < 30.0, f"sweep took {elapsed:.2f}s"
        passline(2, f"B=50 thresholds det/unif/exp = 12/15/21 in {elapsed:.2f}s")

    def test_solver_threshold_matches_sweep_argmax_b50(self):
        # gamma small enough for the discounted optimum to reach the
        # long-run argmax on the wide buffer
        m = make_model(lam=13.0, B=50, gamma=0.001, mu_a=10.0, p_a=0.25, mu_b=13.0, p_b=0.42)
        values, policy = solve_mdp(m, tol=1e-10)
        assert detect_threshold(policy) == SingleThreshold(t=21)


class TestCriterion3ThroughputRange:
    def test_criterion_03_throughput_band(self, b10_sweeps, b50_sweeps):
        lo, hi = 7.35, 7.65
        for name, sweeps in (("B=10", b10_sweeps), ("B=50", b50_sweeps)):
            for kind, result in sweeps.items():
                curve = result.curve
                assert curve.min() >= lo, (name, kind, curve.min())
                assert curve.max() <= hi, (name, kind, curve.max())
        passline(3, "all swept throughputs lie in [7.35, 7.65]")


class TestCriterion4SmdpMdpEquivalence:
    def test_criterion_04_equivalence_50_models(self):
        rng = np.random.default_rng(20260401)
        start = time.perf_counter()
        worst = 0.0
        for _ in range(50):
            m = random_exponential_model(rng, max_buffer=30)
            values, policy = solve_mdp(m, tol=1e-7)
            smdp = value_iterate(exponential_operator(m), tol=1e-7)
            report = check_smdp_equivalence(values, policy, smdp, tol=1e-6)
            assert report.policies_match, m.params
            assert report.sup_diff < 1e-6, (m.params, report.sup_diff)
            worst = max(worst, report.sup_diff)
        elapsed = time.perf_counter() - start
        assert elapsed < 60.0, f"took {elapsed:.1f}s"
        passline(4, f"50 models agree (worst sup-diff {worst:.2e}) in {elapsed:.1f}s")


class TestCriterion5ThresholdPropertySuite:
    def test_criterion_05_500_random_models(self):
        rng = np.random.default_rng(20260502)
        start = time.perf_counter()
        for i in range(500):
            m = random_exponential_model(rng, max_buffer=30)
            values, policy = solve_mdp(m, tol=1e-10)
            report = analyze_exponential(m, values, policy)
            assert report.passed, (i, m.params, report.property_flags, report.violations)
        elapsed = time.perf_counter() - start
        passline(5, f"500 random models: threshold + all structural properties ({elapsed:.1f}s)")


class TestCriterion6DeskScaleOracles:
    def test_criterion_06_enumeration_oracle(self):
        rng = np.random.default_rng(20260615)
        cases = []
        for B in (2, 3, 4):
            cases.append(
                exponential_operator(
                    make_model(
                        B=B, lam=rng.uniform(0.5, 4), gamma=rng.uniform(0.1, 0.5),
                        mu_a=2.0, p_a=0.1, mu_b=3.0, p_b=0.4,
                    )
                )
            )
        for B in (3, 4):
            sizes = PacketSizeModel(sizes=(1, 2), transition=rng.dirichlet((2, 2), size=2))
            cases.append(
                deterministic_sized_operator(
                    make_model(B=B, lam=1.5, gamma=0.25, sizes=sizes)
                )
            )
        for B in (3, 4):
            chan = ChannelModel(
                states=("G", "B"),
                transition=rng.dirichlet((3, 2), size=2),
                loss={("G", "a"): 0.1, ("G", "b"): 0.3, ("B", "a"): 0.2, ("B", "b"): 0.45},
            )
            cases.append(ge_uniform_operator(make_model(B=B, lam=2.0, gamma=0.3, channel=chan)))
        # joint channel-and-size instance through the general recursion
        chan = ChannelModel(
            states=("G", "B"),
            transition=rng.dirichlet((2, 2), size=2),
            loss={("G", "a"): 0.1, ("G", "b"): 0.3, ("B", "a"): 0.2, ("B", "b"): 0.45},
        )
        sizes = PacketSizeModel(sizes=(1, 2), transition=rng.dirichlet((2, 2), size=2))
        joint = make_model(B=3, lam=1.0, gamma=0.4, channel=chan, sizes=sizes)
        table = {
            (h, k, u): Exponential(mu)
            for h, k in itertools.product(range(2), range(2))
            for u, mu in (("a", 2.0), ("b", 3.0))
        }
        cases.append(general_operator(joint, table))

        worst = 0.0
        for op in cases:
            got = value_iterate(op, tol=1e-12).value.values
            want = enumerate_policy_values(op)
            worst = max(worst, float(np.max(np.abs(got - want))))
        assert worst < 1e-7
        passline(6, f"desk-scale enumeration oracles agree (worst {worst:.2e})")


class TestCriterion7ThroughputIdentity:
    def test_criterion_07_formula_identity(self, b10_sweeps, b50_sweeps):
        checked = 0
        for sweeps in (b10_sweeps, b50_sweeps):
            for result in sweeps.values():
                for report in result.reports:
                    assert report.agreement_gap < 1e-10
                    assert report.stationary_residual < 1e-12
                    checked += 1
        assert checked == 3 * (10 + 50)
        passline(7, f"both throughput formulas agree on all {checked} evaluated chains")


class TestCriterion8SimulationAgreement:
    def test_criterion_08_simulation_ci(self, b10_model):
        dists = service_triplet(10.0, 13.0)
        # warm the jitted kernel outside the timed window
        simulate(
            SimConfig(
                model=b10_model, dist_a=Exponential(10.0), dist_b=Exponential(13.0),
                threshold=0, horizon=100.0, replications=2, base_seed=1,
            )
        )
        start = time.perf_counter()
        for kind, (da, db) in dists.items():
            for T in (0, 3, 6, 9):
                analytic = throughput(build_embedded_chain(T, b10_model, da, db)).throughput
                res = simulate(
                    SimConfig(
                        model=b10_model, dist_a=da, dist_b=db, threshold=T,
                        horizon=100_000.0, replications=30, base_seed=20260809,
                    )
                )
                assert res.contains(analytic), (kind, T, res.ci, analytic)
        elapsed = time.perf_counter() - start
        assert elapsed < 120.0, f"took {elapsed:.1f}s"
        passline(8, f"analytic throughput inside every 95% CI (12 runs, {elapsed:.1f}s)")


class TestCriterion9KernelOracles:
    def test_criterion_09_kernel_quadrature(self):
        rng = np.random.default_rng(20260909)
        worst = 0.0
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
                from txpolicy import discounted_weights

                dw = discounted_weights(dist, lam, gamma, M)
                for m in range(M + 1):
                    want = quad_weight(dist, lam, gamma, m)
                    err = abs(dw.weights[m] - want) / max(abs(want), 1e-12)
                    if want > 1e-12:
                        worst = max(worst, err)
                        assert err < 1e-9, (kind, m, dw.weights[m], want)
        passline(9, f"closed forms match quadrature on 300 draws (worst rel err {worst:.2e})")


class TestCriterion10ShapeSubstitutes:
    @pytest.mark.parametrize("lam", [9.0, 13.0])
    @pytest.mark.parametrize("gamma", [0.001, 0.01, 0.1])
    def test_criterion_10_value_shapes(self, lam, gamma):
        # reference value-function parameters: mu_a=9, p_a=0.25, mu_b=12, p_b=0.42
        m = make_model(lam=lam, B=10, gamma=gamma, mu_a=9.0, p_a=0.25, mu_b=12.0, p_b=0.42)
        tables = {
            "exponential": None,
            "deterministic": {(0, 0, "a"): Deterministic(1 / 9.0), (0, 0, "b"): Deterministic(1 / 12.0)},
            "uniform": {
                (0, 0, "a"): Uniform(0.2 / 9.0, 1.8 / 9.0),
                (0, 0, "b"): Uniform(0.2 / 12.0, 1.8 / 12.0),
            },
        }
        for kind, table in tables.items():
            op = exponential_operator(m) if table is None else general_operator(m, table)
            report = value_iterate(op, tol=1e-10)
            v = report.value.values
            assert check_concavity(v).passed, (kind, lam, gamma)
            assert check_monotone_nondecreasing(v).passed, (kind, lam, gamma)
            assert isinstance(detect_threshold(report.policy), SingleThreshold)

    def test_criterion_10_ge_per_state_thresholds(self):
        # two-state channel parameters: mu_a=10, losses 0.2/0.35; mu_b=15, 0.3/0.4
        chan = ChannelModel(
            states=("G", "B"),
            transition=np.array([[0.9, 0.1], [0.1, 0.9]]),
            loss={("G", "a"): 0.2, ("G", "b"): 0.3, ("B", "a"): 0.35, ("B", "b"): 0.4},
        )
        for lam in (10.0, 15.0):
            m = make_model(lam=lam, B=10, gamma=0.01, mu_a=10.0, p_a=0.2, mu_b=15.0, p_b=0.3, channel=chan)
            for op in (
                ge_uniform_operator(m),
                general_operator(
                    m,
                    {
                        (h, 0, u): Deterministic(1 / m.action(u).mu)
                        for h in range(2)
                        for u in ("a", "b")
                    },
                ),
            ):
                report = value_iterate(op, tol=1e-10)
                grid = report.value.grid()
                for h in range(2):
                    descriptor = detect_threshold(report.policy, h=h)
                    assert isinstance(descriptor, SingleThreshold), (lam, h)
                    assert check_monotone_nondecreasing(grid[:, h, 0]).passed
                    assert check_concavity(grid[:, h, 0]).passed
        passline(10, "value-shape and per-channel-threshold substitutes hold")
