"""Threshold detection and structural checks on solved value functions.

The exponential case provably has a single-threshold optimal policy with a
concave, nondecreasing value function whose slope is bounded by a closed-form
constant; these are implemented as numerical checks so every solve can be
audited.  For channel or size extensions the per-slice thresholds are
reported descriptively, without any optimality claim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .errors import OutOfRange
from .mdp import MdpValueSet, constants
from .model import ACTION_A, ACTION_B, Policy, ValidatedModel

DEFAULT_CHECK_TOL = 1e-9  # solver tol 1e-10 with a x10 safety factor


@dataclass(frozen=True)
class SingleThreshold:
    """Use path "a" iff occupancy n <= t (t = 0: always b; t = B-1: always a)."""

    t: int


@dataclass(frozen=True)
class SwitchList:
    """Occupancies n at which the action differs from the one at n + 1."""

    switches: tuple[int, ...]


ThresholdDescriptor = Union[SingleThreshold, SwitchList]


def threshold_from_actions(actions: Sequence[str]) -> ThresholdDescriptor:
    """Classify an action sequence over n = 1 .. B-1."""
    acts = list(actions)
    if not acts or any(x not in (ACTION_A, ACTION_B) for x in acts):
        raise OutOfRange(f"actions must be a nonempty a/b sequence, got {acts!r}")
    switches = tuple(n for n in range(1, len(acts)) if acts[n - 1] != acts[n])
    a_states = [n + 1 for n, x in enumerate(acts) if x == ACTION_A]
    if not a_states:
        return SingleThreshold(t=0)
    t = max(a_states)
    if all((x == ACTION_A) == (n + 1 <= t) for n, x in enumerate(acts)):
        return SingleThreshold(t=t)
    return SwitchList(switches=switches)


def detect_threshold(policy: Policy, h: int = 0, k: int = 0) -> ThresholdDescriptor:
    """Threshold structure of one (h, k) slice of a policy."""
    return threshold_from_actions(policy.slice_actions(h=h, k=k))


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    violations: tuple[int, ...] = ()
    direction: str | None = None  # set by the difference check


def check_increasing_difference(
    dep_a: np.ndarray, dep_b: np.ndarray, tol: float = DEFAULT_CHECK_TOL
) -> CheckResult:
    """Monotonicity of the state-action value difference.

    The difference dep_a - dep_b must be monotone in n; its sign convention
    flips between statements of the property, so the check is direction
    agnostic and reports which direction held.
    """
    a, b = np.asarray(dep_a, float), np.asarray(dep_b, float)
    if a.shape != b.shape:
        raise OutOfRange(f"vector shapes differ: {a.shape} vs {b.shape}")
    steps = np.diff(a - b)
    down = np.where(steps > tol)[0]  # violations of nonincreasing
    up = np.where(steps < -tol)[0]  # violations of nondecreasing
    if up.size == 0:
        return CheckResult(passed=True, direction="nondecreasing")
    if down.size == 0:
        return CheckResult(passed=True, direction="nonincreasing")
    worst = up if up.size <= down.size else down
    direction = "nondecreasing" if worst is up else "nonincreasing"
    return CheckResult(passed=False, violations=tuple(int(i) + 1 for i in worst), direction=direction)


def check_concavity(v: np.ndarray, tol: float = DEFAULT_CHECK_TOL) -> CheckResult:
    """Second differences must be <= tol: V_{n+1} - V_n <= V_n - V_{n-1} + tol."""
    v = np.asarray(v, float)
    if v.size < 3:
        raise OutOfRange("concavity needs at least three points")
    second = np.diff(v, 2)
    bad = np.where(second > tol)[0]
    return CheckResult(passed=bad.size == 0, violations=tuple(int(i) + 1 for i in bad))


def check_monotone_nondecreasing(v: np.ndarray, tol: float = DEFAULT_CHECK_TOL) -> CheckResult:
    v = np.asarray(v, float)
    steps = np.diff(v)
    bad = np.where(steps < -tol)[0]
    return CheckResult(passed=bad.size == 0, violations=tuple(int(i) + 1 for i in bad))


def slope_bound_constant(
    model: ValidatedModel, v0: float, arr_a0: float, arr_b0: float
) -> float:
    """Closed-form slope bound K from the fixed-point boundary values.

    K_1 = mu_b delta_b v0 - mu_b lam delta_b delta_bar arr_b0 + c_b (K_2 with
    the a-parameters); K = max(K_1 / ((mu_b+gamma) delta_b),
    K_2 / ((mu_a+gamma) delta_a)).
    """
    k = constants(model)
    lam, gamma = model.arrival_rate, model.discount_rate
    mu_a, mu_b = model.action(ACTION_A).mu, model.action(ACTION_B).mu
    k1 = mu_b * k.delta_b * v0 - mu_b * lam * k.delta_b * k.delta_bar * arr_b0 + k.c_b
    k2 = mu_a * k.delta_a * v0 - mu_a * lam * k.delta_a * k.delta_bar * arr_a0 + k.c_a
    return max(k1 / ((mu_b + gamma) * k.delta_b), k2 / ((mu_a + gamma) * k.delta_a))


def check_slope(values: MdpValueSet, bound: float, tol: float = DEFAULT_CHECK_TOL) -> CheckResult:
    """All slopes of v, arr_a, arr_b must stay at or below the bound."""
    bad: list[int] = []
    for vec in (values.v, values.arr_a, values.arr_b):
        steps = np.diff(vec)
        bad.extend(int(i) + 1 for i in np.where(steps > bound + tol)[0])
    return CheckResult(passed=not bad, violations=tuple(sorted(set(bad))))


def _concavity_or_vacuous(v: np.ndarray, tol: float) -> CheckResult:
    # two-point buffers have no interior point; concavity is vacuous there
    if np.asarray(v).size < 3:
        return CheckResult(passed=True)
    return check_concavity(v, tol)


@dataclass(frozen=True)
class StructureReport:
    """Structural audit of a solved model."""

    thresholds: dict  # (h, k) -> ThresholdDescriptor
    property_flags: dict  # name -> bool
    slope_bound: float | None = None
    violations: dict = field(default_factory=dict)  # name -> tuple of indices
    difference_direction: str | None = None

    @property
    def all_single_threshold(self) -> bool:
        return all(isinstance(d, SingleThreshold) for d in self.thresholds.values())

    @property
    def passed(self) -> bool:
        return all(self.property_flags.values())

    def to_json(self) -> dict:
        thr = {}
        for (h, k), d in self.thresholds.items():
            key = f"h{h}/k{k}"
            if isinstance(d, SingleThreshold):
                thr[key] = {"type": "single", "t": d.t}
            else:
                thr[key] = {"type": "switch-list", "switches": list(d.switches)}
        out = {
            "thresholds": thr,
            "properties": dict(self.property_flags),
            "violations": {k: list(v) for k, v in self.violations.items()},
        }
        if self.slope_bound is not None:
            out["slope_bound"] = self.slope_bound
        if self.difference_direction is not None:
            out["difference_direction"] = self.difference_direction
        return out


def analyze_exponential(
    model: ValidatedModel,
    values: MdpValueSet,
    policy: Policy,
    tol: float = DEFAULT_CHECK_TOL,
) -> StructureReport:
    """Run every proven-property check against a solved exponential model.

    The difference and arrival-vector checks start at n = 1: state 0 carries
    no decision and its forced equalities (and the immediate reward folded
    into the empty-buffer arrival value) sit outside the proven range.
    """
    descriptor = detect_threshold(policy)
    diff = check_increasing_difference(values.dep_a[1:], values.dep_b[1:], tol)
    conc = _concavity_or_vacuous(values.v, tol)
    mono = check_monotone_nondecreasing(values.v, tol)
    mono_arr_a = check_monotone_nondecreasing(values.arr_a[1:], tol)
    mono_arr_b = check_monotone_nondecreasing(values.arr_b[1:], tol)
    bound = slope_bound_constant(model, values.v[0], values.arr_a[0], values.arr_b[0])
    slope = check_slope(values, bound, tol)
    flags = {
        "single_threshold": isinstance(descriptor, SingleThreshold),
        "increasing_difference": diff.passed,
        "concave": conc.passed,
        "nondecreasing": mono.passed and mono_arr_a.passed and mono_arr_b.passed,
        "slope_bounded": slope.passed,
    }
    violations = {
        "increasing_difference": diff.violations,
        "concave": conc.violations,
        "nondecreasing": tuple(
            sorted({*mono.violations, *mono_arr_a.violations, *mono_arr_b.violations})
        ),
        "slope_bounded": slope.violations,
    }
    return StructureReport(
        thresholds={(0, 0): descriptor},
        property_flags=flags,
        slope_bound=bound,
        violations=violations,
        difference_direction=diff.direction,
    )


def analyze_slices(
    model: ValidatedModel, value_grid: np.ndarray, policy: Policy, tol: float = DEFAULT_CHECK_TOL
) -> StructureReport:
    """Descriptive per-slice report for channel / size extensions.

    Thresholds are reported per (h, k) slice together with concavity and
    monotonicity of each slice's value curve; no optimality is asserted.
    """
    thresholds = {}
    flags = {}
    violations = {}
    for h in range(model.num_channel_states):
        for k in range(model.num_sizes):
            thresholds[(h, k)] = detect_threshold(policy, h=h, k=k)
            curve = value_grid[:, h, k]
            conc = _concavity_or_vacuous(curve, tol)
            mono = check_monotone_nondecreasing(curve, tol)
            flags[f"concave[h{h}/k{k}]"] = conc.passed
            flags[f"nondecreasing[h{h}/k{k}]"] = mono.passed
            violations[f"concave[h{h}/k{k}]"] = conc.violations
            violations[f"nondecreasing[h{h}/k{k}]"] = mono.violations
    return StructureReport(thresholds=thresholds, property_flags=flags, violations=violations)
