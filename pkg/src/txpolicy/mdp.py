"""Uniformized MDP over departure states (n) and arrival states (n, u).

For exponential transmission times the decision process embeds at every
departure and arrival.  Departure states (n), n = 0 .. B-1, carry the values
compared against the semi-Markov solver; arrival states (n, u), n = 0 .. B,
track an in-flight transmission on path u.  With

    delta_u = 1 / (mu_u + lambda + gamma),     delta_bar = 1 / (gamma + lambda),
    c_u     = (1 - p_u) mu_u / (gamma + mu_u),

the update rules are

    arr_u[n] = mu_u delta_u v[n] + lambda delta_u arr_u[n+1]        (n = 1 .. B-1)
    arr_u[B] = mu_u delta_u v[B-1] / (1 - lambda delta_u)           (fixed point of
               the self-referential full-buffer equation, solved algebraically)
    arr[0]   = max_u( mu_u delta_u dep_u[0] + lambda delta_u arr_u[1] + c_u )
    dep_u[n] = mu_u delta_u v[n-1] + lambda delta_u arr_u[n] + c_u  (n = 1 .. B-1)
    dep_u[0] = lambda delta_bar arr[0]
    v[n]     = max(dep_a[n], dep_b[n]), ties to "a".

A sweep updates the arrival vectors first (from n = B downward, so each uses
the already-updated next entry), then the departure vectors from that fresh
arrival snapshot; the occupancy vector v itself is double-buffered.  The
expected reward c_u is the full transmission-time discount form; it makes the
departure values coincide with the semi-Markov ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NoConvergence, OutOfRange
from .model import ACTION_A, ACTION_B, ACTIONS, Policy, ValidatedModel
from .solver import SolveReport


@dataclass(frozen=True)
class MdpConstants:
    delta_a: float
    delta_b: float
    beta_a: float
    beta_b: float
    c_a: float
    c_b: float
    delta_bar: float

    def delta(self, u: str) -> float:
        return self.delta_a if u == ACTION_A else self.delta_b

    def c(self, u: str) -> float:
        return self.c_a if u == ACTION_A else self.c_b


def constants(model: ValidatedModel) -> MdpConstants:
    """Closed-form rate constants of the uniformized chain."""
    lam, gamma = model.arrival_rate, model.discount_rate
    mu_a, mu_b = model.action(ACTION_A).mu, model.action(ACTION_B).mu
    p_a, p_b = model.action(ACTION_A).loss, model.action(ACTION_B).loss
    return MdpConstants(
        delta_a=1.0 / (mu_a + lam + gamma),
        delta_b=1.0 / (mu_b + lam + gamma),
        beta_a=1.0 / (mu_a + gamma),
        beta_b=1.0 / (mu_b + gamma),
        c_a=(1.0 - p_a) * mu_a / (gamma + mu_a),
        c_b=(1.0 - p_b) * mu_b / (gamma + mu_b),
        delta_bar=1.0 / (gamma + lam),
    )


@dataclass
class MdpValueSet:
    """Value vectors of the extended state space.

    v: departure states (n), length B.  arr_a / arr_b: arrival states (n, u),
    length B+1.  dep_a / dep_b: state-action values at departures, length B.
    """

    v: np.ndarray
    arr_a: np.ndarray
    arr_b: np.ndarray
    dep_a: np.ndarray
    dep_b: np.ndarray

    @classmethod
    def zeros(cls, buffer_size: int) -> "MdpValueSet":
        B = buffer_size
        return cls(np.zeros(B), np.zeros(B + 1), np.zeros(B + 1), np.zeros(B), np.zeros(B))

    def arr(self, u: str) -> np.ndarray:
        return self.arr_a if u == ACTION_A else self.arr_b

    def dep(self, u: str) -> np.ndarray:
        return self.dep_a if u == ACTION_A else self.dep_b

    def sup_distance(self, other: "MdpValueSet") -> float:
        return max(
            float(np.max(np.abs(a - b)))
            for a, b in (
                (self.v, other.v),
                (self.arr_a, other.arr_a),
                (self.arr_b, other.arr_b),
                (self.dep_a, other.dep_a),
                (self.dep_b, other.dep_b),
            )
        )


def apply_A(model: ValidatedModel, values: MdpValueSet, u: str, n: int) -> float:
    """Arrival operator at state (n, u); n = B uses the algebraic fixed point."""
    B = model.buffer_size
    if not 0 <= n <= B:
        raise OutOfRange(f"arrival state index {n} outside 0..{B}")
    k = constants(model)
    mu = model.action(u).mu
    d = k.delta(u)
    if n == B:
        return mu * d * values.v[B - 1] / (1.0 - model.arrival_rate * d)
    return mu * d * values.v[n] + model.arrival_rate * d * values.arr(u)[n + 1]


def apply_T(model: ValidatedModel, values: MdpValueSet, n: int) -> tuple[float, str]:
    """Departure-state maximization; returns (value, argmax action, tie to a)."""
    B = model.buffer_size
    if not 0 <= n <= B - 1:
        raise OutOfRange(f"departure state index {n} outside 0..{B - 1}")
    k = constants(model)
    lam = model.arrival_rate
    if n == 0:
        branches = [lam * k.delta_bar * values.arr(u)[0] for u in ACTIONS]
    else:
        branches = [
            model.action(u).mu * k.delta(u) * values.v[n - 1]
            + lam * k.delta(u) * values.arr(u)[n]
            + k.c(u)
            for u in ACTIONS
        ]
    if branches[0] >= branches[1]:
        return branches[0], ACTION_A
    return branches[1], ACTION_B


def _chain_matrices(model: ValidatedModel):
    """Precomputed linear maps of one sweep's arrival-stage recursion.

    Updating arr_u from n = B downward telescopes into
    arr_u[n] = mu delta * sum_{j>=n} (lam delta)^(j-n) v[j] + tail(v[B-1]),
    one (B-1) x B matrix per action.
    """
    B = model.buffer_size
    k = constants(model)
    lam = model.arrival_rate
    out = {}
    for u in ACTIONS:
        mu, d = model.action(u).mu, k.delta(u)
        G = np.zeros((B - 1, B))  # rows n = 1 .. B-1
        geo = (lam * d) ** np.arange(B)
        for n in range(1, B):
            G[n - 1, n:B] = mu * d * geo[: B - n]
            G[n - 1, B - 1] += geo[B - n] * mu * d / (1.0 - lam * d)
        out[u] = G
    return out


def mdp_sweep(model: ValidatedModel, values: MdpValueSet, chain=None) -> MdpValueSet:
    """One full sweep over all five vectors (see module docstring for order)."""
    B = model.buffer_size
    k = constants(model)
    lam = model.arrival_rate
    if chain is None:
        chain = _chain_matrices(model)
    new = MdpValueSet.zeros(B)
    for u, arr_new in ((ACTION_A, new.arr_a), (ACTION_B, new.arr_b)):
        mu, d = model.action(u).mu, k.delta(u)
        arr_new[B] = mu * d * values.v[B - 1] / (1.0 - lam * d)
        arr_new[1:B] = chain[u] @ values.v
    va0 = max(
        model.action(u).mu * k.delta(u) * values.dep(u)[0]
        + lam * k.delta(u) * new.arr(u)[1]
        + k.c(u)
        for u in ACTIONS
    )
    new.arr_a[0] = new.arr_b[0] = va0
    for u, dep_new in ((ACTION_A, new.dep_a), (ACTION_B, new.dep_b)):
        mu, d = model.action(u).mu, k.delta(u)
        dep_new[1:] = mu * d * values.v[: B - 1] + lam * d * new.arr(u)[1:B] + k.c(u)
    vd0 = lam * k.delta_bar * va0
    new.dep_a[0] = new.dep_b[0] = vd0
    new.v[:] = np.maximum(new.dep_a, new.dep_b)
    new.v[0] = vd0
    return new


def greedy_policy(model: ValidatedModel, values: MdpValueSet) -> Policy:
    use_a = values.dep_a[1:] >= values.dep_b[1:]
    actions = np.where(use_a, ACTION_A, ACTION_B).reshape(model.buffer_size - 1, 1, 1)
    return Policy(model=model, actions=actions)


def solve_mdp(model: ValidatedModel, tol: float = 1e-10, max_iter: int = 10**6):
    """Fixed-point iteration over all five vectors; returns (values, policy)."""
    if tol <= 0:
        raise ConfigError(f"tol must be > 0, got {tol}")
    if model.channel is not None or model.sizes is not None:
        raise ConfigError("the arrival/departure MDP covers the plain exponential case")
    chain = _chain_matrices(model)
    values = MdpValueSet.zeros(model.buffer_size)
    for _ in range(max_iter):
        new = mdp_sweep(model, values, chain)
        residual = new.sup_distance(values)
        values = new
        if residual < tol:
            return values, greedy_policy(model, values)
    raise NoConvergence(f"joint residual {residual} above tol {tol} after {max_iter} sweeps")


@dataclass(frozen=True)
class EquivalenceReport:
    sup_diff: float
    policies_match: bool
    tol: float

    @property
    def passed(self) -> bool:
        return self.sup_diff <= self.tol and self.policies_match


def check_smdp_equivalence(
    mdp_values: MdpValueSet,
    mdp_policy: Policy,
    smdp_report: SolveReport,
    tol: float = 1e-6,
) -> EquivalenceReport:
    """Compare MDP departure values/policy with the semi-Markov solution."""
    sup_diff = float(np.max(np.abs(mdp_values.v - smdp_report.value.values)))
    match = bool(np.array_equal(mdp_policy.actions, smdp_report.policy.actions))
    return EquivalenceReport(sup_diff=sup_diff, policies_match=match, tol=tol)
