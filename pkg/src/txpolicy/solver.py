"""Value-iteration solvers for the discounted transmit-path selection problem.

All four Bellman operators (exponential; deterministic service with known
packet sizes; two-state channel with uniform service; fully general) share
one construction: per action u the decision rows n = 1 .. B-1 satisfy

    J_u(n,h,k) = r_u(h,k)
               + sum_m w_u[m] * sum_{h',k'} p(h'|h) q(k'|k) V(n-1+m, h', k')

with the arrival mass beyond the buffer lumped onto occupancy B-1, and the
update V'(n,h,k) = max_u J_u (ties resolved to the reliable path "a").  The
empty-buffer boundary discounts the exponential inter-arrival time,

    V'(0,h,k) = lam/(gamma+lam) * sum_{h',k'} p(h'|h) q(k'|k) V'(1,h',k'),

and is evaluated from the freshly updated V'(1, ., .).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, MissingServiceEntry, NoConvergence
from .kernels import clamp_residual_mass, discounted_weights, expected_reward
from .model import (
    ACTION_A,
    ACTION_B,
    ACTIONS,
    Deterministic,
    Exponential,
    Policy,
    ServiceDistribution,
    Uniform,
    ValidatedModel,
    ValueFunction,
    default_uniform,
)

ServiceTable = dict[tuple[int, int, str], ServiceDistribution]


def resolve_service_table(model: ValidatedModel, service_table: ServiceTable | None = None) -> ServiceTable:
    """Service law per (h, k, u), filling documented defaults.

    Defaults: exponential at the action rate when neither sub-model is
    present; size/mu_u deterministic times for a size model; uniform support
    0.2/mu_u .. 1.8/mu_u for a channel model.  A joint channel-and-size model
    has no default and requires an explicit table.
    """
    if service_table is not None:
        table = dict(service_table)
        for h in range(model.num_channel_states):
            for k in range(model.num_sizes):
                for u in ACTIONS:
                    if (h, k, u) not in table:
                        raise MissingServiceEntry((h, k, u))
        return table

    table: ServiceTable = {}
    chan, sizes = model.channel, model.sizes
    if chan is not None and sizes is not None:
        raise MissingServiceEntry(
            "joint channel-and-size models need an explicit service table"
        )
    for h in range(model.num_channel_states):
        hlab = chan.states[h] if chan is not None else None
        for k in range(model.num_sizes):
            for u in ACTIONS:
                mu_u = model.action(u).mu
                if chan is not None:
                    dist = (chan.service or {}).get((hlab, u)) or default_uniform(mu_u)
                elif sizes is not None:
                    kval = sizes.sizes[k]
                    dist = (sizes.service or {}).get((kval, u)) or Deterministic(kval / mu_u)
                else:
                    dist = Exponential(mu_u)
                table[(h, k, u)] = dist
    return table


@dataclass(frozen=True)
class BellmanOperator:
    """Precomputed synchronous Bellman operator over the flat state space."""

    model: ValidatedModel
    service_table: ServiceTable
    rewards: dict  # action -> (num_decision_rows,)
    matrices: dict  # action -> (num_decision_rows, S)
    boundary: np.ndarray  # (H*K, H*K): V'(0,.) = boundary @ V'(1,.)
    contraction_bound: float

    @property
    def num_states(self) -> int:
        return self.model.num_states

    def apply(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """One synchronous sweep; returns (new values, use_a mask).

        use_a has shape (B-1, H, K) over decision states n = 1 .. B-1.
        """
        v = np.asarray(values, dtype=float)
        if v.shape != (self.num_states,):
            raise DimensionMismatch(f"value vector has shape {v.shape}, expected ({self.num_states},)")
        j_a = self.rewards[ACTION_A] + self.matrices[ACTION_A] @ v
        j_b = self.rewards[ACTION_B] + self.matrices[ACTION_B] @ v
        use_a = j_a >= j_b  # tie goes to the reliable path
        new = np.empty_like(v)
        hk = self.boundary.shape[0]
        new[hk:] = np.where(use_a, j_a, j_b)
        new[:hk] = self.boundary @ new[hk : 2 * hk]
        m = self.model
        return new, use_a.reshape(m.buffer_size - 1, m.num_channel_states, m.num_sizes)

    def greedy_policy(self, values: np.ndarray) -> Policy:
        _, use_a = self.apply(values)
        return Policy(model=self.model, actions=np.where(use_a, ACTION_A, ACTION_B))

    def action_matrices(self, u: str) -> tuple[np.ndarray, np.ndarray]:
        """Full (S, S) affine map for a fixed action: V -> t @ V + r.

        Row n = 0 holds the (action-independent) empty-buffer boundary in its
        fixed-point form; used by the policy-enumeration oracle in the tests.
        """
        S = self.num_states
        hk = self.boundary.shape[0]
        t = np.zeros((S, S))
        r = np.zeros(S)
        t[hk:, :] = self.matrices[u]
        r[hk:] = self.rewards[u]
        t[:hk, hk : 2 * hk] = self.boundary
        return t, r


def _build_operator(model: ValidatedModel, table: ServiceTable) -> BellmanOperator:
    B = model.buffer_size
    H, K = model.num_channel_states, model.num_sizes
    hk = H * K
    S = B * hk
    lam, gamma = model.arrival_rate, model.discount_rate

    P = model.channel_transition if model.channel is not None else np.ones((1, 1))
    Q = model.size_transition if model.sizes is not None else np.ones((1, 1))
    mix = np.kron(P, Q)  # (hk, hk), row = current (h,k), col = next (h',k')

    rewards = {}
    matrices = {}
    bound = 0.0
    for u in ACTIONS:
        rew = np.empty((B - 1, hk))
        mat = np.zeros(((B - 1) * hk, S))
        for h in range(H):
            for k in range(K):
                dist = table[(h, k, u)]
                dw = discounted_weights(dist, lam, gamma, B - 1)
                bound = max(bound, dw.total_discount)
                rew[:, h * K + k] = expected_reward(
                    model.loss(u, h), dw.total_discount, model.reward_factor(k)
                )
                # occupancy coefficients: row n -> weight on post-service j
                coeff = np.zeros((B - 1, B))
                partial = np.cumsum(dw.weights)
                for n in range(1, B):
                    m_max = B - n  # arrivals that exactly fill to B-1
                    coeff[n - 1, n - 1 : B] = dw.weights[: m_max + 1]
                    coeff[n - 1, B - 1] += clamp_residual_mass(
                        dw.total_discount - partial[m_max]
                    )
                # scatter through the channel/size mixing row
                rows = (np.arange(B - 1) * hk) + (h * K + k)
                for j in range(B):
                    cols = j * hk + np.arange(hk)
                    mat[np.ix_(rows, cols)] += np.outer(coeff[:, j], mix[h * K + k])
        rewards[u] = rew.reshape(-1)
        matrices[u] = mat

    boundary = (lam / (gamma + lam)) * mix
    return BellmanOperator(
        model=model,
        service_table=table,
        rewards=rewards,
        matrices=matrices,
        boundary=boundary,
        contraction_bound=bound,
    )


# -------- operator constructors for the three named cases --------


def exponential_operator(model: ValidatedModel) -> BellmanOperator:
    """Exponential service at the action rates; plain occupancy state space."""
    if model.channel is not None or model.sizes is not None:
        raise ConfigError("exponential case expects no channel or size sub-model")
    table = {(0, 0, u): Exponential(model.action(u).mu) for u in ACTIONS}
    return _build_operator(model, table)


def deterministic_sized_operator(model: ValidatedModel) -> BellmanOperator:
    """Deterministic per-size transmission times over states (n, k)."""
    if model.sizes is None:
        raise ConfigError("deterministic-sized case requires a packet-size model")
    if model.channel is not None:
        raise ConfigError("deterministic-sized case expects no channel model")
    table = resolve_service_table(model)
    for key, dist in table.items():
        if not isinstance(dist, Deterministic):
            raise ConfigError(f"service for {key} must be deterministic, got {dist}")
    return _build_operator(model, table)


def ge_uniform_operator(model: ValidatedModel) -> BellmanOperator:
    """Markov channel with uniformly distributed transmission times, states (n, h)."""
    if model.channel is None:
        raise ConfigError("channel/uniform case requires a channel model")
    if model.sizes is not None:
        raise ConfigError("channel/uniform case expects no size model")
    table = resolve_service_table(model)
    for key, dist in table.items():
        if not isinstance(dist, Uniform):
            raise ConfigError(f"service for {key} must be uniform, got {dist}")
    return _build_operator(model, table)


def general_operator(model: ValidatedModel, service_table: ServiceTable | None = None) -> BellmanOperator:
    """Full (n, h, k) recursion with an arbitrary service table."""
    return _build_operator(model, resolve_service_table(model, service_table))


_KINDS = {
    "exponential": exponential_operator,
    "deterministic-sized": deterministic_sized_operator,
    "ge-uniform": ge_uniform_operator,
    "general": general_operator,
}


def operator_for(model: ValidatedModel, kind: str, service_table: ServiceTable | None = None) -> BellmanOperator:
    if kind not in _KINDS:
        raise ConfigError(f"unknown solver kind {kind!r}; choose from {sorted(_KINDS)}")
    if kind == "general":
        return general_operator(model, service_table)
    return _KINDS[kind](model)


# -------- one-shot operator applications (convenience surfaces) --------


def bellman_exponential(values, model: ValidatedModel):
    op = exponential_operator(model)
    new, use_a = op.apply(values)
    return new, Policy(model=model, actions=np.where(use_a, ACTION_A, ACTION_B))


def bellman_deterministic_sized(values, model: ValidatedModel):
    op = deterministic_sized_operator(model)
    new, use_a = op.apply(values)
    return new, Policy(model=model, actions=np.where(use_a, ACTION_A, ACTION_B))


def bellman_ge_uniform(values, model: ValidatedModel):
    op = ge_uniform_operator(model)
    new, use_a = op.apply(values)
    return new, Policy(model=model, actions=np.where(use_a, ACTION_A, ACTION_B))


def bellman_general(values, model: ValidatedModel, service_table: ServiceTable | None = None):
    op = general_operator(model, service_table)
    new, use_a = op.apply(values)
    return new, Policy(model=model, actions=np.where(use_a, ACTION_A, ACTION_B))


# -------- value iteration --------


@dataclass(frozen=True)
class SolveReport:
    value: ValueFunction
    policy: Policy
    iterations: int
    final_residual: float
    contraction_estimate: float


def value_iterate(
    op: BellmanOperator,
    v0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iter: int = 10**6,
) -> SolveReport:
    """Iterate the operator until the sup-norm residual drops below tol.

    Starting from zero the iterates must be monotone nondecreasing (the
    operators are monotone with nonnegative rewards); that is asserted every
    sweep as a cheap self-check.  Hitting max_iter raises NoConvergence.
    """
    if tol <= 0:
        raise ConfigError(f"tol must be > 0, got {tol}")
    v = np.zeros(op.num_states) if v0 is None else np.asarray(v0, dtype=float).copy()
    if v.shape != (op.num_states,):
        raise DimensionMismatch(f"v0 has shape {v.shape}, expected ({op.num_states},)")
    from_zero = not np.any(v)
    ratios: list[float] = []
    prev_residual = None
    for it in range(1, max_iter + 1):
        new, use_a = op.apply(v)
        if from_zero and np.any(new < v - 1e-12):
            raise ArithmeticError("iterates from zero lost monotonicity")
        residual = float(np.max(np.abs(new - v)))
        if prev_residual is not None and prev_residual > 0:
            ratios.append(residual / prev_residual)
            if len(ratios) > 10:
                ratios.pop(0)
        prev_residual = residual
        v = new
        if residual < tol:
            positive = [r for r in ratios if r > 0]
            contraction = float(np.exp(np.mean(np.log(positive)))) if positive else 0.0
            policy = Policy(model=op.model, actions=np.where(use_a, ACTION_A, ACTION_B))
            return SolveReport(
                value=ValueFunction(model=op.model, values=v),
                policy=policy,
                iterations=it,
                final_residual=residual,
                contraction_estimate=contraction,
            )
    raise NoConvergence(
        f"residual {prev_residual} still above tol {tol} after {max_iter} sweeps"
    )
