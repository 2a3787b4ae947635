"""Domain types, parameter validation, and state-space indexing.

The decision-state space is the set of triplets (n, h, k): buffer occupancy
at a decision epoch (0 <= n <= B-1, post-departure convention), channel-state
index and leading-packet-size index.  Channel and size components degenerate
to singletons when the corresponding sub-model is absent, so every solver
shares one indexing scheme: lexicographic over (n, h, k).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping, Union

import numpy as np

from .errors import (
    BufferTooSmall,
    ConfigError,
    InvalidRates,
    InvalidSupport,
    NonPositiveRate,
    NonStochasticRow,
    OutOfRange,
)

ACTION_A = "a"  # reliable, slow path
ACTION_B = "b"  # lossy, fast path
ACTIONS = (ACTION_A, ACTION_B)

UNIT_REWARD = "unit"
SIZE_PROPORTIONAL = "size-proportional"

ROW_SUM_TOL = 1e-12

# Default uniform-service support, as fractions of the mean service time 1/mu.
DEFAULT_UNIFORM_SUPPORT = (0.2, 1.8)


# -------- service-time laws --------


@dataclass(frozen=True)
class Exponential:
    """Exponential service with rate mu."""

    mu: float

    def __post_init__(self):
        if self.mu <= 0:
            raise NonPositiveRate(f"exponential rate must be > 0, got {self.mu}")

    def mean(self) -> float:
        return 1.0 / self.mu


@dataclass(frozen=True)
class Deterministic:
    """Fixed service duration tau."""

    tau: float

    def __post_init__(self):
        if self.tau <= 0:
            raise NonPositiveRate(f"deterministic duration must be > 0, got {self.tau}")

    def mean(self) -> float:
        return self.tau


@dataclass(frozen=True)
class Uniform:
    """Service duration uniform on [alpha, beta]."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (0 <= self.alpha < self.beta):
            raise InvalidSupport(
                f"uniform support needs 0 <= alpha < beta, got [{self.alpha}, {self.beta}]"
            )

    def mean(self) -> float:
        return 0.5 * (self.alpha + self.beta)


ServiceDistribution = Union[Exponential, Deterministic, Uniform]


def default_uniform(mu: float, support=DEFAULT_UNIFORM_SUPPORT) -> Uniform:
    """Uniform law centred on the mean service time 1/mu."""
    lo, hi = support
    return Uniform(lo / mu, hi / mu)


# -------- model parameters --------


@dataclass(frozen=True)
class ActionParams:
    """Service rate and loss probability of one transmit path."""

    mu: float
    loss: float


@dataclass(frozen=True)
class ModelParams:
    arrival_rate: float  # lambda, packets per unit time
    buffer_size: int  # B, packet slots including the one in service
    discount_rate: float  # gamma
    action_a: ActionParams
    action_b: ActionParams
    reward_mode: str = UNIT_REWARD


@dataclass(frozen=True)
class ChannelModel:
    """Finite-state Markov channel with per-(state, action) loss and service.

    `transition` is row-stochastic: transition[i, j] = p(state_j | state_i).
    `loss` maps (state_label, action) to a loss probability; `service`
    optionally maps the same keys to a service-time law (defaults are filled
    in by the solvers).
    """

    states: tuple[str, ...]
    transition: np.ndarray
    loss: Mapping[tuple[str, str], float]
    service: Mapping[tuple[str, str], ServiceDistribution] | None = None


@dataclass(frozen=True)
class PacketSizeModel:
    """Markov chain over leading-packet sizes.

    transition[i, j] = q(size_j | size_i) after transmitting a packet of
    size_i.  `service` optionally maps (size, action) to a service law; when
    absent the solvers default to a deterministic time of size / mu_action.
    """

    sizes: tuple[int, ...]
    transition: np.ndarray
    service: Mapping[tuple[int, str], ServiceDistribution] | None = None


@dataclass(frozen=True, order=True)
class DecisionState:
    """State at a decision epoch: occupancy n plus channel / size indices."""

    n: int
    h: int = 0
    k: int = 0


# -------- validated model and indexing --------


def _check_stochastic(matrix: np.ndarray, what: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NonStochasticRow(f"{what} transition must be a square matrix")
    if np.any(matrix < 0):
        raise NonStochasticRow(f"{what} transition has negative entries")
    sums = matrix.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > ROW_SUM_TOL)[0]
    if bad.size:
        raise NonStochasticRow(
            f"{what} transition row {bad[0]} sums to {sums[bad[0]]!r}, not 1"
        )
    return matrix


def _check_loss(p: float, what: str) -> None:
    if not (0 <= p < 1):
        raise InvalidRates(f"{what} loss probability must be in [0, 1), got {p}")


@dataclass(frozen=True)
class ValidatedModel:
    """Immutable, validated model handle shared by all solvers.

    State enumeration is lexicographic over (n, h, k):
    index = (n * H + h) * K + k, with H/K the channel/size cardinalities
    (1 when the sub-model is absent).
    """

    params: ModelParams
    channel: ChannelModel | None = None
    sizes: PacketSizeModel | None = None
    # index-based views computed by validate()
    channel_transition: np.ndarray = field(default=None, repr=False)
    size_transition: np.ndarray = field(default=None, repr=False)
    channel_loss: np.ndarray = field(default=None, repr=False)  # (H, 2), cols a/b

    # -- basic accessors --

    @property
    def arrival_rate(self) -> float:
        return self.params.arrival_rate

    @property
    def buffer_size(self) -> int:
        return self.params.buffer_size

    @property
    def discount_rate(self) -> float:
        return self.params.discount_rate

    @property
    def num_channel_states(self) -> int:
        return 1 if self.channel is None else len(self.channel.states)

    @property
    def num_sizes(self) -> int:
        return 1 if self.sizes is None else len(self.sizes.sizes)

    @property
    def num_states(self) -> int:
        return self.buffer_size * self.num_channel_states * self.num_sizes

    def action(self, u: str) -> ActionParams:
        if u == ACTION_A:
            return self.params.action_a
        if u == ACTION_B:
            return self.params.action_b
        raise OutOfRange(f"unknown action {u!r}")

    def loss(self, u: str, h: int = 0) -> float:
        """Loss probability of action u in channel state h."""
        if self.channel is None:
            return self.action(u).loss
        return float(self.channel_loss[h, ACTIONS.index(u)])

    def size_value(self, k: int = 0) -> int:
        return 1 if self.sizes is None else self.sizes.sizes[k]

    def reward_factor(self, k: int = 0) -> float:
        if self.params.reward_mode == SIZE_PROPORTIONAL:
            return float(self.size_value(k))
        return 1.0

    # -- state indexing --

    def state_index(self, s: DecisionState) -> int:
        B, H, K = self.buffer_size, self.num_channel_states, self.num_sizes
        if not (0 <= s.n <= B - 1 and 0 <= s.h < H and 0 <= s.k < K):
            raise OutOfRange(f"state {s} outside (n<{B}, h<{H}, k<{K})")
        return (s.n * H + s.h) * K + s.k

    def state_at(self, index: int) -> DecisionState:
        H, K = self.num_channel_states, self.num_sizes
        if not (0 <= index < self.num_states):
            raise OutOfRange(f"index {index} outside [0, {self.num_states})")
        index, k = divmod(index, K)
        n, h = divmod(index, H)
        return DecisionState(n=n, h=h, k=k)

    def states(self) -> Iterator[DecisionState]:
        for i in range(self.num_states):
            yield self.state_at(i)


def validate(
    params: ModelParams,
    channel: ChannelModel | None = None,
    sizes: PacketSizeModel | None = None,
    *,
    allow_degenerate: bool = False,
) -> ValidatedModel:
    """Check all model invariants and return an immutable model handle.

    `allow_degenerate` skips the strict path orderings mu_a < mu_b and
    p_a < p_b (used for symmetric-action test configurations); positivity
    and stochasticity are always enforced.
    """
    lam, B, gamma = params.arrival_rate, params.buffer_size, params.discount_rate
    a, b = params.action_a, params.action_b
    for name, value in (("lambda", lam), ("gamma", gamma), ("mu_a", a.mu), ("mu_b", b.mu)):
        if value <= 0:
            raise InvalidRates(f"{name} must be strictly positive, got {value}")
    if not (isinstance(B, (int, np.integer)) and B >= 2):
        raise BufferTooSmall(f"buffer_size must be an integer >= 2, got {B}")
    _check_loss(a.loss, "action a")
    _check_loss(b.loss, "action b")
    if not allow_degenerate:
        if not a.mu < b.mu:
            raise InvalidRates(f"need mu_a < mu_b, got {a.mu} >= {b.mu}")
        if not a.loss < b.loss:
            raise InvalidRates(f"need p_a < p_b, got {a.loss} >= {b.loss}")
    if params.reward_mode not in (UNIT_REWARD, SIZE_PROPORTIONAL):
        raise ConfigError(f"unknown reward_mode {params.reward_mode!r}")

    chan_P = size_Q = chan_loss = None
    if channel is not None:
        if not channel.states:
            raise ConfigError("channel model needs at least one state")
        chan_P = _check_stochastic(channel.transition, "channel")
        if chan_P.shape[0] != len(channel.states):
            raise ConfigError("channel transition shape does not match state count")
        chan_loss = np.empty((len(channel.states), 2))
        for i, hlab in enumerate(channel.states):
            for j, u in enumerate(ACTIONS):
                try:
                    p = channel.loss[(hlab, u)]
                except KeyError:
                    raise ConfigError(f"channel loss missing entry ({hlab!r}, {u!r})")
                _check_loss(p, f"channel ({hlab}, {u})")
                chan_loss[i, j] = p
        chan_P = chan_P.copy()
        chan_P.setflags(write=False)
        chan_loss.setflags(write=False)
    if sizes is not None:
        vals = sizes.sizes
        if not vals:
            raise ConfigError("size model needs at least one size")
        if len(set(vals)) != len(vals) or any(int(k) != k or k <= 0 for k in vals):
            raise ConfigError(f"sizes must be distinct positive integers, got {vals}")
        size_Q = _check_stochastic(sizes.transition, "packet-size")
        if size_Q.shape[0] != len(vals):
            raise ConfigError("size transition shape does not match size count")
        size_Q = size_Q.copy()
        size_Q.setflags(write=False)

    return ValidatedModel(
        params=params,
        channel=channel,
        sizes=sizes,
        channel_transition=chan_P,
        size_transition=size_Q,
        channel_loss=chan_loss,
    )


# -------- value functions and policies --------


@dataclass(frozen=True)
class ValueFunction:
    """Value vector indexed by DecisionState (lexicographic (n, h, k))."""

    model: ValidatedModel
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.model.num_states,):
            raise OutOfRange(
                f"value vector length {v.shape} != state count {self.model.num_states}"
            )
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise OutOfRange("values must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    def grid(self) -> np.ndarray:
        """Values reshaped to (B, H, K)."""
        m = self.model
        return self.values.reshape(m.buffer_size, m.num_channel_states, m.num_sizes)

    def __getitem__(self, s: DecisionState) -> float:
        return float(self.values[self.model.state_index(s)])


@dataclass(frozen=True)
class Policy:
    """Action map over decision states with n >= 1.

    No decision is taken at an empty buffer (the action for the arriving
    packet is the one at occupancy 1), so `actions` covers n = 1 .. B-1:
    actions[n - 1, h, k] is "a" or "b".
    """

    model: ValidatedModel
    actions: np.ndarray

    def __post_init__(self):
        m = self.model
        arr = np.asarray(self.actions)
        want = (m.buffer_size - 1, m.num_channel_states, m.num_sizes)
        if arr.shape != want:
            raise OutOfRange(f"policy shape {arr.shape} != {want}")
        object.__setattr__(self, "actions", arr)

    def action_of(self, s: DecisionState) -> str:
        if s.n < 1:
            raise OutOfRange("no action is taken at an empty buffer")
        self.model.state_index(s)  # range check
        return str(self.actions[s.n - 1, s.h, s.k])

    def slice_actions(self, h: int = 0, k: int = 0) -> list[str]:
        """Actions for n = 1 .. B-1 on one (h, k) slice."""
        return [str(x) for x in self.actions[:, h, k]]

    def threshold_descriptor(self):
        """Per-(h, k) threshold structure; see analysis.detect_threshold."""
        from .analysis import detect_threshold

        out = {}
        for h in range(self.model.num_channel_states):
            for k in range(self.model.num_sizes):
                out[(h, k)] = detect_threshold(self, h=h, k=k)
        return out


# -------- JSON model documents --------


def _reject_unknown(doc: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) {sorted(unknown)} in {where}")


def service_from_config(doc: Mapping, where: str = "service") -> ServiceDistribution:
    if not isinstance(doc, Mapping) or "type" not in doc:
        raise ConfigError(f"{where}: expected an object with a 'type' field")
    kind = doc["type"]
    try:
        if kind == "exponential":
            _reject_unknown(doc, {"type", "mu"}, where)
            return Exponential(mu=float(doc["mu"]))
        if kind == "deterministic":
            _reject_unknown(doc, {"type", "tau"}, where)
            return Deterministic(tau=float(doc["tau"]))
        if kind == "uniform":
            _reject_unknown(doc, {"type", "alpha", "beta"}, where)
            return Uniform(alpha=float(doc["alpha"]), beta=float(doc["beta"]))
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc}")
    raise ConfigError(f"{where}: unknown service type {kind!r}")


def service_to_config(dist: ServiceDistribution) -> dict:
    if isinstance(dist, Exponential):
        return {"type": "exponential", "mu": dist.mu}
    if isinstance(dist, Deterministic):
        return {"type": "deterministic", "tau": dist.tau}
    return {"type": "uniform", "alpha": dist.alpha, "beta": dist.beta}


def _channel_from_config(doc: Mapping) -> ChannelModel:
    _reject_unknown(doc, {"states", "transition", "loss", "service"}, "channel")
    try:
        states = tuple(str(s) for s in doc["states"])
        transition = np.asarray(doc["transition"], dtype=float)
        loss_doc = doc["loss"]
    except KeyError as exc:
        raise ConfigError(f"channel: missing field {exc}")
    loss = {}
    for hlab in states:
        if hlab not in loss_doc:
            raise ConfigError(f"channel loss missing state {hlab!r}")
        _reject_unknown(loss_doc[hlab], set(ACTIONS), f"channel.loss[{hlab}]")
        for u in ACTIONS:
            loss[(hlab, u)] = float(loss_doc[hlab][u])
    service = None
    if "service" in doc:
        service = {}
        for hlab, per_action in doc["service"].items():
            if hlab not in states:
                raise ConfigError(f"channel service references unknown state {hlab!r}")
            _reject_unknown(per_action, set(ACTIONS), f"channel.service[{hlab}]")
            for u, sdoc in per_action.items():
                service[(hlab, u)] = service_from_config(sdoc, f"channel.service[{hlab}][{u}]")
    return ChannelModel(states=states, transition=transition, loss=loss, service=service)


def _sizes_from_config(doc: Mapping) -> PacketSizeModel:
    _reject_unknown(doc, {"values", "transition", "service"}, "sizes")
    try:
        values = tuple(int(k) for k in doc["values"])
        transition = np.asarray(doc["transition"], dtype=float)
    except KeyError as exc:
        raise ConfigError(f"sizes: missing field {exc}")
    service = None
    if "service" in doc:
        service = {}
        for key, per_action in doc["service"].items():
            k = int(key)
            if k not in values:
                raise ConfigError(f"size service references unknown size {key!r}")
            _reject_unknown(per_action, set(ACTIONS), f"sizes.service[{key}]")
            for u, sdoc in per_action.items():
                service[(k, u)] = service_from_config(sdoc, f"sizes.service[{key}][{u}]")
    return PacketSizeModel(sizes=values, transition=transition, service=service)


MODEL_FIELDS = {
    "schema",
    "lambda",
    "buffer_size",
    "gamma",
    "action_a",
    "action_b",
    "reward_mode",
    "channel",
    "sizes",
    "allow_degenerate",
}


def model_from_config(doc: Mapping, *, allow_degenerate: bool = False) -> ValidatedModel:
    """Build and validate a model from its JSON document (fail-closed).

    The document may carry its own "schema": 1 marker (standalone files);
    when embedded in a CLI config the envelope's version applies.  Setting
    "allow_degenerate": true opts out of the strict path orderings for
    symmetric/degenerate study configurations.
    """
    if not isinstance(doc, Mapping):
        raise ConfigError("model: expected a JSON object")
    _reject_unknown(doc, MODEL_FIELDS, "model")
    if "schema" in doc and doc["schema"] != 1:
        raise ConfigError(f"model: unsupported schema {doc['schema']!r}, expected 1")
    allow_degenerate = allow_degenerate or bool(doc.get("allow_degenerate", False))
    try:
        actions = {}
        for name in ("action_a", "action_b"):
            adoc = doc[name]
            _reject_unknown(adoc, {"mu", "loss"}, f"model.{name}")
            actions[name] = ActionParams(mu=float(adoc["mu"]), loss=float(adoc["loss"]))
        params = ModelParams(
            arrival_rate=float(doc["lambda"]),
            buffer_size=int(doc["buffer_size"]),
            discount_rate=float(doc["gamma"]),
            action_a=actions["action_a"],
            action_b=actions["action_b"],
            reward_mode=str(doc.get("reward_mode", UNIT_REWARD)),
        )
    except KeyError as exc:
        raise ConfigError(f"model: missing field {exc}")
    channel = _channel_from_config(doc["channel"]) if "channel" in doc else None
    sizes = _sizes_from_config(doc["sizes"]) if "sizes" in doc else None
    return validate(params, channel, sizes, allow_degenerate=allow_degenerate)


def model_to_config(model: ValidatedModel) -> dict:
    """Inverse of model_from_config (service maps included when present)."""
    p = model.params
    doc = {
        "lambda": p.arrival_rate,
        "buffer_size": p.buffer_size,
        "gamma": p.discount_rate,
        "action_a": {"mu": p.action_a.mu, "loss": p.action_a.loss},
        "action_b": {"mu": p.action_b.mu, "loss": p.action_b.loss},
        "reward_mode": p.reward_mode,
    }
    if model.channel is not None:
        ch = model.channel
        out = {
            "states": list(ch.states),
            "transition": np.asarray(ch.transition, dtype=float).tolist(),
            "loss": {
                h: {u: ch.loss[(h, u)] for u in ACTIONS} for h in ch.states
            },
        }
        if ch.service:
            svc = {}
            for (h, u), dist in ch.service.items():
                svc.setdefault(h, {})[u] = service_to_config(dist)
            out["service"] = svc
        doc["channel"] = out
    if model.sizes is not None:
        sz = model.sizes
        out = {
            "values": list(sz.sizes),
            "transition": np.asarray(sz.transition, dtype=float).tolist(),
        }
        if sz.service:
            svc = {}
            for (k, u), dist in sz.service.items():
                svc.setdefault(str(k), {})[u] = service_to_config(dist)
            out["service"] = svc
        doc["sizes"] = out
    return doc
