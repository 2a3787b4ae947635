"""Solver and evaluation toolkit for dynamic transmit-path selection.

A sender with a finite packet buffer chooses, per transmission, between a
reliable-but-slow path and a fast-but-lossy one.  This package computes
optimal discounted policies by value iteration (plain, per-packet-size, and
Markov-channel variants), verifies their threshold structure, evaluates any
threshold policy's long-run throughput through its embedded chain, and
cross-validates with discrete-event simulation.
"""

__version__ = "0.1.0"

from .analysis import (
    SingleThreshold,
    StructureReport,
    SwitchList,
    analyze_exponential,
    analyze_slices,
    check_concavity,
    check_increasing_difference,
    check_monotone_nondecreasing,
    check_slope,
    detect_threshold,
    slope_bound_constant,
    threshold_from_actions,
)
from .evaluation import (
    EmbeddedChain,
    SweepResult,
    ThroughputReport,
    build_embedded_chain,
    service_transition_matrix,
    stationary_distribution,
    sweep_thresholds,
    throughput,
)
from .kernels import (
    DiscountedWeights,
    discounted_weights,
    expected_reward,
    poisson_count_prob,
    total_discount,
    weights_deterministic,
    weights_exponential,
    weights_uniform,
)
from .mdp import (
    EquivalenceReport,
    MdpConstants,
    MdpValueSet,
    apply_A,
    apply_T,
    check_smdp_equivalence,
    constants,
    solve_mdp,
)
from .model import (
    ACTION_A,
    ACTION_B,
    ACTIONS,
    ActionParams,
    ChannelModel,
    DecisionState,
    Deterministic,
    Exponential,
    ModelParams,
    PacketSizeModel,
    Policy,
    ServiceDistribution,
    Uniform,
    ValidatedModel,
    ValueFunction,
    default_uniform,
    model_from_config,
    model_to_config,
    validate,
)
from .simulate import SimConfig, SimResult, run_replication, simulate, simulate_sweep
from .solver import (
    BellmanOperator,
    SolveReport,
    bellman_deterministic_sized,
    bellman_exponential,
    bellman_ge_uniform,
    bellman_general,
    deterministic_sized_operator,
    exponential_operator,
    ge_uniform_operator,
    general_operator,
    operator_for,
    resolve_service_table,
    value_iterate,
)
