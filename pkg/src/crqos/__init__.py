"""Distortion-aware spectrum access for video over cognitive radio channels.

Rate-distortion driven intra-refresh selection, a finite-state Markov channel
with primary-user occupancy, noisy sensing/ACK observations, belief tracking and
a grid-based finite-horizon POMDP solver, plus a Monte-Carlo experiment harness.
"""

from crqos.rd_model import (
    BetaGrid,
    BetaChoice,
    RdParams,
    DistortionBreakdown,
    channel_distortion,
    distortion_breakdown,
    optimal_beta,
    source_distortion,
    total_distortion,
)
from crqos.markov_channel import (
    ChannelModel,
    build_transition,
    default_gains,
    default_loss,
    loss_from_gain,
    stationary_distribution,
    step,
)
from crqos.sensing_obs import (
    ObservationKernel,
    RocModel,
    SensorDesign,
    gain_quantization_matrix,
    observation_kernel,
    operating_point_for_collision,
    roc_delta_for_epsilon,
    sample_observation,
    sense_and_access,
)
from crqos.belief_pomdp import (
    BeliefGrid,
    PomdpSolution,
    SensedChannel,
    expected_immediate_cost,
    map_available_state,
    policy_action,
    predict,
    solve_finite_horizon,
    update,
)

__version__ = "0.1.0"

__all__ = [
    "BetaGrid",
    "BetaChoice",
    "RdParams",
    "DistortionBreakdown",
    "channel_distortion",
    "distortion_breakdown",
    "optimal_beta",
    "source_distortion",
    "total_distortion",
    "ChannelModel",
    "build_transition",
    "default_gains",
    "default_loss",
    "loss_from_gain",
    "stationary_distribution",
    "step",
    "ObservationKernel",
    "RocModel",
    "SensorDesign",
    "gain_quantization_matrix",
    "observation_kernel",
    "operating_point_for_collision",
    "roc_delta_for_epsilon",
    "sample_observation",
    "sense_and_access",
    "BeliefGrid",
    "PomdpSolution",
    "SensedChannel",
    "expected_immediate_cost",
    "map_available_state",
    "policy_action",
    "predict",
    "solve_finite_horizon",
    "update",
]
