"""Slot-level simulator, comparison policies and episode metrics.

Every slot follows the same draw order on the episode's single random
stream:

1. one uniform per channel for its state transition, in channel order;
2. one uniform for the channel choice (random-channel policy only);
3. one uniform for the sensor outcome on the sensed channel;
4. one uniform for the ACK gain quantization, only if the slot was accessed
   and the channel was available.

Before slot 1 each channel's initial state is drawn from its stationary
distribution, again one uniform per channel. With one channel all policies
consume the stream identically, so they see the same state and observation
paths and differ only in the chosen refresh rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats

from crqos.belief_pomdp import (
    NO_SENSE,
    PolicyArtifactError,
    PomdpSolution,
    SensedChannel,
    map_available_state,
    policy_action,
)
from crqos.markov_channel import ChainSampler, step_from_uniform
from crqos.rd_model import DEFAULT_BETA_GRID, BetaGrid, RdParams, optimal_beta, total_distortion
from crqos.sensing_obs import SensorDesign


class MethodKind(str, Enum):
    ORACLE = "oracle"
    BELIEF_MAP = "belief_map"
    LAST_ACK = "last_ack"
    CONSTANT_BETA = "constant_beta"
    POMDP_CHANNEL = "pomdp_channel"
    RANDOM_CHANNEL_CONST_BETA = "random_channel_const_beta"
    ORACLE_CHANNEL = "oracle_channel"


SINGLE_CHANNEL_KINDS = {MethodKind.ORACLE, MethodKind.BELIEF_MAP, MethodKind.LAST_ACK, MethodKind.CONSTANT_BETA}
CHANNEL_SELECTION_KINDS = {MethodKind.POMDP_CHANNEL, MethodKind.RANDOM_CHANNEL_CONST_BETA, MethodKind.ORACLE_CHANNEL}


@dataclass(frozen=True)
class Method:
    """A comparison policy. ``beta0`` is the fixed refresh rate of the
    constant-beta policies and unused otherwise."""

    kind: MethodKind
    beta0: float | None = None

    def __post_init__(self):
        kind = MethodKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (MethodKind.CONSTANT_BETA, MethodKind.RANDOM_CHANNEL_CONST_BETA):
            if self.beta0 is None:
                object.__setattr__(self, "beta0", 0.1)
        elif self.beta0 is not None:
            raise ValueError(f"{kind.value} takes no beta")

    @classmethod
    def parse(cls, text: str) -> "Method":
        """``"constant_beta"``, ``"constant_beta:0.2"``, ``"belief_map"``, ..."""
        name, _, arg = str(text).partition(":")
        return cls(MethodKind(name.strip()), float(arg) if arg else None)

    def __str__(self):
        if self.kind in (MethodKind.CONSTANT_BETA, MethodKind.RANDOM_CHANNEL_CONST_BETA) and self.beta0 != 0.1:
            return f"{self.kind.value}:{self.beta0:g}"
        return self.kind.value


ORACLE = Method(MethodKind.ORACLE)
BELIEF_MAP = Method(MethodKind.BELIEF_MAP)
LAST_ACK = Method(MethodKind.LAST_ACK)
CONSTANT_BETA = Method(MethodKind.CONSTANT_BETA)
POMDP_CHANNEL = Method(MethodKind.POMDP_CHANNEL)
RANDOM_CHANNEL = Method(MethodKind.RANDOM_CHANNEL_CONST_BETA)
ORACLE_CHANNEL = Method(MethodKind.ORACLE_CHANNEL)


@dataclass(frozen=True)
class CompositeAction:
    sense_channel: int | None
    sensor: SensorDesign
    access: bool
    beta: float

    def __post_init__(self):
        if self.access and self.sense_channel is None:
            raise ValueError("cannot access without sensing")


@dataclass(frozen=True, slots=True)
class SlotRecord:
    slot: int
    states: tuple
    sensed: int
    sensor_idle: bool
    accessed: bool
    observation: int
    beta: float
    distortion: float
    collided: bool
    available: bool


@dataclass(frozen=True)
class Scenario:
    """Everything an episode needs, already built from a configuration."""

    channels: tuple
    rd: RdParams
    horizon: int
    penalty: float = 500.0
    beta_grid: BetaGrid = DEFAULT_BETA_GRID
    solution: PomdpSolution | None = field(default=None, repr=False)

    @property
    def n_channels(self) -> int:
        return len(self.channels)


# -- refresh-rate rules ------------------------------------------------------


def beta_oracle(true_state: int, rd: RdParams, loss: Sequence[float], grid: BetaGrid = DEFAULT_BETA_GRID) -> tuple:
    """Optimal beta for the true state; ``(grid minimum, True)`` when busy."""
    if true_state >= len(loss):
        return grid.values[0], True
    return optimal_beta(rd, loss[true_state], grid).beta, False


def beta_belief_map(pi_predicted, rd: RdParams, loss: Sequence[float], grid: BetaGrid = DEFAULT_BETA_GRID) -> float:
    s, _ = map_available_state(pi_predicted)
    return optimal_beta(rd, loss[s], grid).beta


def stationary_fallback_state(stationary) -> int:
    return int(np.argmax(np.asarray(stationary)[:-1]))


def beta_last_ack(last_obs: int | None, rd: RdParams, loss: Sequence[float], grid: BetaGrid = DEFAULT_BETA_GRID,
                  fallback: float | None = None) -> float:
    """Beta for the gain reported in the last ACK, else ``fallback``.

    ``last_obs`` is an observation index (``len(loss)`` is the busy symbol) or
    ``None`` before any observation.
    """
    if last_obs is not None and last_obs < len(loss):
        return optimal_beta(rd, loss[last_obs], grid).beta
    if fallback is None:
        raise ValueError("no gain ACK available and no fallback given")
    return fallback


# -- episode -----------------------------------------------------------------


def _check_method(scenario: Scenario, method: Method) -> None:
    N = scenario.n_channels
    if method.kind in SINGLE_CHANNEL_KINDS and N != 1:
        raise ValueError(f"{method} is a single-channel policy, scenario has {N} channels")
    if method.kind is MethodKind.POMDP_CHANNEL:
        sol = scenario.solution
        if sol is None:
            raise PolicyArtifactError("pomdp_channel needs a solved policy")
        if len(sol.grids) != N:
            raise PolicyArtifactError("policy was solved for a different number of channels")
        if sol.horizon < scenario.horizon:
            raise PolicyArtifactError(
                f"policy horizon {sol.horizon} shorter than episode length {scenario.horizon}"
            )
    for beta in (method.beta0,):
        if beta is not None and beta not in scenario.beta_grid:
            raise ValueError(f"beta {beta} is not on the refresh-rate grid")


def run_episode(scenario: Scenario, method: Method, seed: int) -> list:
    """Simulate ``scenario.horizon`` slots under ``method`` with stream ``seed``."""
    _check_method(scenario, method)
    rng = np.random.default_rng(seed)
    chans: Sequence[SensedChannel] = scenario.channels
    N = len(chans)
    kind = method.kind
    rd = scenario.rd
    samplers = [ChainSampler(ch.model.A) for ch in chans]
    busy = [ch.model.n_states - 1 for ch in chans]
    # degenerate test chains (never busy, always busy) are allowed here
    stat = [ch.model.stationary(strict=False) for ch in chans]
    As = [ch.model.A for ch in chans]
    Bs = [ch.kernel.B for ch in chans]
    pces = [ch.kernel.pce for ch in chans]
    sensors = [ch.kernel.sensor for ch in chans]
    # per-state optimal beta; entry for the busy state is the grid minimum
    oracle_betas = [list(ch.betas) + [scenario.beta_grid.values[0]] for ch in chans]
    fallback = [float(ch.betas[stationary_fallback_state(st)]) for ch, st in zip(chans, stat)]
    track = kind in (MethodKind.BELIEF_MAP, MethodKind.POMDP_CHANNEL)

    x = [step_from_uniform(st, rng.random()) for st in stat]
    pi = [st.copy() for st in stat]
    last_obs = [None] * N
    records = []
    for k in range(1, scenario.horizon + 1):
        for n in range(N):
            x[n] = samplers[n].next(x[n], rng.random())

        if kind is MethodKind.POMDP_CHANNEL:
            ch = policy_action(scenario.solution, k, pi)
        elif kind is MethodKind.RANDOM_CHANNEL_CONST_BETA:
            ch = min(int(rng.random() * N), N - 1)
        elif kind is MethodKind.ORACLE_CHANNEL:
            avail = [n for n in range(N) if x[n] != busy[n]]
            # all channels share the gain ordering of their state index
            ch = max(avail, key=lambda n: (chans[n].model.gains[x[n]], -n)) if avail else 0
        else:
            ch = 0

        preds = [p @ A for p, A in zip(pi, As)] if track else None

        if ch == NO_SENSE:
            beta = scenario.beta_grid.values[0]
        elif kind in (MethodKind.ORACLE, MethodKind.ORACLE_CHANNEL):
            beta = oracle_betas[ch][x[ch]]
        elif kind in (MethodKind.BELIEF_MAP, MethodKind.POMDP_CHANNEL):
            beta = float(chans[ch].betas[map_available_state(preds[ch])[0]])
        elif kind is MethodKind.LAST_ACK:
            lo = last_obs[ch]
            beta = float(chans[ch].betas[lo]) if lo is not None and lo < busy[ch] else fallback[ch]
        else:
            beta = method.beta0

        if ch == NO_SENSE:
            idle = access = False
            is_busy = False
            y = None
        else:
            is_busy = x[ch] == busy[ch]
            s = sensors[ch]
            idle = rng.random() < (s.delta if is_busy else 1.0 - s.epsilon)
            access = idle
            if access and not is_busy:
                y = step_from_uniform(pces[ch][x[ch]], rng.random())
            else:
                y = busy[ch]
            last_obs[ch] = y

        delivered = access and not is_busy
        dist = total_distortion(rd, chans[ch].model.loss[x[ch]], beta) if delivered else math.inf

        if track:
            for n in range(N):
                if n == ch:
                    post = preds[n] * Bs[n][:, y]
                    pi[n] = post / post.sum()
                else:
                    pi[n] = preds[n]

        records.append(SlotRecord(
            slot=k,
            states=tuple(x),
            sensed=ch,
            sensor_idle=bool(idle),
            accessed=bool(access),
            observation=-1 if y is None else int(y),
            beta=float(beta),
            distortion=dist,
            collided=bool(access and is_busy),
            available=bool(ch != NO_SENSE and not is_busy),
        ))
    return records


# -- metrics -----------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    """Per-episode statistics.

    ``avg_distortion`` averages over slots where the sensed channel was
    available and accessed (NaN when there are none).
    ``spectrum_utilization`` is the fraction of slots whose sensed channel was
    available; ``collision_rate`` the fraction of busy sensed slots that were
    accessed anyway (0 when no sensed slot was busy).
    """

    avg_distortion: float
    spectrum_utilization: float
    collision_rate: float
    n_slots: int
    accessed_slots: int
    available_slots: int
    busy_slots: int
    collisions: int


def compute_metrics(records: Sequence[SlotRecord]) -> Metrics:
    if not records:
        raise ValueError("no slot records")
    total = 0.0
    n_del = n_avail = n_busy = n_coll = 0
    for r in records:
        if r.available:
            n_avail += 1
            if r.accessed:
                n_del += 1
                total += r.distortion
        elif r.sensed != NO_SENSE:
            n_busy += 1
            n_coll += r.collided
    return Metrics(
        avg_distortion=total / n_del if n_del else math.nan,
        spectrum_utilization=n_avail / len(records),
        collision_rate=n_coll / n_busy if n_busy else 0.0,
        n_slots=len(records),
        accessed_slots=n_del,
        available_slots=n_avail,
        busy_slots=n_busy,
        collisions=n_coll,
    )


def aggregate_ci(samples: Sequence[float], confidence: float = 0.95) -> tuple:
    """Sample mean and Student-t confidence half-width."""
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    half = float(stats.t.ppf(0.5 + confidence / 2, n - 1)) * sd / math.sqrt(n)
    return mean, half
