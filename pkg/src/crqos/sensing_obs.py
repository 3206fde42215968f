"""Spectrum sensor, receiver gain quantization and the observation kernel.

The sensor runs at a fixed ROC point. Access happens iff the sensor reports
idle, so the miss probability ``delta`` is the collision probability. At the
end of the slot the receiver returns a quantized gain estimate when a
transmission went through; otherwise the transmitter sees the "busy" symbol.
Observation index ``S-1`` is that busy symbol, ``0 .. S-2`` are gain levels.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf

from crqos.markov_channel import ChannelModel, step_from_uniform

ROW_TOL = 1e-9


@dataclass(frozen=True)
class SensorDesign:
    """Operating point: false alarm ``epsilon`` and miss detection ``delta``."""

    epsilon: float
    delta: float

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class RocModel:
    """Analytic ROC ``delta = (1 - epsilon) ** kappa``."""

    kappa: float = 3.0

    def __post_init__(self):
        if not self.kappa >= 1:
            raise ValueError(f"kappa must be >= 1, got {self.kappa}")


def roc_delta_for_epsilon(roc: RocModel, epsilon: float) -> float:
    if not 0 <= epsilon <= 1:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    return (1.0 - epsilon) ** roc.kappa


def operating_point_for_collision(roc: RocModel, zeta: float) -> SensorDesign:
    """Sensor design that meets the collision bound ``zeta`` with equality."""
    if not 0 < zeta <= 1:
        raise ValueError(f"zeta must be in (0, 1], got {zeta}")
    return SensorDesign(epsilon=1.0 - zeta ** (1.0 / roc.kappa), delta=zeta)


def sensor_for_epsilon(roc: RocModel, epsilon: float) -> SensorDesign:
    return SensorDesign(epsilon=epsilon, delta=roc_delta_for_epsilon(roc, epsilon))


def gain_quantization_matrix(gains: Sequence[float], sigma: float) -> np.ndarray:
    """``P[i, j]``: probability that a true gain ``gains[i]`` plus N(0, sigma^2)
    noise is quantized to the nearest level ``gains[j]``.

    Cell boundaries are midpoints between adjacent levels; the outer cells are
    open-ended. ``sigma == 0`` gives the identity.
    """
    g = np.asarray(gains, dtype=float)
    n = len(g)
    if n == 0:
        raise ValueError("need at least one gain level")
    if np.any(np.diff(g) <= 0):
        raise ValueError("gains must be strictly increasing")
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if n == 1:
        return np.ones((1, 1))
    if sigma == 0:
        return np.eye(n)
    scale = 2.0 * math.sqrt(2.0) * sigma
    P = np.empty((n, n))
    for i in range(n):
        # erf argument at the upper edge of each cell j < n-1
        with np.errstate(over="ignore"):
            upper = erf((g[:-1] + g[1:] - 2.0 * g[i]) / scale)
        P[i, 0] = 0.5 * (1.0 + upper[0])
        P[i, 1:-1] = 0.5 * (upper[1:] - upper[:-1])
        P[i, -1] = 0.5 * (1.0 - upper[-1])
    P = np.clip(P, 0.0, None)
    resid = np.abs(P.sum(axis=1) - 1.0).max()
    if resid > ROW_TOL:
        warnings.warn(f"gain quantization rows off by {resid:.2e}; renormalizing", RuntimeWarning)
        P /= P.sum(axis=1, keepdims=True)
    return P


@dataclass(frozen=True)
class ObservationKernel:
    """``B[x, y] = Pr{y | x}`` for the end-of-slot observation.

    Built from the sensor false-alarm rate and the gain quantization matrix
    ``pce``. Rows are true states, columns observations; the last column is
    the busy symbol.
    """

    B: np.ndarray = field(repr=False)
    pce: np.ndarray = field(repr=False)
    sigma: float
    sensor: SensorDesign

    @property
    def n_states(self) -> int:
        return self.B.shape[0]

    @property
    def busy(self) -> int:
        return self.B.shape[0] - 1


def observation_kernel(model: ChannelModel, sensor: SensorDesign, sigma: float) -> ObservationKernel:
    S = model.n_states
    pce = gain_quantization_matrix(model.gains, sigma)
    B = np.zeros((S, S))
    B[:-1, :-1] = pce * (1.0 - sensor.epsilon)
    B[:-1, -1] = sensor.epsilon
    B[-1, -1] = 1.0
    B.setflags(write=False)
    pce.setflags(write=False)
    return ObservationKernel(B=B, pce=pce, sigma=float(sigma), sensor=sensor)


def sense_and_access(busy: bool, sensor: SensorDesign, rng: np.random.Generator) -> tuple:
    """One sensor decision; returns ``(sensor_says_idle, access)``.

    Consumes exactly one uniform. Access follows the sensor outcome.
    """
    u = rng.random()
    idle = u < (sensor.delta if busy else 1.0 - sensor.epsilon)
    return idle, idle


def sample_observation(state: int, accessed: bool, kernel: ObservationKernel, rng: np.random.Generator) -> int:
    """End-of-slot observation index.

    A gain ACK (one uniform consumed) only when the slot was accessed and the
    channel was available; otherwise the busy symbol without any draw.
    """
    if not accessed or state == kernel.busy:
        return kernel.busy
    return step_from_uniform(kernel.pce[state], rng.random())
