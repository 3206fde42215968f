"""Finite-state Markov model of one licensed channel.

States ``0 .. S-2`` are available with increasing quantized fading gain; the
last state ``S-1`` means the primary network occupies the channel. Indices are
zero-based throughout the package.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ROW_TOL = 1e-12
LOSS_CAP = 0.999


class ChainConfigError(ValueError):
    pass


class ReducibleChainError(ValueError):
    def __init__(self, unreachable):
        self.unreachable = tuple(unreachable)
        super().__init__(f"transition matrix is reducible; unreachable states: {list(self.unreachable)}")


def build_transition(n_states: int, p_stay: float, p_avail_to_busy: float, p_busy_stay: float) -> np.ndarray:
    """Transition matrix from three scalars.

    Available rows keep ``p_stay`` on the diagonal and ``p_avail_to_busy`` in
    the busy column; leftover mass is split evenly over the other available
    states. The busy row keeps ``p_busy_stay`` and spreads the rest evenly over
    all available states.
    """
    S = n_states
    if S < 2:
        raise ChainConfigError(f"need at least 2 states, got {S}")
    for name, v in (("p_stay", p_stay), ("p_avail_to_busy", p_avail_to_busy), ("p_busy_stay", p_busy_stay)):
        if not 0 <= v <= 1:
            raise ChainConfigError(f"{name} must be a probability, got {v}")
    leftover = 1.0 - p_stay - p_avail_to_busy
    if leftover < -ROW_TOL:
        raise ChainConfigError(
            f"p_stay + p_avail_to_busy = {p_stay + p_avail_to_busy} exceeds 1"
        )
    leftover = max(leftover, 0.0)
    if S == 2 and leftover > ROW_TOL:
        raise ChainConfigError(
            f"with 2 states p_stay + p_avail_to_busy must equal 1 (leftover {leftover})"
        )
    A = np.zeros((S, S))
    busy = S - 1
    for i in range(busy):
        if S > 2:
            A[i, :busy] = leftover / (S - 2)
        A[i, i] = p_stay
        A[i, busy] = p_avail_to_busy
    A[busy, :busy] = (1.0 - p_busy_stay) / (S - 1)
    A[busy, busy] = p_busy_stay
    # Absorb float residue in the diagonal so rows sum to 1 to machine precision.
    A[np.arange(S), np.arange(S)] += 1.0 - A.sum(axis=1)
    return A


def check_stochastic(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {A.shape}")
    if (A < 0).any():
        raise ValueError("transition matrix has negative entries")
    err = np.abs(A.sum(axis=1) - 1).max()
    if err > ROW_TOL:
        raise ValueError(f"transition matrix rows do not sum to 1 (max error {err:.3e})")
    return A


def _reachable(A: np.ndarray, start: int) -> set:
    seen, todo = {start}, [start]
    while todo:
        i = todo.pop()
        for j in np.flatnonzero(A[i] > 0):
            if j not in seen:
                seen.add(int(j))
                todo.append(int(j))
    return seen


def stationary_distribution(A: np.ndarray, strict: bool = True) -> np.ndarray:
    """Solve ``pi A = pi`` with ``sum(pi) = 1`` for an irreducible chain.

    ``strict=False`` skips the irreducibility scan; the answer is still unique
    when the chain has a single closed class (e.g. a transient busy state).
    """
    A = check_stochastic(A)
    S = A.shape[0]
    for s in range(S if strict else 0):
        missing = sorted(set(range(S)) - _reachable(A, s))
        if missing:
            raise ReducibleChainError(missing)
    M = np.vstack([A.T - np.eye(S), np.ones(S)])
    rhs = np.zeros(S + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    # One power-iteration polish keeps the residual at round-off level.
    for _ in range(3):
        pi = pi @ A
        pi /= pi.sum()
    return pi


def step_from_uniform(row: Sequence[float], u: float) -> int:
    """Inverse-CDF sample of a state index from one uniform draw ``u`` in [0, 1)."""
    cdf = np.cumsum(row)
    j = int(np.searchsorted(cdf, u, side="right"))
    if j >= len(cdf):
        # u beyond a cdf that rounds to slightly under 1: last state with mass
        j = int(np.flatnonzero(np.asarray(row) > 0)[-1])
    return j


def step(current: int, A: np.ndarray, rng: np.random.Generator) -> int:
    """Next state of the chain from row ``current`` of ``A``; consumes one uniform."""
    return step_from_uniform(A[current], rng.random())


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def loss_from_gain(gamma: float, packet_bits: int) -> float:
    """Packet loss for BPSK-like BER ``Q(sqrt(2 gamma))`` over ``packet_bits`` bits."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if packet_bits < 1:
        raise ValueError(f"packet_bits must be >= 1, got {packet_bits}")
    ber = q_function(math.sqrt(2.0 * gamma))
    p = -math.expm1(packet_bits * math.log1p(-ber))
    return min(max(p, 0.0), LOSS_CAP)


def default_gains(n_states: int) -> tuple:
    return tuple(float(g) for g in np.linspace(0.5, 4.0, n_states - 1))


def default_loss(n_states: int) -> tuple:
    return tuple(0.2 * 2.0 ** (-i) for i in range(n_states - 1))


@dataclass(frozen=True)
class ChannelModel:
    """Gain levels, per-state packet loss and transition matrix of one channel.

    ``gains`` and ``loss`` have one entry per available state. ``bandwidth``
    and ``slot`` are metadata and do not enter any computation.
    """

    n_states: int
    gains: tuple
    loss: tuple
    A: np.ndarray = field(repr=False)
    bandwidth: float = 1e6
    slot: float = 0.01

    def __post_init__(self):
        S = self.n_states
        if S < 2:
            raise ValueError(f"need at least 2 states, got {S}")
        gains = tuple(float(g) for g in self.gains)
        loss = tuple(float(p) for p in self.loss)
        if len(gains) != S - 1 or len(loss) != S - 1:
            raise ValueError(f"gains and loss need {S - 1} entries each")
        if any(g <= 0 for g in gains):
            raise ValueError("gains must be positive")
        if any(b <= a for a, b in zip(gains, gains[1:])):
            raise ValueError("gains must be strictly increasing")
        if any(not 0 <= p < 1 for p in loss):
            raise ValueError("per-state loss must lie in [0, 1)")
        A = check_stochastic(self.A).copy()
        if A.shape != (S, S):
            raise ValueError(f"transition matrix must be {S}x{S}, got {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "A", A)

    @property
    def busy(self) -> int:
        return self.n_states - 1

    def is_busy(self, state: int) -> bool:
        return state == self.n_states - 1

    @classmethod
    def from_scalars(cls, n_states, p_stay, p_avail_to_busy, p_busy_stay, gains=None, loss=None, **kw):
        gains = default_gains(n_states) if gains is None else gains
        loss = default_loss(n_states) if loss is None else loss
        A = build_transition(n_states, p_stay, p_avail_to_busy, p_busy_stay)
        return cls(n_states, tuple(gains), tuple(loss), A, **kw)

    def stationary(self, strict: bool = True) -> np.ndarray:
        return stationary_distribution(self.A, strict)


class ChainSampler:
    """Fast repeated sampling from a fixed transition matrix.

    Same inverse-CDF rule as :func:`step`, with the row CDFs cached as lists.
    """

    def __init__(self, A: np.ndarray):
        A = np.asarray(A)
        self._cdf = [list(np.cumsum(row)) for row in A]
        self._last = [int(np.flatnonzero(row > 0)[-1]) for row in A]

    def next(self, current: int, u: float) -> int:
        j = bisect_right(self._cdf[current], u)
        return j if j < len(self._cdf[current]) else self._last[current]


def simulate_chain(A: np.ndarray, x0: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """State path of length ``n`` starting from (and excluding) ``x0``."""
    sampler = ChainSampler(A)
    out = np.empty(n, dtype=np.int64)
    x = x0
    for k, u in enumerate(rng.random(n)):
        x = sampler.next(x, u)
        out[k] = x
    return out
