"""Closed-form video rate-distortion model and intra-refresh rate selection.

The source term grows with the intra refresh rate ``beta`` while the channel
term (error propagation after packet loss) shrinks with it. ``optimal_beta``
picks the grid point that balances the two for a given packet loss rate.

Infinite distortion is represented by ``math.inf``; it propagates through
sums and compares greater than every finite value, so no large float stands
in for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class SingularDistortionError(ValueError):
    """Raised when ``1 - b + b*beta`` is not positive."""


@dataclass(frozen=True)
class RdParams:
    """Rate-distortion constants for one video sequence.

    Attributes:
        ds0: source distortion with no intra refresh, D_s(R_s, 0).
        ds1: source distortion with full intra refresh, D_s(R_s, 1).
        eta: sequence-dependent curvature constant.
        a: energy-loss ratio of the encoder filter.
        b: motion randomness of the scene.
        efd: mean frame difference E[F_d(m, m-1)].
        target_rate: source rate in bit/s, carried for bookkeeping only.
    """

    ds0: float = 74.0
    ds1: float = 124.0
    eta: float = 1.4
    a: float = 0.01
    b: float = 1.0
    efd: float = 100.0
    target_rate: float = 256e3

    def __post_init__(self):
        for name in ("ds0", "ds1", "eta", "a", "b", "efd", "target_rate"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0 <= self.ds0 <= self.ds1:
            raise ValueError(f"need 0 <= ds0 <= ds1, got ds0={self.ds0}, ds1={self.ds1}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not 0 < self.a <= 1:
            raise ValueError(f"a must be in (0, 1], got {self.a}")
        if not 0 <= self.b <= 1:
            raise ValueError(f"b must be in [0, 1], got {self.b}")
        if self.efd < 0:
            raise ValueError(f"efd must be >= 0, got {self.efd}")
        if self.target_rate <= 0:
            raise ValueError(f"target_rate must be > 0, got {self.target_rate}")


class BetaGrid:
    """Quantized set of admissible intra refresh rates, strictly increasing in (0, 1]."""

    def __init__(self, values: Sequence[float]):
        vals = tuple(float(v) for v in values)
        if not vals:
            raise ValueError("beta grid must be nonempty")
        if any(not 0 <= v <= 1 for v in vals):
            raise ValueError("beta grid values must lie in [0, 1]")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("beta grid must be strictly increasing")
        self.values = vals

    @classmethod
    def uniform(cls, step: float = 0.01) -> "BetaGrid":
        n = int(round(1.0 / step))
        if not math.isclose(n * step, 1.0):
            raise ValueError(f"step {step} does not divide 1")
        return cls([round(k / n, 12) for k in range(1, n + 1)])

    def validate_for(self, params: RdParams) -> None:
        for v in self.values:
            if 1.0 - params.b + params.b * v <= 0:
                raise SingularDistortionError(
                    f"beta={v} makes the channel-distortion denominator vanish (b={params.b})"
                )

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __contains__(self, beta) -> bool:
        return any(math.isclose(beta, v, rel_tol=0, abs_tol=1e-12) for v in self.values)

    def __eq__(self, other):
        return isinstance(other, BetaGrid) and self.values == other.values

    def __hash__(self):
        return hash(self.values)

    def __repr__(self):
        if len(self.values) > 6:
            return f"BetaGrid([{self.values[0]}, {self.values[1]}, ..., {self.values[-1]}], n={len(self)})"
        return f"BetaGrid({list(self.values)})"


DEFAULT_BETA_GRID = BetaGrid.uniform(0.01)


class DistortionBreakdown(NamedTuple):
    source: float
    channel: float
    total: float


class BetaChoice(NamedTuple):
    beta: float
    distortion: float
    degenerate: bool = False


def source_distortion(params: RdParams, beta: float) -> float:
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    return params.ds0 + beta * (1 - params.eta + params.eta * beta) * (params.ds1 - params.ds0)


def channel_distortion(params: RdParams, p: float, beta: float) -> float:
    """Loss-induced distortion; ``math.inf`` when every packet is lost."""
    if not 0 <= p <= 1:
        raise ValueError(f"packet loss p must be in [0, 1], got {p}")
    denom = 1 - params.b + params.b * beta
    if denom <= 0:
        raise SingularDistortionError(
            f"1 - b + b*beta = {denom} <= 0 (b={params.b}, beta={beta})"
        )
    if p == 1:
        return math.inf
    return (params.a / denom) * (p / (1 - p)) * params.efd


def total_distortion(params: RdParams, p: float, beta: float) -> float:
    return source_distortion(params, beta) + channel_distortion(params, p, beta)


def distortion_breakdown(params: RdParams, p: float, beta: float) -> DistortionBreakdown:
    ds = source_distortion(params, beta)
    dc = channel_distortion(params, p, beta)
    return DistortionBreakdown(ds, dc, ds + dc)


def optimal_beta(params: RdParams, p: float, grid: BetaGrid = DEFAULT_BETA_GRID) -> BetaChoice:
    """Exhaustive search of ``grid`` for the minimum total distortion.

    Ties go to the smaller beta. With ``p == 1`` every beta gives infinite
    distortion; the smallest grid value is returned and flagged degenerate.
    """
    grid.validate_for(params)
    if p == 1:
        return BetaChoice(grid.values[0], math.inf, True)
    best_beta, best = grid.values[0], math.inf
    for beta in grid.values:
        d = total_distortion(params, p, beta)
        if d < best:
            best_beta, best = beta, d
    return BetaChoice(best_beta, best, False)


def beta_table(params: RdParams, loss: Sequence[float], grid: BetaGrid = DEFAULT_BETA_GRID) -> np.ndarray:
    """Optimal beta for each available state's packet loss."""
    return np.array([optimal_beta(params, p, grid).beta for p in loss])


def distortion_matrix(params: RdParams, loss: Sequence[float], betas: Sequence[float]) -> np.ndarray:
    """``out[x, s]``: total distortion in available state ``x`` when using ``betas[s]``."""
    return np.array([[total_distortion(params, p, b) for b in betas] for p in loss])
