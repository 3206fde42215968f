"""Belief tracking and grid-based finite-horizon POMDP solving.

A belief is a probability vector over channel states, taken *before* the
slot's state transition. Each slot the chain moves (:func:`predict`), a
channel is sensed, and the end-of-slot observation corrects the sensed
channel's belief (:func:`update`); unsensed channels only advance by
``predict``.

The value function is tabulated on a fixed simplex lattice with coordinates
``k/M`` and read back by L1-nearest lookup. With several channels the belief
is a product of per-channel beliefs and the lattice is the product lattice.
Because the model is time-homogeneous, every lattice transition is computed
once and each backward-induction stage is a handful of array operations.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np

from crqos.markov_channel import ChannelModel
from crqos.rd_model import DEFAULT_BETA_GRID, BetaGrid, RdParams, beta_table, distortion_matrix
from crqos.sensing_obs import ObservationKernel, SensorDesign, observation_kernel

NO_SENSE = -1
SIMPLEX_TOL = 1e-9
FORMAT_VERSION = 1


class ImpossibleObservationError(ValueError):
    def __init__(self, pi, y):
        self.pi = np.asarray(pi)
        self.y = y
        super().__init__(f"observation {y} has zero probability under belief {self.pi.tolist()}")


class GridTooLargeError(MemoryError):
    pass


class PolicyArtifactError(ValueError):
    """Stored policy is missing, unreadable or does not match the model."""


# -- filtering ---------------------------------------------------------------


def _kernel_matrix(B) -> np.ndarray:
    return B.B if isinstance(B, ObservationKernel) else np.asarray(B)


def predict(pi: np.ndarray, A: np.ndarray) -> np.ndarray:
    """State distribution after one transition."""
    return np.asarray(pi) @ A


def update(pi: np.ndarray, A: np.ndarray, B, y: int) -> np.ndarray:
    """Bayes filter step: predict through ``A`` then condition on observation ``y``."""
    B = _kernel_matrix(B)
    unnorm = predict(pi, A) * B[:, y]
    total = unnorm.sum()
    if not total > 0:
        raise ImpossibleObservationError(pi, y)
    return unnorm / total


def map_available_state(pi_predicted: np.ndarray) -> tuple:
    """Most likely *available* state (busy excluded), lowest index on ties.

    Returns ``(index, degenerate)``; ``degenerate`` is set when no mass sits
    on any available state, in which case index 0 is returned.
    """
    avail = np.asarray(pi_predicted)[:-1]
    if not (avail > 0).any():
        return 0, True
    return int(np.argmax(avail)), False


# -- per-channel bundle -------------------------------------------------------


@dataclass(frozen=True)
class SensedChannel:
    """A channel together with everything needed to price sensing it.

    ``betas[s]`` is the optimal refresh rate when available state ``s`` is
    assumed; ``distortion[x, s]`` the total distortion in true state ``x``
    with that choice.
    """

    model: ChannelModel
    kernel: ObservationKernel
    betas: np.ndarray = field(repr=False)
    distortion: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, model: ChannelModel, sensor: SensorDesign, sigma: float, rd: RdParams,
              beta_grid: BetaGrid = DEFAULT_BETA_GRID) -> "SensedChannel":
        kernel = observation_kernel(model, sensor, sigma)
        betas = beta_table(rd, model.loss, beta_grid)
        dist = distortion_matrix(rd, model.loss, betas)
        return cls(model, kernel, betas, dist)

    @property
    def epsilon(self) -> float:
        return self.kernel.sensor.epsilon

    def cost_vector(self, beta_state: int, penalty: float) -> np.ndarray:
        """Expected slot cost per post-transition state when sensing this channel."""
        eps = self.epsilon
        c = np.full(self.model.n_states, float(penalty))
        c[:-1] = (1.0 - eps) * self.distortion[:, beta_state] + eps * penalty
        return c


def expected_immediate_cost(beliefs, channel_choice: int, channels: Sequence[SensedChannel],
                            penalty: float, beta: float | None = None, rd: RdParams | None = None) -> float:
    """Expected distortion-or-penalty of one slot.

    The sensed channel's state is drawn from the predicted belief; an idle
    sensor reading leads to access and the distortion of the true state, any
    other outcome (false alarm, busy channel) costs ``penalty``. The refresh
    rate defaults to the optimum for the most likely available state; pass
    ``beta`` (with ``rd``) to price a fixed value instead.
    """
    if isinstance(beliefs, np.ndarray) and beliefs.ndim == 1:
        beliefs = [beliefs]
    if channel_choice == NO_SENSE:
        return float(penalty)
    ch = channels[channel_choice]
    pred = predict(beliefs[channel_choice], ch.model.A)
    if beta is None:
        s, _ = map_available_state(pred)
        c = ch.cost_vector(s, penalty)
    else:
        if rd is None:
            raise ValueError("a fixed beta needs rd parameters")
        d = distortion_matrix(rd, ch.model.loss, [beta])[:, 0]
        c = np.full(ch.model.n_states, float(penalty))
        c[:-1] = (1.0 - ch.epsilon) * d + ch.epsilon * penalty
    return float(pred @ c)


# -- belief lattice -----------------------------------------------------------


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


class BeliefGrid:
    """All belief vectors with coordinates ``k/M``, in lexicographic order."""

    def __init__(self, n_states: int, resolution: int):
        if n_states < 2:
            raise ValueError("need at least 2 states")
        if resolution < 1:
            raise ValueError("resolution must be a positive integer")
        self.n_states = n_states
        self.resolution = resolution
        self.counts = np.array(list(_compositions(resolution, n_states)), dtype=np.int64)
        self.points = self.counts / resolution
        self._index = {tuple(c): i for i, c in enumerate(self.counts.tolist())}
        assert len(self._index) == comb(resolution + n_states - 1, n_states - 1)

    def __len__(self):
        return len(self.counts)

    def index_of_counts(self, counts) -> int:
        return self._index[tuple(int(c) for c in counts)]

    def nearest_counts(self, belief) -> np.ndarray:
        """Lattice counts of the L1-nearest grid point.

        Largest-remainder rounding of ``M * belief``; among equal remainders
        the extra units go to later coordinates, which yields the
        lexicographically smallest of the tied points.
        """
        M = self.resolution
        x = np.asarray(belief, dtype=float) * M
        base = np.floor(x).astype(np.int64)
        base = np.clip(base, 0, M)
        frac = x - base
        extra = M - int(base.sum())
        if extra > 0:
            order = sorted(range(len(x)), key=lambda i: (-frac[i], -i))
            for i in order[:extra]:
                base[i] += 1
        elif extra < 0:
            # only reachable through round-off on an unnormalized input
            order = sorted(range(len(x)), key=lambda i: (frac[i], i))
            for i in order:
                if extra == 0:
                    break
                if base[i] > 0:
                    base[i] -= 1
                    extra += 1
        return base

    def nearest(self, belief) -> int:
        return self._index[tuple(self.nearest_counts(belief).tolist())]


# -- solver -------------------------------------------------------------------


@dataclass
class _ChannelTables:
    sense_cost: np.ndarray   # (G,)
    obs_prob: np.ndarray     # (G, S)
    obs_next: np.ndarray     # (G, S) grid index after observing y
    pred_next: np.ndarray    # (G,) grid index after predict only


def _channel_tables(ch: SensedChannel, grid: BeliefGrid, penalty: float) -> _ChannelTables:
    A, B = ch.model.A, ch.kernel.B
    G, S = len(grid), grid.n_states
    cost = np.empty(G)
    prob = np.zeros((G, S))
    nxt = np.zeros((G, S), dtype=np.int64)
    pnext = np.empty(G, dtype=np.int64)
    for g, pt in enumerate(grid.points):
        pred = pt @ A
        s, _ = map_available_state(pred)
        cost[g] = pred @ ch.cost_vector(s, penalty)
        pnext[g] = grid.nearest(pred)
        joint = pred[:, None] * B
        py = joint.sum(axis=0)
        prob[g] = py
        for y in range(S):
            if py[y] > 0:
                nxt[g, y] = grid.nearest(joint[:, y] / py[y])
    return _ChannelTables(cost, prob, nxt, pnext)


def model_fingerprint(channels: Sequence[SensedChannel], penalty: float, resolutions: Sequence[int]) -> str:
    h = hashlib.sha256()
    for ch in channels:
        for arr in (ch.model.A, ch.kernel.B, ch.betas, ch.distortion):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        h.update(repr((ch.model.n_states, ch.kernel.sensor.epsilon, ch.kernel.sensor.delta)).encode())
    h.update(repr((float(penalty), tuple(int(m) for m in resolutions))).encode())
    return h.hexdigest()[:16]


@dataclass
class PomdpSolution:
    """Stage-indexed value and policy tables on the (product) belief lattice.

    ``values[k-1]`` and ``policy[k-1]`` hold stage ``k``; arrays have one axis
    per channel. Policy entries are channel indices or ``NO_SENSE``.
    """

    values: np.ndarray
    policy: np.ndarray
    grids: tuple
    horizon: int
    penalty: float
    model_hash: str

    def joint_index(self, beliefs) -> tuple:
        return tuple(grid.nearest(b) for grid, b in zip(self.grids, beliefs))

    def save(self, path) -> None:
        meta = {
            "format_version": FORMAT_VERSION,
            "horizon": self.horizon,
            "penalty": self.penalty,
            "model_hash": self.model_hash,
            "grids": [[g.n_states, g.resolution] for g in self.grids],
        }
        with open(path, "wb") as fh:
            np.savez_compressed(fh, values=self.values, policy=self.policy, meta=json.dumps(meta))

    @classmethod
    def load(cls, path) -> "PomdpSolution":
        path = Path(path)
        if not path.exists():
            raise PolicyArtifactError(f"policy artifact not found: {path}")
        try:
            with np.load(path, allow_pickle=False) as data:
                meta = json.loads(str(data["meta"]))
                values, policy = data["values"], data["policy"]
        except (OSError, KeyError, ValueError) as exc:
            raise PolicyArtifactError(f"cannot read policy artifact {path}: {exc}") from exc
        if meta.get("format_version") != FORMAT_VERSION:
            raise PolicyArtifactError(f"unsupported policy format {meta.get('format_version')}")
        grids = tuple(BeliefGrid(s, m) for s, m in meta["grids"])
        return cls(values, policy, grids, int(meta["horizon"]), float(meta["penalty"]), meta["model_hash"])


def solve_finite_horizon(channels: Sequence[SensedChannel], horizon: int, resolution: int | Sequence[int],
                         penalty: float = 500.0, max_points: int = 1_000_000) -> PomdpSolution:
    """Backward induction over ``horizon`` stages.

    The last stage only counts the immediate cost; earlier stages add the
    expected next-stage value at the nearest lattice point of each posterior.
    Actions are "sense channel n" for each channel plus ``NO_SENSE``; the
    first minimizing action in that order wins ties.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    N = len(channels)
    if N < 1:
        raise ValueError("need at least one channel")
    res = [resolution] * N if isinstance(resolution, int) else list(resolution)
    grids = tuple(BeliefGrid(ch.model.n_states, m) for ch, m in zip(channels, res))
    shape = tuple(len(g) for g in grids)
    n_points = math.prod(shape)
    if n_points > max_points:
        raise GridTooLargeError(f"joint belief grid has {n_points} points, cap is {max_points}")

    tabs = [_channel_tables(ch, g, penalty) for ch, g in zip(channels, grids)]

    def along(axis, vec):
        s = [1] * N
        s[axis] = len(vec)
        return vec.reshape(s)

    immediate = [np.broadcast_to(along(n, tabs[n].sense_cost), shape) for n in range(N)]
    immediate.append(np.full(shape, float(penalty)))

    values = np.empty((horizon,) + shape)
    policy = np.empty((horizon,) + shape, dtype=np.int8)
    action_ids = np.array(list(range(N)) + [NO_SENSE], dtype=np.int8)
    pred_ix = [t.pred_next for t in tabs]

    nxt = None
    for k in range(horizon, 0, -1):
        Q = np.stack([c.copy() for c in immediate])
        if nxt is not None:
            for n in range(N):
                t = tabs[n]
                for y in range(grids[n].n_states):
                    ix = list(pred_ix)
                    ix[n] = t.obs_next[:, y]
                    Q[n] += along(n, t.obs_prob[:, y]) * nxt[np.ix_(*ix)]
            Q[N] += nxt[np.ix_(*pred_ix)]
        best = np.argmin(Q, axis=0)
        values[k - 1] = np.take_along_axis(Q, best[None], axis=0)[0]
        policy[k - 1] = action_ids[best]
        nxt = values[k - 1]

    return PomdpSolution(values, policy, grids, horizon, float(penalty),
                         model_fingerprint(channels, penalty, res))


def policy_action(solution: PomdpSolution, stage: int, beliefs) -> int:
    """Stored action at the lattice point nearest to ``beliefs`` for 1-based ``stage``."""
    if isinstance(beliefs, np.ndarray) and beliefs.ndim == 1:
        beliefs = [beliefs]
    if stage < 1:
        raise ValueError(f"stage must be >= 1, got {stage}")
    if stage > solution.horizon:
        warnings.warn(f"stage {stage} beyond horizon {solution.horizon}; using the last stage", RuntimeWarning)
        stage = solution.horizon
    return int(solution.policy[(stage - 1,) + solution.joint_index(beliefs)])


def stage_value(solution: PomdpSolution, stage: int, beliefs) -> float:
    if isinstance(beliefs, np.ndarray) and beliefs.ndim == 1:
        beliefs = [beliefs]
    return float(solution.values[(stage - 1,) + solution.joint_index(beliefs)])
