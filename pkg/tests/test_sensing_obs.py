import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crqos.markov_channel import ChannelModel, build_transition
from crqos.sensing_obs import (
    RocModel,
    SensorDesign,
    gain_quantization_matrix,
    observation_kernel,
    operating_point_for_collision,
    roc_delta_for_epsilon,
    sample_observation,
    sense_and_access,
    sensor_for_epsilon,
)
from oracles import pce_normal_cdf


def test_roc_points():
    roc = RocModel(3)
    assert roc_delta_for_epsilon(roc, 1.0) == 0
    assert roc_delta_for_epsilon(roc, 0.0) == 1
    assert roc_delta_for_epsilon(roc, 0.6) == pytest.approx(0.064, abs=1e-12)
    with pytest.raises(ValueError):
        RocModel(0.5)


@given(st.floats(1, 6), st.floats(0, 1), st.floats(0, 1))
def test_roc_monotone(kappa, e1, e2):
    roc = RocModel(kappa)
    lo, hi = sorted((e1, e2))
    assert roc_delta_for_epsilon(roc, hi) <= roc_delta_for_epsilon(roc, lo)


def test_operating_point():
    d = operating_point_for_collision(RocModel(3), 0.064)
    assert d.epsilon == pytest.approx(0.6, abs=1e-12) and d.delta == 0.064
    d = operating_point_for_collision(RocModel(1), 0.3)
    assert d.epsilon == pytest.approx(0.7) and d.delta == 0.3
    d = operating_point_for_collision(RocModel(3), 1.0)
    assert (d.epsilon, d.delta) == (0.0, 1.0)
    with pytest.raises(ValueError):
        operating_point_for_collision(RocModel(3), 0.0)


def test_quantization_two_levels():
    np.testing.assert_array_equal(gain_quantization_matrix([0.5, 1.5], 0.0), np.eye(2))
    np.testing.assert_allclose(gain_quantization_matrix([0.5, 1.5], 1e-6), np.eye(2), atol=1e-12)
    P = gain_quantization_matrix([0.5, 1.5], 0.5)
    np.testing.assert_allclose(P[0], [0.841345, 0.158655], atol=1e-6)
    np.testing.assert_allclose(P[1], [0.158655, 0.841345], atol=1e-6)
    np.testing.assert_allclose(P, pce_normal_cdf([0.5, 1.5], 0.5), atol=1e-12)


def test_quantization_single_level():
    np.testing.assert_array_equal(gain_quantization_matrix([2.0], 0.3), [[1.0]])


@settings(max_examples=200)
@given(st.lists(st.floats(0.1, 10), min_size=2, max_size=8, unique=True), st.floats(0.01, 3))
def test_quantization_matches_normal_cdf(gains, sigma):
    gains = sorted(gains)
    if min(np.diff(gains)) < 1e-3:
        return
    P = gain_quantization_matrix(gains, sigma)
    assert np.abs(P.sum(axis=1) - 1).max() <= 1e-9
    np.testing.assert_allclose(P, pce_normal_cdf(gains, sigma), atol=1e-9)


@given(st.lists(st.floats(0.1, 10), min_size=2, max_size=8, unique=True), st.floats(0, 1))
def test_nearest_level_dominates(gains, frac):
    gains = sorted(gains)
    gap = min(np.diff(gains))
    if gap < 1e-3:
        return
    sigma = frac * 0.49 * gap
    P = gain_quantization_matrix(gains, sigma)
    assert (np.argmax(P, axis=1) == np.arange(len(gains))).all()


def _model(S=3, gains=None):
    gains = gains or tuple(np.linspace(0.5, 4.0, S - 1))
    return ChannelModel(S, gains, tuple(0.1 for _ in range(S - 1)), build_transition(S, 0.5, 0.2, 0.5) if S > 2
                        else build_transition(2, 0.8, 0.2, 0.5))


def test_kernel_two_state():
    k = observation_kernel(_model(2), SensorDesign(0.4, 0.064), 0.1)
    np.testing.assert_allclose(k.B, [[0.6, 0.4], [0.0, 1.0]])


def test_kernel_no_false_alarm_and_busy_row():
    m = _model(5)
    k = observation_kernel(m, SensorDesign(0.0, 1.0), 0.7)
    np.testing.assert_allclose(k.B[:-1, :-1], k.pce)
    np.testing.assert_array_equal(k.B[:-1, -1], 0)
    np.testing.assert_array_equal(k.B[-1], [0, 0, 0, 0, 1])


@given(st.integers(2, 7), st.floats(0, 1), st.floats(0, 2))
def test_kernel_rows_sum_to_one(S, eps, sigma):
    k = observation_kernel(_model(S), SensorDesign(eps, 0.1), sigma)
    assert np.abs(k.B.sum(axis=1) - 1).max() <= 1e-9


def test_sense_and_access_extremes():
    rng = np.random.default_rng(1)
    assert not any(sense_and_access(True, SensorDesign(0.5, 0.0), rng)[1] for _ in range(1000))
    assert all(sense_and_access(False, SensorDesign(0.0, 0.5), rng)[1] for _ in range(1000))


def test_miss_rate_matches_delta():
    rng = np.random.default_rng(2)
    n = 10**6
    s = sensor_for_epsilon(RocModel(3), 0.6)
    hits = sum(sense_and_access(True, s, rng)[1] for _ in range(n))
    se = np.sqrt(0.064 * 0.936 / n)
    assert abs(hits / n - 0.064) <= 3 * se


def test_sample_observation_cases():
    m = _model(3)
    k = observation_kernel(m, SensorDesign(0.3, 0.1), 1e-9)
    rng = np.random.default_rng(3)
    assert sample_observation(2, True, k, rng) == 2
    assert sample_observation(0, False, k, rng) == 2
    assert sample_observation(0, True, k, rng) == 0
    assert sample_observation(1, True, k, rng) == 1


def test_sampling_pipeline_marginalizes_to_kernel():
    m = _model(4, gains=(1.0, 1.5, 2.0))
    sensor = SensorDesign(0.35, 0.1)
    k = observation_kernel(m, sensor, 0.3)
    rng = np.random.default_rng(4)
    n = 200_000
    for x in range(3):
        counts = np.zeros(4)
        for _ in range(n):
            _, acc = sense_and_access(False, sensor, rng)
            counts[sample_observation(x, acc, k, rng)] += 1
        freq = counts / n
        se = np.sqrt(k.B[x] * (1 - k.B[x]) / n)
        assert (np.abs(freq - k.B[x]) <= 4 * se + 1e-12).all()
