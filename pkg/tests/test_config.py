import numpy as np
import pytest

from crqos.config import (
    ConfigFileNotFound,
    ConfigParseError,
    ConfigValidationError,
    ExperimentConfig,
    UnknownPresetError,
    build_channels,
    config_from_dict,
    dump_config,
    load_config,
    preset,
    preset_names,
    with_param,
)
from crqos.markov_channel import stationary_distribution


def test_missing_file(tmp_path):
    with pytest.raises(ConfigFileNotFound) as info:
        load_config(tmp_path / "nope.yaml")
    assert "nope.yaml" in str(info.value)


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    cfg = load_config(p)
    assert cfg == ExperimentConfig()
    ch = cfg.channels[0]
    assert (ch.n_states, cfg.sensor.epsilon, cfg.sensor.sigma, cfg.horizon, cfg.seeds) == (5, 0.6, 0.1, 200, 50)
    assert [str(m) for m in cfg.method_list()] == ["oracle", "belief_map", "last_ack", "constant_beta"]


def test_parse_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("channels: [\n")
    with pytest.raises(ConfigParseError):
        load_config(p)
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigParseError):
        load_config(p)


def test_negative_sigma_in_sweep_names_sigma():
    with pytest.raises(ConfigValidationError) as info:
        config_from_dict({"sweep": {"param": "sensor.sigma", "values": [0.1, -0.2]}})
    assert "sigma" in info.value.key


@pytest.mark.parametrize("d, key", [
    ({"horizon": 0}, "horizon"),
    ({"bogus": 1}, "bogus"),
    ({"sensor": {"epsilon": 1.5}}, "sensor.epsilon"),
    ({"channels": [{"p_stay": 0.99, "p_avail_to_busy": 0.05}]}, "channels.0.p_stay"),
    ({"channels": [{"wat": 1}]}, "channels.0.wat"),
    ({"methods": ["constant_beta:0.123"]}, "methods"),
    ({"methods": ["oracle"], "channels": [{}, {}]}, "methods"),
    ({"sweep": {"param": "channels.3.p_stay", "values": [0.5]}}, "sweep.param"),
    ({"sweep": {"param": "sensor.epsilon", "values": []}}, "sweep.values"),
])
def test_validation_errors_name_the_key(d, key):
    with pytest.raises(ConfigValidationError) as info:
        config_from_dict(d)
    assert info.value.key == key


def test_fig4_preset():
    cfg = preset("fig4")
    ch = cfg.channels[0]
    assert cfg.sweep.param == "channels.0.p_stay"
    assert cfg.sweep.values == pytest.approx(np.arange(0.5, 0.951, 0.05))
    assert (ch.p_avail_to_busy, ch.n_states, cfg.sensor.epsilon) == (0.05, 5, 0.6)


def test_fig9_preset():
    cfg = preset("fig9")
    c1, c2 = cfg.channels
    assert cfg.sweep.param == "channels.0.p_avail_to_busy"
    assert c1.p_busy_stay == 0.4
    assert (c2.p_busy_stay, c2.p_avail_to_busy) == (0.8, 0.6)
    assert cfg.sensor.epsilon == 0.62


def test_fig3_and_fig5_presets():
    cfg = preset("fig3")
    assert cfg.sweep.values == [3, 4, 5, 6, 7, 8]
    ch = cfg.channels[0]
    assert (ch.p_stay, ch.p_avail_to_busy, ch.p_busy_stay, cfg.sensor.sigma) == (0.85, 0.05, 0.1, 0.1)
    assert preset("fig5").channels[0].p_stay == 0.5


def test_unknown_preset():
    with pytest.raises(UnknownPresetError):
        preset("fig99")


@pytest.mark.parametrize("name", preset_names())
def test_preset_round_trip(name, tmp_path):
    cfg = preset(name)
    p = tmp_path / f"{name}.yaml"
    dump_config(cfg, p)
    assert load_config(p) == cfg


@pytest.mark.parametrize("name", preset_names())
def test_preset_stationary_residuals(name):
    for _, point in preset(name).sweep_points():
        for ch in build_channels(point):
            A = ch.model.A
            pi = stationary_distribution(A)
            assert np.abs(pi @ A - pi).max() < 1e-10


def test_with_param_paths():
    cfg = preset("fig8")
    assert with_param(cfg, "channels.*.sigma", 0.3).channels[1].sigma == 0.3
    assert with_param(cfg, "rd.eta", 1.2).rd.eta == 1.2
    assert with_param(cfg, "horizon", 30).horizon == 30
    assert with_param(cfg, "channels.0.n_states", 4.0).channels[0].n_states == 4
    with pytest.raises(ConfigValidationError):
        with_param(cfg, "channels.0.n_states", 4.5)
    with pytest.raises(ConfigValidationError):
        with_param(cfg, "nowhere", 1)
    # the source config is untouched
    assert cfg.horizon == 200 and cfg.sweep is not None


def test_zeta_overrides_epsilon():
    cfg = config_from_dict({"sensor": {"zeta": 0.064}})
    s = build_channels(cfg)[0].kernel.sensor
    assert s.epsilon == pytest.approx(0.6) and s.delta == 0.064
