import dataclasses
import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
import yaml

from crqos.belief_pomdp import PolicyArtifactError
from crqos.cli import main
from crqos.config import config_from_dict, preset, with_param
from crqos.experiments import (
    CSV_HEADER,
    ResultRow,
    aggregate,
    emit_chart,
    emit_csv,
    fmt,
    load_policies,
    run_experiment,
    save_policies,
    solve_config,
)

TWO_CHANNEL = {
    "name": "tiny2",
    "channels": [
        {"n_states": 3, "p_stay": 0.5, "p_avail_to_busy": 0.2, "p_busy_stay": 0.4},
        {"n_states": 3, "p_stay": 0.3, "p_avail_to_busy": 0.6, "p_busy_stay": 0.8},
    ],
    "sensor": {"epsilon": 0.62},
    "horizon": 12,
    "seeds": 3,
    "grid_resolution": 4,
    "sweep": {"param": "channels.0.p_busy_stay", "values": [0.2, 0.6]},
}


def _small(name="fig3", seeds=3, horizon=20):
    cfg = preset(name)
    cfg.seeds, cfg.horizon = seeds, horizon
    return cfg


def _rendered(rows):
    # NaN never compares equal, so compare the CSV text form
    return [tuple(fmt(v) if not isinstance(v, str) else v for v in dataclasses.astuple(r)) for r in rows]


def test_fmt():
    assert fmt(73.811111) == "73.811111"
    assert fmt(0.1) == "0.1"
    assert fmt(math.nan) == "nan"
    assert fmt(12) == "12"
    assert fmt(None) == ""
    assert fmt(1 / 3) == "0.333333333"


def test_one_row_csv(tmp_path):
    row = ResultRow("x", "", None, "oracle", 0, 73.811111, 0.5, 0.0, 10, 20)
    p = tmp_path / "r.csv"
    emit_csv([row], p)
    text = p.read_text()
    assert text == CSV_HEADER + "\nx,,,oracle,0,73.811111,0.5,0,10,20\n"
    assert CSV_HEADER == ("experiment,sweep_param,sweep_value,method,seed,avg_distortion,"
                          "spectrum_utilization,collision_rate,accessed_slots,available_slots")
    with pytest.raises(ValueError):
        emit_csv([], p)


def test_row_count_and_aggregate_means():
    cfg = _small()
    rows = run_experiment(cfg)
    assert len(rows) == len(cfg.sweep.values) * 4 * cfg.seeds
    for a in aggregate(rows):
        xs = [getattr(r, a.metric) for r in rows if (r.sweep_value, r.method) == (a.sweep_value, a.method)]
        xs = [x for x in xs if not math.isnan(x)]
        assert abs(a.mean - np.mean(xs)) <= 1e-12 and a.n == len(xs)


def test_rows_independent_of_workers():
    cfg = _small("fig7", seeds=2, horizon=15)
    assert _rendered(run_experiment(cfg, workers=1)) == _rendered(run_experiment(cfg, workers=2))


def test_zero_height_error_bar(tmp_path):
    rows = [ResultRow("x", "p", 1.0, "oracle", s, 73.0, 1.0, 0.0, 5, 5) for s in range(4)]
    aggs = aggregate(rows)
    assert all(a.half_width == 0.0 for a in aggs)
    p = tmp_path / "c.svg"
    emit_chart(aggs, p)
    assert ET.parse(p).getroot().tag.endswith("svg")


def test_policy_round_trip_and_checks(tmp_path):
    cfg = config_from_dict(TWO_CHANNEL)
    sols = solve_config(cfg)
    p = tmp_path / "pol.npz"
    save_policies(sols, p)
    back = load_policies(p)
    assert [s.model_hash for s in back] == [s.model_hash for s in sols]
    assert _rendered(run_experiment(cfg, back)) == _rendered(run_experiment(cfg, sols))
    with pytest.raises(PolicyArtifactError):
        run_experiment(cfg)
    with pytest.raises(PolicyArtifactError, match="horizon"):
        run_experiment(dataclasses.replace(cfg, horizon=13), back)
    other = with_param(cfg, "sensor.epsilon", 0.5)
    other.sweep = cfg.sweep
    with pytest.raises(PolicyArtifactError, match="different model"):
        run_experiment(other, back)
    with pytest.raises(PolicyArtifactError):
        load_policies(tmp_path / "missing.npz")


# -- CLI ------------------------------------------------------------------------


def _write(tmp_path, d, name="c.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(d))
    return str(p)


def test_cli_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "gone.yaml")]) == 1
    assert "gone.yaml" in capsys.readouterr().err


def test_cli_bad_values(tmp_path, capsys):
    cfg = _write(tmp_path, {"sweep": {"param": "sensor.sigma", "values": [-1]}})
    assert main(["run", "--config", cfg]) == 1
    assert "sigma" in capsys.readouterr().err
    assert main(["run", "--preset", "fig99"]) == 1


def test_cli_preset_list(capsys):
    assert main(["preset-list"]) == 0
    out = capsys.readouterr().out.split("\n")
    assert [line.split()[0] for line in out if line] == [f"fig{i}" for i in range(3, 13)]


def test_cli_pomdp_without_policy(tmp_path):
    assert main(["run", "--config", _write(tmp_path, TWO_CHANNEL), "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", _write(tmp_path, TWO_CHANNEL), "--policy", str(tmp_path / "x.npz")]) == 2


def test_cli_solve_run_and_horizon_mismatch(tmp_path):
    cfg = _write(tmp_path, TWO_CHANNEL)
    pol = str(tmp_path / "p.npz")
    assert main(["solve", "--config", cfg, "--out", pol]) == 0
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--policy", pol, "--out", str(out), "--charts"]) == 0
    lines = (out / "tiny2_raw.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 1 + 2 * 3 * 3
    assert (out / "tiny2_spectrum_utilization.svg").exists()
    longer = _write(tmp_path, {**TWO_CHANNEL, "horizon": 20}, "long.yaml")
    assert main(["run", "--config", longer, "--policy", pol, "--out", str(out)]) == 2


def test_cli_numerical_failure(tmp_path):
    cfg = _write(tmp_path, {**TWO_CHANNEL, "max_joint_points": 10})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path / "p.npz")]) == 3


def test_cli_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["run", "--preset", "fig6", "--seeds", "2", "--out", str(out)]) == 0
    assert (a / "fig6_raw.csv").read_bytes() == (b / "fig6_raw.csv").read_bytes()
    assert (a / "fig6_summary.csv").read_bytes() == (b / "fig6_summary.csv").read_bytes()
    rows = (a / "fig6_raw.csv").read_text().splitlines()
    assert len(rows) == 1 + 7 * 4 * 2


def test_cli_sweep_and_dump(tmp_path, capsys):
    cfg = _write(tmp_path, TWO_CHANNEL)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "s" / "tiny2_avg_distortion.svg").exists()
    capsys.readouterr()
    assert main(["dump-config", "--preset", "fig8"]) == 0
    assert config_from_dict(yaml.safe_load(capsys.readouterr().out)) == preset("fig8")
