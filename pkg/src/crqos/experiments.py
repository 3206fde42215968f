"""Monte-Carlo experiment runner: policy solving, episodes, CSV and charts."""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from crqos.belief_pomdp import (
    FORMAT_VERSION,
    BeliefGrid,
    PolicyArtifactError,
    PomdpSolution,
    model_fingerprint,
    solve_finite_horizon,
)
from crqos.config import ExperimentConfig, build_channels, build_scenario
from crqos.policy_sim import MethodKind, aggregate_ci, compute_metrics, run_episode

log = logging.getLogger(__name__)

CSV_HEADER = ("experiment,sweep_param,sweep_value,method,seed,avg_distortion,"
              "spectrum_utilization,collision_rate,accessed_slots,available_slots")
SUMMARY_HEADER = ("experiment,sweep_param,sweep_value,method,metric,n,mean,ci_half_width")
METRICS = ("avg_distortion", "spectrum_utilization", "collision_rate")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sweep_param: str
    sweep_value: float | None
    method: str
    seed: int
    avg_distortion: float
    spectrum_utilization: float
    collision_rate: float
    accessed_slots: int
    available_slots: int


@dataclass(frozen=True)
class Aggregate:
    experiment: str
    sweep_param: str
    sweep_value: float | None
    method: str
    metric: str
    n: int
    mean: float
    half_width: float


def fmt(x) -> str:
    """Up to 9 significant digits; ``nan`` for the missing-value sentinel."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.9g}"


def needs_policy(cfg: ExperimentConfig) -> bool:
    return any(m.kind is MethodKind.POMDP_CHANNEL for m in cfg.method_list())


# -- policies ------------------------------------------------------------------


def solve_config(cfg: ExperimentConfig) -> list:
    """One solution per sweep point (a single one without a sweep)."""
    out = []
    for value, point in cfg.sweep_points():
        channels = build_channels(point)
        log.info("solving %s point %s", cfg.name, value)
        out.append(solve_finite_horizon(channels, point.horizon, point.resolution(), point.penalty,
                                        max_points=point.max_joint_points))
    return out


def save_policies(solutions, path) -> None:
    meta = []
    arrays = {}
    for i, sol in enumerate(solutions):
        meta.append({
            "horizon": sol.horizon,
            "penalty": sol.penalty,
            "model_hash": sol.model_hash,
            "grids": [[g.n_states, g.resolution] for g in sol.grids],
        })
        arrays[f"values_{i}"] = sol.values
        arrays[f"policy_{i}"] = sol.policy
    header = json.dumps({"format_version": FORMAT_VERSION, "points": meta})
    with open(path, "wb") as fh:
        np.savez_compressed(fh, meta=header, **arrays)


def load_policies(path) -> list:
    path = Path(path)
    if not path.is_file():
        raise PolicyArtifactError(f"policy artifact not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            header = json.loads(str(data["meta"]))
            if header.get("format_version") != FORMAT_VERSION:
                raise PolicyArtifactError(f"unsupported policy format {header.get('format_version')}")
            sols = []
            for i, m in enumerate(header["points"]):
                grids = tuple(BeliefGrid(s, r) for s, r in m["grids"])
                sols.append(PomdpSolution(data[f"values_{i}"], data[f"policy_{i}"], grids,
                                          int(m["horizon"]), float(m["penalty"]), m["model_hash"]))
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, PolicyArtifactError):
            raise
        raise PolicyArtifactError(f"cannot read policy artifact {path}: {exc}") from exc
    return sols


def check_policies(cfg: ExperimentConfig, solutions) -> None:
    points = cfg.sweep_points()
    if len(solutions) != len(points):
        raise PolicyArtifactError(f"artifact holds {len(solutions)} policies, config has {len(points)} points")
    for (value, point), sol in zip(points, solutions):
        if sol.horizon != point.horizon:
            raise PolicyArtifactError(f"policy horizon {sol.horizon} != config horizon {point.horizon}")
        expect = model_fingerprint(build_channels(point), point.penalty, [point.resolution()] * point.n_channels)
        if sol.model_hash != expect:
            raise PolicyArtifactError(f"policy was solved for a different model (sweep value {value})")


# -- running -------------------------------------------------------------------


def _episode_task(args):
    point, solution, method, seed, label = args
    scenario = build_scenario(point, solution)
    m = compute_metrics(run_episode(scenario, method, seed))
    return label + (str(method), seed, m)


def run_experiment(cfg: ExperimentConfig, solutions=None, seeds: int | None = None, workers: int = 1) -> list:
    """Raw per-episode rows for every sweep point, method and seed.

    Rows come back sorted by (sweep index, method order, seed) whatever the
    number of workers.
    """
    methods = cfg.method_list()
    if needs_policy(cfg):
        if solutions is None:
            raise PolicyArtifactError("pomdp_channel requires a solved policy")
        check_policies(cfg, solutions)
    n_seeds = cfg.seeds if seeds is None else seeds
    seed_list = [cfg.seed_offset + s for s in range(n_seeds)]
    param = cfg.sweep.param if cfg.sweep else ""
    tasks = []
    for i, (value, point) in enumerate(cfg.sweep_points()):
        sol = solutions[i] if solutions is not None else None
        for j, method in enumerate(methods):
            for seed in seed_list:
                tasks.append((point, sol if method.kind is MethodKind.POMDP_CHANNEL else None,
                              method, seed, (i, j, value)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_episode_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        results = [_episode_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1], r[4]))
    return [
        ResultRow(cfg.name, param, value, mname, seed, m.avg_distortion, m.spectrum_utilization,
                  m.collision_rate, m.accessed_slots, m.available_slots)
        for _, _, value, mname, seed, m in results
    ]


def aggregate(rows) -> list:
    """Mean and 95% CI per (sweep value, method, metric), in first-seen order.

    NaN samples (episodes with no delivered slot) are dropped; fewer than two
    remaining samples give NaN statistics.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.experiment, r.sweep_param, r.sweep_value, r.method), []).append(r)
    out = []
    for (exp, param, value, method), rs in groups.items():
        for metric in METRICS:
            xs = [getattr(r, metric) for r in rs]
            xs = [x for x in xs if not math.isnan(x)]
            if len(xs) >= 2:
                mean, hw = aggregate_ci(xs)
            else:
                mean, hw = (xs[0], math.nan) if xs else (math.nan, math.nan)
            out.append(Aggregate(exp, param, value, method, metric, len(xs), mean, hw))
    return out


def summary_table(aggs, metric: str) -> dict:
    """``{method: [(sweep_value, mean, half_width), ...]}`` for one metric."""
    table = {}
    for a in aggs:
        if a.metric == metric:
            table.setdefault(a.method, []).append((a.sweep_value, a.mean, a.half_width))
    return table


# -- output --------------------------------------------------------------------


def emit_csv(rows, path) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join([
            r.experiment, r.sweep_param, fmt(r.sweep_value), r.method, fmt(r.seed),
            fmt(r.avg_distortion), fmt(r.spectrum_utilization), fmt(r.collision_rate),
            fmt(r.accessed_slots), fmt(r.available_slots),
        ]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_summary_csv(aggs, path) -> None:
    aggs = list(aggs)
    if not aggs:
        raise ValueError("no aggregates to write")
    lines = [SUMMARY_HEADER]
    for a in aggs:
        lines.append(",".join([a.experiment, a.sweep_param, fmt(a.sweep_value), a.method, a.metric,
                               str(a.n), fmt(a.mean), fmt(a.half_width)]))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def emit_chart(aggs, path, metric: str = "avg_distortion") -> None:
    """Mean line with CI error bars per method, written as SVG."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    table = summary_table(aggs, metric)
    if not table:
        raise ValueError(f"no aggregates for {metric}")
    param = next(a.sweep_param for a in aggs)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method, pts in table.items():
        xs = [p[0] if p[0] is not None else 0.0 for p in pts]
        ys = [p[1] for p in pts]
        es = [0.0 if math.isnan(p[2]) else p[2] for p in pts]
        ax.errorbar(xs, ys, yerr=es, marker="o", capsize=3, label=method)
    ax.set_xlabel(param or "run")
    ax.set_ylabel(metric.replace("_", " "))
    ax.grid(True, alpha=0.3, linestyle="--")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_outputs(cfg: ExperimentConfig, rows, out_dir, charts: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    aggs = aggregate(rows)
    paths = {"raw": out / f"{cfg.name}_raw.csv", "summary": out / f"{cfg.name}_summary.csv"}
    emit_csv(rows, paths["raw"])
    emit_summary_csv(aggs, paths["summary"])
    if charts:
        for metric in METRICS:
            p = out / f"{cfg.name}_{metric}.svg"
            emit_chart(aggs, p, metric)
            paths[metric] = p
    return paths
