#!/usr/bin/env python3
"""Run every figure preset and write raw CSV, summary CSV and SVG charts.

    python3 scripts/reproduce_figures.py --out results --seeds 50
    python3 scripts/reproduce_figures.py fig3 fig8 --seeds 10
"""

import argparse
import logging
import time

from crqos.config import preset, preset_names
from crqos.experiments import aggregate, needs_policy, run_experiment, solve_config, summary_table, write_outputs

log = logging.getLogger("reproduce")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("presets", nargs="*", help="subset of presets (default: all)")
    ap.add_argument("--out", default="results")
    ap.add_argument("--seeds", type=int, default=None, help="override the preset seed count")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    for name in args.presets or preset_names():
        cfg = preset(name)
        if args.seeds:
            cfg.seeds = args.seeds
        t0 = time.perf_counter()
        sols = solve_config(cfg) if needs_policy(cfg) else None
        rows = run_experiment(cfg, sols, workers=args.workers)
        write_outputs(cfg, rows, args.out)
        metric = "spectrum_utilization" if cfg.n_channels > 1 else "avg_distortion"
        log.info("%s (%.1fs) %s", name, time.perf_counter() - t0, metric)
        for method, pts in summary_table(aggregate(rows), metric).items():
            log.info("  %-28s %s", method, " ".join(f"{m:.4f}" for _, m, _ in pts))


if __name__ == "__main__":
    main()
