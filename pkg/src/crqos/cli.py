"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 missing or incompatible
policy artifact, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from crqos.belief_pomdp import GridTooLargeError, ImpossibleObservationError, PolicyArtifactError
from crqos.config import (
    ConfigError,
    config_from_dict,
    dump_config,
    load_config,
    preset,
    preset_description,
    preset_names,
)
from crqos.experiments import (
    load_policies,
    needs_policy,
    run_experiment,
    save_policies,
    solve_config,
    write_outputs,
)
from crqos.markov_channel import ReducibleChainError
from crqos.rd_model import SingularDistortionError

EXIT_OK, EXIT_CONFIG, EXIT_ARTIFACT, EXIT_NUMERIC = 0, 1, 2, 3


def _load(args):
    if args.preset and args.config:
        raise ConfigError("give either --config or --preset, not both")
    if args.preset:
        cfg = preset(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    else:
        cfg = config_from_dict({})
    if getattr(args, "seeds", None) is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        cfg.seeds = args.seeds
    return cfg


def cmd_solve(args):
    cfg = _load(args)
    out = Path(args.out or f"{cfg.name}.policy.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    save_policies(solve_config(cfg), out)
    print(f"wrote {out}")


def _run(cfg, solutions, args, charts):
    rows = run_experiment(cfg, solutions, workers=args.workers)
    paths = write_outputs(cfg, rows, args.out or "results", charts=charts)
    for p in paths.values():
        print(f"wrote {p}")


def cmd_run(args):
    cfg = _load(args)
    solutions = None
    if needs_policy(cfg):
        if not args.policy:
            raise PolicyArtifactError("pomdp_channel is among the methods; pass --policy (see `crqos solve`)")
        solutions = load_policies(args.policy)
    _run(cfg, solutions, args, charts=args.charts)


def cmd_sweep(args):
    cfg = _load(args)
    solutions = solve_config(cfg) if needs_policy(cfg) else None
    _run(cfg, solutions, args, charts=True)


def cmd_preset_list(args):
    for name in preset_names():
        print(f"{name:6s} {preset_description(name)}")


def cmd_dump(args):
    cfg = _load(args)
    text = dump_config(cfg, args.out)
    if not args.out:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crqos", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def source(sp):
        sp.add_argument("--config", help="YAML experiment configuration")
        sp.add_argument("--preset", help="named preset, see preset-list")

    sp = sub.add_parser("solve", help="solve and store POMDP channel-selection policies")
    source(sp)
    sp.add_argument("--out", help="policy artifact path (.npz)")
    sp.set_defaults(func=cmd_solve)

    for name, func, help_ in (("run", cmd_run, "run episodes with stored policies, write CSV"),
                              ("sweep", cmd_sweep, "solve in-process, run, write CSV and charts")):
        sp = sub.add_parser(name, help=help_)
        source(sp)
        sp.add_argument("--seeds", type=int, help="override the number of seeds")
        sp.add_argument("--out", help="output directory (default: results)")
        sp.add_argument("--workers", type=int, default=1, help="parallel episode workers")
        if name == "run":
            sp.add_argument("--policy", help="policy artifact written by `solve`")
            sp.add_argument("--charts", action="store_true", help="also write SVG charts")
        sp.set_defaults(func=func)

    sp = sub.add_parser("preset-list", help="list experiment presets")
    sp.set_defaults(func=cmd_preset_list)

    sp = sub.add_parser("dump-config", help="print a preset or config file as YAML")
    source(sp)
    sp.add_argument("--out", help="write to this file instead of stdout")
    sp.set_defaults(func=cmd_dump)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error ({exc.kind}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PolicyArtifactError as exc:
        print(f"policy artifact error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (ImpossibleObservationError, SingularDistortionError, ReducibleChainError,
            GridTooLargeError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
