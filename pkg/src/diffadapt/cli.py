"""Command-line runner.

    diffadapt run --preset fig5 --runs 5 --seed 1 --out results/
    diffadapt run --config my.cfg --parallel-runs 4
    diffadapt presets
"""

import argparse
import json
import logging
import os
import sys

from .config import PRESETS, ConfigError, ExperimentConfig, load_config, preset
from .experiment import run_experiment, write_outputs

OUT_ENV = "DIFFADAPT_OUT"

log = logging.getLogger("diffadapt")


def build_parser():
    p = argparse.ArgumentParser(prog="diffadapt", description="Diffusion adaptive filtering simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write traces")
    src = run.add_mutually_exclusive_group()
    src.add_argument("--preset", choices=sorted(PRESETS))
    src.add_argument("--config", help="INI config file (may itself name a preset)")
    run.add_argument("--runs", type=int)
    run.add_argument("--paper-scale", action="store_true", help="use the run count of the original figures")
    run.add_argument("--slots", type=int)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./results)")
    run.add_argument("--parallel-runs", type=int, default=1, metavar="K")
    run.add_argument("--algorithms", help="comma-separated algorithm names")
    run.add_argument("--dictionary-size", type=int)
    run.add_argument("--eta", type=float)
    run.add_argument("-q", "--quiet", action="store_true")

    sub.add_parser("presets", help="list presets")
    return p


def resolve_config(args):
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = preset(args.preset)
    else:
        cfg = ExperimentConfig()
    runs = args.runs
    if args.paper_scale and runs is None:
        runs = cfg.paper_runs
    algorithms = tuple(a.strip() for a in args.algorithms.split(",") if a.strip()) if args.algorithms else None
    cfg = cfg.replace(
        runs=runs,
        slots=args.slots,
        master_seed=args.seed,
        algorithms=algorithms,
        dictionary_sizes=(args.dictionary_size,) if args.dictionary_size is not None else None,
        eta=args.eta,
    )
    if args.slots is not None and cfg.steady_window > cfg.slots:
        window = max(1, cfg.slots // 10)
        log.info("steady_window %d exceeds --slots %d; using the last %d slots", cfg.steady_window, cfg.slots, window)
        cfg = cfg.replace(steady_window=window)
    return cfg.validate()


def _run(args):
    cfg = resolve_config(args)
    if args.parallel_runs < 1:
        raise ConfigError("--parallel-runs must be >= 1")
    out = args.out or os.environ.get(OUT_ENV) or "results"
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write-test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"--out: cannot write to {out}: {exc}") from None
    log.info("running %s: %s, %d runs x %d slots", cfg.name, ", ".join(cfg.algorithms), cfg.runs, cfg.slots)
    result = run_experiment(cfg, parallel_runs=args.parallel_runs)
    write_outputs(result, out)
    for row in result.summary():
        line = f"{row['algorithm']:<20s} steady-state MSE {row['steady_state_mse_db']:8.3f} dB"
        if "steady_state_accuracy" in row:
            line += f"  accuracy {row['steady_state_accuracy']:.4f}"
        print(line)
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
                        format="%(levelname)s %(message)s")
    if args.command == "presets":
        for name, cfg in PRESETS.items():
            print(json.dumps({"preset": name, "algorithms": list(cfg.algorithms), "runs": cfg.runs,
                              "paper_runs": cfg.paper_runs, "slots": cfg.slots}))
        return 0
    try:
        return _run(args)
    except (ConfigError, ValueError) as exc:
        print(f"diffadapt: error: {exc}", file=sys.stderr)
        return 2
    except FloatingPointError as exc:
        print(f"diffadapt: numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
