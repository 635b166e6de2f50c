"""Command-line entry point: ``dpdopt {run,experiment,tune,verify,bounds}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, load_config
from .engine import ScheduleParams, disagreement, mean_estimate, run
from .errors import ConfigError, DPDOptError
from .experiment import emit_csv, emit_plot_script, rounds_for, run_experiment, write_manifest
from .problem import global_optimum
from .reports import bounds_report, tune_report, verify_report

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--trials", type=int, help="trials per privacy level")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")

    ap = argparse.ArgumentParser(
        prog="dpdopt", description="Multi-agent optimization with Laplace-noised broadcasts.",
        epilog="exit codes: 0 success, 1 a verification check failed, 2 usage or configuration error")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate one execution and export its trace")
    sub.add_parser("experiment", parents=[common], help="accuracy-versus-privacy sweep")
    sub.add_parser("tune", parents=[common], help="tune (c, q, p) per privacy level")
    sub.add_parser("verify", parents=[common], help="privacy budget, sensitivity and ratio checks")
    b = sub.add_parser("bounds", parents=[common], help="evaluate accuracy and consensus bounds")
    for name, what in (("epsilon", "privacy level"), ("c", "initial step size"),
                       ("q", "step-size decay"), ("p", "noise decay")):
        b.add_argument(f"--{name}", type=float, help=f"{what} (overrides [params])")
    return ap


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return cfg.with_overrides(seed=args.seed, trials=args.trials, output=args.out)


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_run(cfg, say):
    problem = cfg.build_problem()
    params = cfg.base_params()
    T = rounds_for(cfg, problem, params)
    trace = run(problem, params, T, cfg.seed, x0=cfg.initial_state(problem))
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    trace.observations_to_csv(out / "observations.csv")
    x_star = global_optimum(problem).x_star
    xbar = mean_estimate(trace, T)
    say(f"rounds={T} final disagreement={disagreement(trace, T):.6g}")
    say(f"mean estimate={xbar.tolist()} optimum={x_star.tolist()}")
    say(f"wrote {out / 'trace.csv'} and {out / 'observations.csv'}")
    return EXIT_OK


def cmd_experiment(cfg, say):
    def progress(r):
        say(f"epsilon={r.epsilon:g} T={r.rounds} mean_d={r.mean:.6g} "
            f"bound={r.theoretical_d:.6g} (c={r.params.c:.4g}, q={r.params.q:.4g}, p={r.params.p:.4g})")

    result = run_experiment(cfg, progress)
    out = Path(cfg.output)
    files = list(emit_csv(result, out))
    files.append(emit_plot_script(result, out / "plot_summary.py"))
    write_manifest(cfg, files, out)
    say(f"wrote results to {out}")
    return EXIT_OK


def cmd_tune(cfg, say):
    rows = tune_report(cfg)
    header = list(rows[0])
    for r in rows:
        say(f"epsilon={r['epsilon']:g}: c={r['c']:.6g} q={r['q']:.6g} p={r['p']:.6g} "
            f"d={r['d']:.6g} [init {r['term_init']:.4g}, step {r['term_step']:.4g}, "
            f"noise {r['term_noise']:.4g}] grid gaps c={r['c_grid_gap']:.2e} "
            f"q={r['q_grid_gap']:.2e} p-root={r['p_root_gap']:.1e}")
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "tune.csv", header, [[r[h] for h in header] for r in rows])
    return EXIT_OK


def cmd_verify(cfg, say):
    rep = verify_report(cfg)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "budget.csv", ["round", "ratio", "partial_sum", "lagged_partial_sum"],
                rep.budget_rows)
    _write_rows(out / "sensitivity.csv", ["pair", "round", "max_measured", "bound"],
                rep.sensitivity_rows)
    for c in rep.checks:
        print(c.line())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_bounds(cfg, say, args):
    kw = cfg.base_params().as_dict()
    for name in ("epsilon", "c", "q", "p"):
        if getattr(args, name) is not None:
            kw[name] = getattr(args, name)
    params = ScheduleParams(**kw)
    rep = bounds_report(cfg, params)
    text = json.dumps(rep, indent=2, sort_keys=True)
    print(text)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "bounds.json").write_text(text + "\n")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    say = (lambda *_: None) if args.quiet else print
    try:
        cfg = _load(args)
        if args.command == "run":
            return cmd_run(cfg, say)
        if args.command == "experiment":
            return cmd_experiment(cfg, say)
        if args.command == "tune":
            return cmd_tune(cfg, say)
        if args.command == "verify":
            return cmd_verify(cfg, say)
        return cmd_bounds(cfg, say, args)
    except (ConfigError, DPDOptError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
