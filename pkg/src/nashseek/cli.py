"""Command line entry point: ``nashseek {simulate,nash,sweep,validate}``.

Exit codes: 0 the command ran (convergence is reported in the artifacts,
not here), 2 config or assumption error, 3 divergence or oracle failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import build_game, build_graph, build_schedule, load, resolve_path
from .diagnostics import theory_bounds
from .dynamics import Strategy
from .exceptions import AssumptionViolation, ConfigError, InputError, OracleFailure
from .game import GAMES, pseudo_gradient, solve_nash, validate_assumptions
from .graph import algebraic_connectivity, lambda_min_m
from .output import write_json, write_plots, write_trace_csv
from .runner import simulate, sweep

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = load(args.config)
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    res = simulate(cfg, seed=args.seed)
    prefix = cfg.output.prefix
    trace_path = out_dir / f"{prefix}_trace.csv"
    write_trace_csv(trace_path, res.trace)
    report = {
        "status": res.status,
        "message": res.message,
        "seed": res.seed,
        "strategy": res.problem.kind.value,
        "x_star": res.x_star.tolist(),
        "verdict": res.verdict.to_dict(),
    }
    write_json(out_dir / f"{prefix}_verdict.json", report)
    if cfg.output.plots and len(res.trace) > 0:
        write_plots(out_dir, prefix, res.trace, res.x_star)
    print(f"{res.status}: t_final={res.verdict.t_final:g} all_passed={res.verdict.all_passed} -> {out_dir}")
    if res.status != "completed":
        print(res.message, file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_nash(args: argparse.Namespace) -> int:
    if resolve_path(args.config) is None and args.config in GAMES:
        game = GAMES.get(args.config)
    else:
        game = build_game(load(args.config).game)
    x0 = np.full(game.size, args.x0) if args.x0 is not None else None
    try:
        x = solve_nash(game, x0=x0, tol=args.tol, max_iter=args.max_iter)
    except OracleFailure as exc:
        print(f"oracle failed: {exc}", file=sys.stderr)
        print("best iterate: " + " ".join(f"{v:.12g}" for v in exc.best))
        return EXIT_RUNTIME
    residual = float(np.linalg.norm(pseudo_gradient(game, x)))
    d = game.action_dim
    for i in range(game.n_players):
        print(f"x_{i + 1} = " + " ".join(f"{v:.12g}" for v in x[i * d:(i + 1) * d]))
    print(f"residual ||P(x*)|| = {residual:.3e}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load(args.config)
    report = sweep(cfg, workers=args.workers)
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / f"{cfg.output.prefix}_sweep.json", report)
    with open(out_dir / f"{cfg.output.prefix}_sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["params", "seed", "status", "converged", "err_nash", "err_consensus", "max_gain"])
        for r in report["rows"]:
            w.writerow([r["params"], r["seed"], r["status"], r["converged"], r["err_nash"], r["err_consensus"], r["max_gain"]])
    for agg in report["aggregate"]:
        print(f"{agg['params'] or '-'}: {agg['converged']}/{agg['runs']} converged, max gain {agg['max_gain']:.4g}")
    if not report["rows"]:
        print("no runs (empty seed list)")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    cfg = load(args.config)
    game = build_game(cfg.game)
    report = validate_assumptions(game, (args.low, args.high), args.samples, args.seed)
    out: dict = {"assumptions": report.to_dict(), "graphs": {}}
    ok = report.strongly_monotone
    graphs = {}
    if cfg.kind is Strategy.EDGE_SWITCHING and cfg.schedule is not None:
        sched = build_schedule(cfg.schedule, game.n_players)
        graphs = dict(zip(sched.names, sched.graphs))
        target = sched
    elif cfg.graph is not None:
        target = build_graph(cfg.graph, game.n_players)
        graphs = {"graph": target}
    else:
        target = None
    for name, g in graphs.items():
        lam2 = algebraic_connectivity(g)
        out["graphs"][name] = {
            "edges": g.edges,
            "algebraic_connectivity": lam2,
            "connected": g.is_connected,
            "lambda_min_M": lambda_min_m(g),
        }
        ok = ok and g.is_connected
    if target is not None and ok:
        out["theory_bounds"] = theory_bounds(report, target).to_dict()
    out["ok"] = ok
    if args.output:
        write_json(Path(args.output), out)
    print(json.dumps(out, indent=2))
    return EXIT_OK if ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nashseek", description="Distributed Nash equilibrium seeking simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one trajectory and write trace, verdict and plots")
    p.add_argument("config", help="config file or bundled config name")
    p.add_argument("--seed", type=int, default=None, help="override init.seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("nash", help="print the oracle Nash equilibrium")
    p.add_argument("config", help="config file, bundled config name or game registry name")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--x0", type=float, default=None, help="constant starting point")
    p.set_defaults(func=cmd_nash)

    p = sub.add_parser("sweep", help="run a seed range / parameter grid")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="graph connectivity and sampled assumption checks")
    p.add_argument("config")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--low", type=float, default=-20.0)
    p.add_argument("--high", type=float, default=20.0)
    p.add_argument("--output", default=None, help="also write the report to this JSON file")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AssumptionViolation, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
