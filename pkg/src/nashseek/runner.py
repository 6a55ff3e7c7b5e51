"""Run orchestration shared by the CLI and the acceptance tests."""

from __future__ import annotations

import copy
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .config import (
    RunConfig,
    build_game,
    build_graph,
    build_integrator,
    build_schedule,
    build_strategy,
    from_dict,
)
from .diagnostics import ConvergenceVerdict, trace_monitor, verdict
from .dynamics import SeekingProblem, Strategy
from .exceptions import ConfigError, DivergenceError, StiffnessError
from .game import solve_nash
from .integrator import SimulationTrace, StopCriterion, integrate, integrate_until


def build_problem(cfg: RunConfig) -> SeekingProblem:
    game = build_game(cfg.game)
    strategy = build_strategy(cfg.strategy)
    n = game.n_players
    if strategy.kind is Strategy.EDGE_SWITCHING:
        return SeekingProblem(game, strategy, schedule=build_schedule(cfg.schedule, n))
    if cfg.graph is None:
        raise ConfigError(f"strategy {strategy.kind.value} needs a 'graph' section")
    return SeekingProblem(game, strategy, graph=build_graph(cfg.graph, n))


@dataclass
class RunResult:
    problem: SeekingProblem
    x_star: NDArray[np.float64]
    trace: SimulationTrace
    verdict: ConvergenceVerdict
    seed: int
    status: str = "completed"
    message: str = ""


def simulate(cfg: RunConfig, seed: int | None = None, x_star: NDArray[np.float64] | None = None) -> RunResult:
    """Integrate one seeded trajectory and judge it.

    Divergence and stiffness failures are returned as a result with
    ``status`` set and the partial trace, not raised.
    """
    problem = build_problem(cfg)
    seed = cfg.init.seed if seed is None else seed
    if x_star is None:
        x_star = solve_nash(problem.game, tol=1e-12)
    z0 = problem.initial_state(seed, cfg.init.low, cfg.init.high, cfg.init.gains)
    problem.check_initial(z0)
    icfg = build_integrator(cfg.integrator)
    layout = (problem.kind, problem.n, problem.d)
    monitor = trace_monitor(problem, x_star)
    status, message = "completed", ""
    try:
        if cfg.stop is not None:
            stop = StopCriterion(cfg.stop.grad_tol, cfg.stop.consensus_tol, cfg.stop.t_max, problem.measure)
            trace = integrate_until(problem.rhs, z0, icfg, stop, problem.schedule, monitor, layout)
        else:
            trace = integrate(problem.rhs, z0, icfg, problem.schedule, monitor, layout)
    except (DivergenceError, StiffnessError) as exc:
        trace = exc.trace
        status = "diverged" if isinstance(exc, DivergenceError) else "stiff"
        message = str(exc)
    v = verdict(trace, x_star, cfg.verdict.tol, cfg.verdict.gain_tol)
    return RunResult(problem, x_star, trace, v, seed, status, message)


def _with_overrides(cfg_dict: dict, overrides: dict[str, Any]) -> dict:
    out = copy.deepcopy(cfg_dict)
    if isinstance(out.get("strategy"), str):
        out["strategy"] = {"kind": out["strategy"]}
    for key, value in overrides.items():
        section, _, name = key.partition(".")
        out.setdefault(section, {})[name] = value
    return out


def grid_points(grid: dict[str, list]) -> list[dict[str, Any]]:
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _sweep_task(args: tuple[dict, dict, int]) -> dict:
    cfg_dict, overrides, seed = args
    cfg = from_dict(_with_overrides(cfg_dict, overrides))
    res = simulate(cfg, seed=seed)
    gains = res.trace.block("gains")
    return {
        "params": overrides,
        "seed": seed,
        "status": res.status,
        "converged": bool(res.verdict.all_passed and res.status == "completed"),
        "err_nash": res.verdict.nash.value,
        "err_consensus": res.verdict.consensus.value,
        "max_gain": float(gains[-1].max()) if gains.shape[1] else 0.0,
        "t_final": res.verdict.t_final,
    }


def sweep(cfg: RunConfig, workers: int | None = None) -> dict:
    """Run every (grid point, seed) pair and aggregate per grid point.

    Rows come back in (grid point, seed) order whatever the worker count.
    """
    spec = cfg.sweep
    seeds = list(spec.seeds) if spec is not None else [cfg.init.seed]
    points = grid_points(spec.grid) if spec is not None and spec.grid else [{}]
    workers = workers or (spec.workers if spec is not None else 1)
    base = cfg.to_dict()
    base.pop("sweep", None)
    tasks = [(base, p, s) for p in points for s in seeds]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(t) for t in tasks]
    aggregate = []
    if seeds:
        for p in points:
            mine = [r for r in rows if r["params"] == p]
            aggregate.append(
                {
                    "params": p,
                    "runs": len(mine),
                    "converged": sum(r["converged"] for r in mine),
                    "max_err_nash": max(r["err_nash"] for r in mine),
                    "max_err_consensus": max(r["err_consensus"] for r in mine),
                    "max_gain": max(r["max_gain"] for r in mine),
                }
            )
    return {"rows": rows, "aggregate": aggregate}
