"""Run-config parsing, validation and serialization.

A run config is one JSON document. See ``docs/config.md`` for the schema;
the short version::

    {
      "game": "connectivity5" | {"type": "quadratic", "n_players": 2, "action_dim": 1,
                                 "Q": [[...]], "b": [...]}
                              | {"type": "decoupled", "centers": [...]},
      "graph": {"edges": [[1, 2], [2, 3]]} | {"family": "ring"},
      "schedule": {"graphs": {"a": {...}, "b": {...}},
                   "switches": [{"t": 0.0, "graph": "a"}, {"t": 0.5, "graph": "b"}],
                   "min_dwell": 0.5},
      "strategy": "node_adaptive" | {"kind": "fixed", "theta": 5.0, "theta_bar": 1.0},
      "integrator": {"method": "rk4", "step": 0.001, "t_end": 20.0, "record_every": 0.01},
      "stop": {"grad_tol": 1e-5, "consensus_tol": 1e-4, "t_max": 100.0},
      "init": {"low": -20.0, "high": 20.0, "seed": 0, "gains": "uniform" | 1.0},
      "verdict": {"tol": 1e-3, "gain_tol": 1e-3},
      "output": {"dir": "out", "prefix": "run", "plots": true},
      "sweep": {"seeds": [0, 1, 2], "grid": {"strategy.gamma": [0.1, 1, 10]}, "workers": 1}
    }
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .dynamics import Strategy, StrategyConfig
from .exceptions import AssumptionViolation, ConfigError, InputError
from .game import GAMES, GameModel, QuadraticGame, decoupled_quadratic_game
from .graph import CommGraph, SwitchingSchedule
from .integrator import ADAPTIVE_RK45, FIXED_RK4, IntegratorConfig

OUTPUT_DIR_ENV = "NASHSEEK_OUTPUT_DIR"

_number = {"type": "number"}
_matrix = {"type": "array", "items": {"type": "array", "items": _number}}
_scalar_or_matrix = {"oneOf": [_number, _matrix]}
_edges = {
    "type": "array",
    "items": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
}
_graph = {
    "type": "object",
    "properties": {"edges": _edges, "family": {"enum": ["ring", "path", "complete"]}},
    "additionalProperties": False,
    "oneOf": [{"required": ["edges"]}, {"required": ["family"]}],
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["game"],
    "additionalProperties": False,
    "properties": {
        "game": {
            "oneOf": [
                {"type": "string"},
                {
                    "type": "object",
                    "required": ["type", "n_players", "Q", "b"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"const": "quadratic"},
                        "n_players": {"type": "integer", "minimum": 2},
                        "action_dim": {"type": "integer", "minimum": 1},
                        "Q": _matrix,
                        "b": {"type": "array", "items": _number},
                    },
                },
                {
                    "type": "object",
                    "required": ["type", "centers"],
                    "additionalProperties": False,
                    "properties": {
                        "type": {"const": "decoupled"},
                        "centers": {"type": "array", "items": _number, "minItems": 2},
                        "weight": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            ]
        },
        "graph": _graph,
        "schedule": {
            "type": "object",
            "required": ["graphs", "switches", "min_dwell"],
            "additionalProperties": False,
            "properties": {
                "graphs": {"type": "object", "minProperties": 1, "additionalProperties": _graph},
                "switches": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "required": ["t", "graph"],
                        "additionalProperties": False,
                        "properties": {"t": {"type": "number", "minimum": 0}, "graph": {"type": "string"}},
                    },
                },
                "min_dwell": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "strategy": {
            "oneOf": [
                {"enum": [s.value for s in Strategy]},
                {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": [s.value for s in Strategy]},
                        "theta": {"type": "number", "exclusiveMinimum": 0},
                        "theta_bar": _scalar_or_matrix,
                        "gamma": _scalar_or_matrix,
                        "cbar_uses_coupling_gain": {"type": "boolean"},
                    },
                },
            ]
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": [FIXED_RK4, ADAPTIVE_RK45]},
                "step": {"type": "number", "exclusiveMinimum": 0},
                "abs_tol": {"type": "number", "exclusiveMinimum": 0},
                "rel_tol": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "minimum": 0},
                "record_every": {"type": "number", "exclusiveMinimum": 0},
                "min_step": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "stop": {
            "type": "object",
            "required": ["t_max"],
            "additionalProperties": False,
            "properties": {
                "grad_tol": {"type": "number", "exclusiveMinimum": 0},
                "consensus_tol": {"type": "number", "exclusiveMinimum": 0},
                "t_max": {"type": "number", "minimum": 0},
            },
        },
        "init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "low": _number,
                "high": _number,
                "seed": {"type": "integer", "minimum": 0},
                "gains": {"oneOf": [{"const": "uniform"}, _number]},
            },
        },
        "verdict": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "gain_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "prefix": {"type": "string"},
                "plots": {"type": "boolean"},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seeds": {
                    "oneOf": [
                        {"type": "array", "items": {"type": "integer", "minimum": 0}},
                        {
                            "type": "object",
                            "required": ["start", "count"],
                            "additionalProperties": False,
                            "properties": {
                                "start": {"type": "integer", "minimum": 0},
                                "count": {"type": "integer", "minimum": 0},
                            },
                        },
                    ]
                },
                "grid": {"type": "object", "additionalProperties": {"type": "array", "minItems": 1}},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
    },
}


@dataclass
class StopSpec:
    t_max: float
    grad_tol: float = 1e-5
    consensus_tol: float = 1e-4


@dataclass
class InitSpec:
    low: float = -20.0
    high: float = 20.0
    seed: int = 0
    gains: float | str | None = None


@dataclass
class VerdictSpec:
    tol: float = 1e-3
    gain_tol: float = 1e-3


@dataclass
class OutputSpec:
    dir: str = "out"
    prefix: str = "run"
    plots: bool = True


@dataclass
class SweepSpec:
    seeds: list[int] = field(default_factory=list)
    grid: dict[str, list] = field(default_factory=dict)
    workers: int = 1


@dataclass
class RunConfig:
    """Parsed run config. ``game``, ``graph``, ``schedule`` and ``strategy``
    keep their JSON form; the build_* helpers turn them into objects."""

    game: Any
    graph: dict | None = None
    schedule: dict | None = None
    strategy: dict = field(default_factory=lambda: {"kind": Strategy.NODE_ADAPTIVE.value})
    integrator: dict = field(default_factory=dict)
    stop: StopSpec | None = None
    init: InitSpec = field(default_factory=InitSpec)
    verdict: VerdictSpec = field(default_factory=VerdictSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    sweep: SweepSpec | None = None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"game": copy.deepcopy(self.game)}
        for key in ("graph", "schedule"):
            val = getattr(self, key)
            if val is not None:
                out[key] = copy.deepcopy(val)
        out["strategy"] = copy.deepcopy(self.strategy)
        out["integrator"] = dict(self.integrator)
        if self.stop is not None:
            out["stop"] = asdict(self.stop)
        init = asdict(self.init)
        if init["gains"] is None:
            del init["gains"]
        out["init"] = init
        out["verdict"] = asdict(self.verdict)
        out["output"] = asdict(self.output)
        if self.sweep is not None:
            out["sweep"] = asdict(self.sweep)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @property
    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_DIR_ENV) or self.output.dir)

    @property
    def kind(self) -> Strategy:
        return Strategy(self.strategy["kind"])


def _locate(text: str | None, path) -> int | None:
    """Best-effort 1-based line of the JSON key at ``path``."""
    if not text:
        return None
    pos = 0
    found = None
    for key in path:
        if isinstance(key, int):
            continue
        idx = text.find(json.dumps(key), pos)
        if idx < 0:
            break
        pos = idx + 1
        found = idx
    if found is None:
        return None
    return text.count("\n", 0, found) + 1


def from_dict(data: dict, text: str | None = None) -> RunConfig:
    """Validate ``data`` against the schema and build a :class:`RunConfig`.

    ``text`` is the source document, used only to anchor error messages.
    """
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {err.message}", line=_locate(text, list(err.absolute_path)))
    data = copy.deepcopy(data)
    strategy = data.get("strategy", Strategy.NODE_ADAPTIVE.value)
    if isinstance(strategy, str):
        strategy = {"kind": strategy}

    def section(cls, key):
        return cls(**data[key]) if key in data else None

    cfg = RunConfig(
        game=data["game"],
        graph=data.get("graph"),
        schedule=data.get("schedule"),
        strategy=strategy,
        integrator=data.get("integrator", {}),
        stop=section(StopSpec, "stop"),
        init=section(InitSpec, "init") or InitSpec(),
        verdict=section(VerdictSpec, "verdict") or VerdictSpec(),
        output=section(OutputSpec, "output") or OutputSpec(),
        sweep=None,
    )
    if "sweep" in data:
        sw = data["sweep"]
        seeds = sw.get("seeds", [])
        if isinstance(seeds, dict):
            seeds = list(range(seeds["start"], seeds["start"] + seeds["count"]))
        cfg.sweep = SweepSpec(seeds=list(seeds), grid=dict(sw.get("grid", {})), workers=sw.get("workers", 1))
    check_semantics(cfg, text)
    return cfg


def loads(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", line=1)
    return from_dict(data, text)


def bundled_configs() -> list[str]:
    root = resources.files("nashseek") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def resolve_path(path: str | os.PathLike) -> Path | None:
    """A real file, or a bundled config name (with or without ``.cfg``)."""
    p = Path(path)
    if p.is_file():
        return p
    name = p.name if p.name.endswith(".cfg") else p.name + ".cfg"
    bundled = resources.files("nashseek") / "configs" / name
    if bundled.is_file():
        return Path(str(bundled))
    return None


def load(path: str | os.PathLike) -> RunConfig:
    p = resolve_path(path)
    if p is None:
        raise ConfigError(f"config file not found: {path}")
    return loads(p.read_text(encoding="utf-8"))


def build_game(spec: Any) -> GameModel:
    if isinstance(spec, str):
        return GAMES.get(spec)
    if spec["type"] == "decoupled":
        return decoupled_quadratic_game(spec["centers"], spec.get("weight", 1.0))
    return QuadraticGame(
        spec["Q"], spec["b"], n_players=spec["n_players"], action_dim=spec.get("action_dim", 1), name="quadratic"
    )


def build_graph(spec: dict, n: int) -> CommGraph:
    if "family" in spec:
        return {"ring": CommGraph.cycle, "path": CommGraph.path, "complete": CommGraph.complete}[spec["family"]](n)
    return CommGraph.from_edges(n, spec["edges"])


def build_schedule(spec: dict, n: int) -> SwitchingSchedule:
    names = list(spec["graphs"])
    graphs = [build_graph(spec["graphs"][k], n) for k in names]
    switches = spec["switches"]
    return SwitchingSchedule(
        graphs,
        [s["t"] for s in switches],
        [names.index(s["graph"]) for s in switches],
        min_dwell=spec["min_dwell"],
        names=names,
    )


def build_strategy(spec: dict) -> StrategyConfig:
    kw = dict(spec)
    kind = Strategy(kw.pop("kind"))
    if "gamma" in kw and not np.isscalar(kw["gamma"]):
        kw["gamma"] = np.asarray(kw["gamma"], dtype=float)
    if "theta_bar" in kw and not np.isscalar(kw["theta_bar"]):
        kw["theta_bar"] = np.asarray(kw["theta_bar"], dtype=float)
    return StrategyConfig(kind, **kw)


def build_integrator(spec: dict) -> IntegratorConfig:
    known = {f.name for f in fields(IntegratorConfig)}
    return IntegratorConfig(**{k: v for k, v in spec.items() if k in known})


def check_semantics(cfg: RunConfig, text: str | None = None) -> None:
    """Cross-field checks that JSON schema cannot express.

    Graph connectivity is checked here, before any computation.
    """

    def fail(msg: str, *path) -> None:
        raise ConfigError(msg, line=_locate(text, list(path)))

    if isinstance(cfg.game, str) and cfg.game not in GAMES:
        fail(f"unknown game {cfg.game!r}; known: {GAMES.names()}", "game")
    try:
        game = build_game(cfg.game)
    except InputError as exc:
        fail(f"game: {exc}", "game")
    n = game.n_players
    kind = cfg.kind
    if kind is Strategy.EDGE_SWITCHING:
        if cfg.schedule is None:
            fail("strategy edge_switching needs a 'schedule' section", "strategy")
        for k, sw in enumerate(cfg.schedule["switches"]):
            if sw["graph"] not in cfg.schedule["graphs"]:
                fail(f"switch {k} names unknown graph {sw['graph']!r}", "schedule", "switches")
        try:
            build_schedule(cfg.schedule, n)
        except AssumptionViolation as exc:
            fail(f"graph connectivity assumption violated: {exc}", "schedule")
        except InputError as exc:
            fail(f"schedule: {exc}", "schedule")
    elif cfg.graph is not None:
        try:
            g = build_graph(cfg.graph, n)
        except InputError as exc:
            fail(f"graph: {exc}", "graph")
        if not g.is_connected:
            fail(
                f"graph connectivity assumption violated: {kind.value} needs a connected "
                f"communication graph, edges {g.edges} leave it disconnected",
                "graph",
            )
    try:
        build_strategy(cfg.strategy)
    except InputError as exc:
        fail(f"strategy: {exc}", "strategy")
    try:
        build_integrator(cfg.integrator)
    except InputError as exc:
        fail(f"integrator: {exc}", "integrator")
    if not cfg.init.high > cfg.init.low:
        fail(f"init range [{cfg.init.low}, {cfg.init.high}] is empty", "init")
    if cfg.sweep is not None:
        for key in cfg.sweep.grid:
            section, _, name = key.partition(".")
            if section not in ("strategy", "integrator", "init", "verdict") or not name:
                fail(f"sweep grid key {key!r} must look like 'strategy.gamma'", "sweep", "grid")
