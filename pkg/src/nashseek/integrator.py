"""Deterministic explicit Runge-Kutta integration with scheduled switch times.

Step boundaries always include every sample time and every schedule
breakpoint, so a step never straddles a switch. Stage times that fall on
the right end of the current switching interval are evaluated just inside
it; the right-hand side therefore only ever sees the interval's own graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numpy.typing import NDArray

from .dynamics import SeekerState, Strategy
from .exceptions import DivergenceError, InputError, StiffnessError
from .graph import SwitchingSchedule

RHS = Callable[[float, NDArray[np.float64]], NDArray[np.float64]]
Monitor = Callable[[float, NDArray[np.float64]], Mapping[str, float]]

FIXED_RK4 = "rk4"
ADAPTIVE_RK45 = "rk45"

# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_DP_E = _DP_B - _DP_B4


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = FIXED_RK4
    step: float = 1e-3
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    t_end: float = 10.0
    record_every: float = 1e-2
    min_step: float = 1e-12
    keep_steps: bool = False

    def __post_init__(self) -> None:
        if self.method not in (FIXED_RK4, ADAPTIVE_RK45):
            raise InputError(f"unknown integration method {self.method!r}")
        if not self.step > 0:
            raise InputError("step must be positive")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise InputError("tolerances must be positive")
        if not self.t_end >= 0:
            raise InputError("t_end must be non-negative")
        if not self.record_every > 0:
            raise InputError("record_every must be positive")
        if self.method == FIXED_RK4 and self.record_every < self.step * (1 - 1e-12):
            raise InputError("record_every must be >= step for rk4")


@dataclass
class StopCriterion:
    """Stop at the first sample with ``||P(x)|| <= grad_tol`` and consensus error <= ``consensus_tol``.

    ``measure(z)`` returns those two norms for a flat state.
    """

    grad_tol: float
    consensus_tol: float
    t_max: float
    measure: Callable[[NDArray[np.float64]], tuple[float, float]]


@dataclass
class SimulationTrace:
    """Sampled trajectory.

    ``states[k]`` is the flat state at ``times[k]``; ``diagnostics`` maps a
    name to one value per sample. ``step_times`` holds every internal step
    boundary (``t=0`` included). ``full_states`` is filled only with
    ``keep_steps``.
    """

    times: NDArray[np.float64]
    states: NDArray[np.float64]
    diagnostics: dict[str, NDArray[np.float64]] = field(default_factory=dict)
    step_times: NDArray[np.float64] = field(default_factory=lambda: np.empty(0))
    converged: bool | None = None
    layout: tuple[Strategy, int, int] | None = None
    full_states: NDArray[np.float64] | None = None

    def __len__(self) -> int:
        return len(self.times)

    @property
    def final_state(self) -> NDArray[np.float64]:
        return self.states[-1]

    def state(self, k: int) -> SeekerState:
        if self.layout is None:
            raise InputError("trace has no state layout")
        kind, n, d = self.layout
        return SeekerState.unflatten(self.states[k], kind, n, d)

    def block(self, name: str) -> NDArray[np.float64]:
        """Per-sample slice of one state block: ``x``, ``y`` or ``gains``."""
        if self.layout is None:
            raise InputError("trace has no state layout")
        _, n, d = self.layout
        nx, ny = n * d, n * n * d
        if name == "x":
            return self.states[:, :nx]
        if name == "y":
            return self.states[:, nx:nx + ny]
        if name == "gains":
            return self.states[:, nx + ny:]
        raise InputError(f"unknown block {name!r}")


class _Engine:
    def __init__(self, rhs: RHS, cfg: IntegratorConfig, breakpoints: list[float]) -> None:
        self.rhs = rhs
        self.cfg = cfg
        self.breakpoints = breakpoints
        self.h = cfg.step
        self.step_times: list[float] = [0.0]
        self.full: list[NDArray[np.float64]] | None = [] if cfg.keep_steps else None
        self.seg_end = math.inf

    def f(self, t: float, z: NDArray[np.float64]) -> NDArray[np.float64]:
        if t >= self.seg_end:
            t = math.nextafter(self.seg_end, -math.inf)
        return self.rhs(t, z)

    def _set_segment(self, t: float) -> None:
        self.seg_end = math.inf
        for b in self.breakpoints:
            if b > t:
                self.seg_end = b
                break

    def _commit(self, t: float, z: NDArray[np.float64]) -> None:
        self.step_times.append(t)
        if self.full is not None:
            self.full.append(z.copy())

    def advance(self, t: float, z: NDArray[np.float64], b: float):
        """Integrate from ``t`` to exactly ``b``. Returns ``(b, z)``."""
        self._set_segment(t)
        # Overflow is reported as DivergenceError, not as a numpy warning.
        with np.errstate(over="ignore", invalid="ignore"):
            if self.cfg.method == FIXED_RK4:
                return self._rk4(t, z, b)
            return self._dopri(t, z, b)

    def _rk4(self, t: float, z, b: float):
        span = b - t
        nsteps = max(1, math.ceil(span / self.cfg.step - 1e-9))
        h = span / nsteps
        f = self.f
        for k in range(nsteps):
            k1 = f(t, z)
            k2 = f(t + 0.5 * h, z + 0.5 * h * k1)
            k3 = f(t + 0.5 * h, z + 0.5 * h * k2)
            k4 = f(t + h, z + h * k3)
            zn = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            tn = b if k == nsteps - 1 else t + h
            if not np.all(np.isfinite(zn)):
                raise DivergenceError(f"non-finite state at t={tn:g}", last_state=z, t=t)
            t, z = tn, zn
            self._commit(t, z)
        return t, z

    def _dopri(self, t: float, z, b: float):
        cfg = self.cfg
        f = self.f
        k = [None] * 7
        k[0] = f(t, z)
        while t < b:
            h = min(self.h, b - t)
            landing = h >= b - t
            if h < cfg.min_step and not landing:
                raise StiffnessError(f"step size {h:.3e} fell below min_step at t={t:g}", t=t)
            for s in range(1, 7):
                dz = sum(a * k[j] for j, a in enumerate(_DP_A[s]) if a != 0.0)
                k[s] = f(t + _DP_C[s] * h, z + h * dz)
            zn = z + h * sum(bj * kj for bj, kj in zip(_DP_B, k) if bj != 0.0)
            if not np.all(np.isfinite(zn)):
                raise DivergenceError(f"non-finite state near t={t + h:g}", last_state=z, t=t)
            err_vec = h * sum(ej * kj for ej, kj in zip(_DP_E, k))
            scale = cfg.abs_tol + cfg.rel_tol * max(np.max(np.abs(z)), np.max(np.abs(zn)))
            err = float(np.max(np.abs(err_vec))) / scale
            if err <= 1.0:
                t = b if landing else t + h
                z = zn
                self._commit(t, z)
                # FSAL: last stage is the derivative at the new point, unless
                # the new point opens a new switching interval.
                if t >= self.seg_end:
                    self._set_segment(t)
                    k[0] = f(t, z)
                else:
                    k[0] = k[6]
                factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                if not landing or factor < 1.0:
                    self.h = h * factor
            else:
                self.h = h * max(0.2, 0.9 * err ** -0.2)
                if self.h < cfg.min_step:
                    raise StiffnessError(f"step size {self.h:.3e} fell below min_step at t={t:g}", t=t)
        return t, z


def _targets(t_end: float, record_every: float, breakpoints: list[float]) -> list[tuple[float, bool]]:
    """Sorted step targets in (0, t_end], flagged True when a sample is recorded there."""
    out: dict[float, bool] = {}
    n = int(math.floor(t_end / record_every + 1e-9))
    for k in range(1, n + 1):
        out[min(k * record_every, t_end)] = True
    out[t_end] = True
    for b in breakpoints:
        if 0.0 < b <= t_end:
            out.setdefault(b, False)
    times = sorted(out)
    merged: list[tuple[float, bool]] = []
    for t in times:
        if merged and t - merged[-1][0] <= 1e-12 * max(1.0, t):
            # Prefer the exact breakpoint value; keep the record flag.
            prev_t, prev_rec = merged[-1]
            keep = t if t in breakpoints else prev_t
            merged[-1] = (keep, prev_rec or out[t])
        else:
            merged.append((t, out[t]))
    return [(t, r) for t, r in merged if t > 0.0]


def _run(
    rhs: RHS,
    s0: NDArray[np.float64],
    cfg: IntegratorConfig,
    t_end: float,
    sched: SwitchingSchedule | None,
    monitor: Monitor | None,
    layout,
    stop: Callable[[NDArray[np.float64]], bool] | None,
) -> SimulationTrace:
    z = np.array(s0, dtype=np.float64)
    if z.ndim != 1:
        raise InputError("initial state must be a flat vector")
    if not np.all(np.isfinite(z)):
        raise InputError("initial state must be finite")
    breakpoints = [b for b in sched.breakpoints if b > 0.0] if sched is not None else []
    engine = _Engine(rhs, cfg, breakpoints)
    times = [0.0]
    states = [z.copy()]
    diags: dict[str, list[float]] = {}

    def observe(t: float, state: NDArray[np.float64]) -> None:
        if monitor is not None:
            for key, val in monitor(t, state).items():
                diags.setdefault(key, []).append(float(val))

    def build(converged: bool | None) -> SimulationTrace:
        return SimulationTrace(
            times=np.array(times),
            states=np.array(states),
            diagnostics={k: np.array(v) for k, v in diags.items()},
            step_times=np.array(engine.step_times),
            converged=converged,
            layout=layout,
            full_states=np.array(engine.full) if engine.full is not None else None,
        )

    observe(0.0, z)
    if stop is not None and stop(z):
        return build(True)
    t = 0.0
    for target, record in _targets(t_end, cfg.record_every, breakpoints):
        try:
            t, z = engine.advance(t, z, target)
        except (DivergenceError, StiffnessError) as exc:
            exc.trace = build(False if stop is not None else None)
            raise
        if record:
            times.append(t)
            states.append(z.copy())
            observe(t, z)
            if stop is not None and stop(z):
                return build(True)
    return build(False if stop is not None else None)


def integrate(
    rhs: RHS,
    s0: NDArray[np.float64],
    cfg: IntegratorConfig,
    sched: SwitchingSchedule | None = None,
    monitor: Monitor | None = None,
    layout: tuple[Strategy, int, int] | None = None,
) -> SimulationTrace:
    """Integrate ``z' = rhs(t, z)`` on ``[0, cfg.t_end]``.

    Samples are taken every ``cfg.record_every`` and at ``t_end``. Pass the
    switching schedule as ``sched`` so its breakpoints become step
    boundaries.

    Raises:
        DivergenceError: a step produced a non-finite state; ``exc.trace``
            holds the samples recorded so far.
        StiffnessError: the adaptive step fell below ``cfg.min_step``.
    """
    return _run(rhs, s0, cfg, cfg.t_end, sched, monitor, layout, stop=None)


def integrate_until(
    rhs: RHS,
    s0: NDArray[np.float64],
    cfg: IntegratorConfig,
    stop: StopCriterion,
    sched: SwitchingSchedule | None = None,
    monitor: Monitor | None = None,
    layout: tuple[Strategy, int, int] | None = None,
) -> SimulationTrace:
    """Like :func:`integrate` but ends at the first sample meeting ``stop``.

    Runs at most to ``stop.t_max`` (``cfg.t_end`` is ignored). The trace's
    ``converged`` flag tells which way it ended.
    """
    if not stop.t_max >= 0:
        raise InputError("t_max must be non-negative")

    def met(z: NDArray[np.float64]) -> bool:
        g, c = stop.measure(z)
        return g <= stop.grad_tol and c <= stop.consensus_tol

    return _run(rhs, s0, cfg, stop.t_max, sched, monitor, layout, stop=met)
