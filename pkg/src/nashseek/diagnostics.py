"""Lyapunov functions, theory gain bounds and convergence verdicts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .dynamics import SeekerState, SeekingProblem, consensus_error
from .exceptions import AssumptionViolation, InputError
from .game import AssumptionReport
from .graph import (
    CommGraph,
    SwitchingSchedule,
    augmented_m_matrix,
    laplacian,
    min_lambda_over_schedule,
)
from .integrator import SimulationTrace


@dataclass(frozen=True)
class TheoryBounds:
    """Sufficient gain levels from the stability proofs.

    ``max_l`` and ``m`` usually come from sampling, so every bound here is an
    estimate unless the caller supplied exact constants (``estimated`` says
    which). For a schedule, the spectral fields are worst cases over its
    graphs.
    """

    n_players: int
    max_l: float
    m: float
    lambda_min_M: float
    lambda_min_MM: float
    norm_M: float
    lbar1: float
    lbar2: float
    theta_star_bound: float
    c_star_bound: float
    c_star_switch_bound: float
    estimated: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def _spectral(g: CommGraph) -> tuple[float, float, float]:
    M = augmented_m_matrix(g)
    eig = np.linalg.eigvalsh(M)
    lam_mm = float(np.linalg.eigvalsh(M @ M)[0])
    lam = float(eig[0])
    if abs(lam_mm - lam * lam) > 1e-9 * max(1.0, lam * lam):
        raise ArithmeticError(f"lambda_min(MM)={lam_mm!r} disagrees with lambda_min(M)^2={lam * lam!r}")
    return lam, lam_mm, float(np.max(np.abs(eig)))


def theory_bounds(
    report: AssumptionReport,
    g_or_sched: CommGraph | SwitchingSchedule,
    m: float | None = None,
    max_l: float | None = None,
) -> TheoryBounds:
    """Evaluate the node, edge and switching gain bounds.

    ``m`` and ``max_l`` override the sampled values in ``report``.

    Raises:
        AssumptionViolation: ``m <= 0`` or a disconnected graph.
    """
    estimated = m is None or max_l is None
    m = report.monotonicity_modulus if m is None else float(m)
    max_l = report.max_lipschitz if max_l is None else float(max_l)
    if not m > 0:
        raise AssumptionViolation(f"pseudo-gradient is not strongly monotone (m = {m:g})")
    if isinstance(g_or_sched, SwitchingSchedule):
        graphs = g_or_sched.graphs
        lam_bar = min_lambda_over_schedule(g_or_sched)
    else:
        graphs = (g_or_sched,)
        if not g_or_sched.is_connected:
            raise AssumptionViolation("communication graph is disconnected")
        lam_bar = None
    n = graphs[0].n
    if len(report.lipschitz_estimate) != n:
        raise InputError(f"report covers {len(report.lipschitz_estimate)} players, graph has {n} vertices")
    spectra = [_spectral(g) for g in graphs]
    lam = min(s[0] for s in spectra)
    lam_mm = min(s[1] for s in spectra)
    norm_m = max(s[2] for s in spectra)
    if lam_bar is None:
        lam_bar = lam

    lbar1 = 2.0 * norm_m * math.sqrt(n) * max_l
    lbar2 = 2.0 * norm_m * n * max_l
    theta_star = ((lbar2 + max_l) ** 2 + 4.0 * m * lbar1) / (8.0 * m * lam_mm)

    def c_bound(lmb: float) -> float:
        return (max_l * (1.0 + math.sqrt(n))) ** 2 / (4.0 * m * lmb) + max_l / lmb

    return TheoryBounds(
        n_players=n,
        max_l=max_l,
        m=m,
        lambda_min_M=lam,
        lambda_min_MM=lam_mm,
        norm_M=norm_m,
        lbar1=lbar1,
        lbar2=lbar2,
        theta_star_bound=theta_star,
        c_star_bound=c_bound(lam),
        c_star_switch_bound=c_bound(lam_bar),
        estimated=estimated,
    )


def _x_star(s: SeekerState, x_star: ArrayLike) -> NDArray[np.float64]:
    xs = np.asarray(x_star, dtype=np.float64)
    if xs.size != s.x.size:
        raise InputError(f"x_star has {xs.size} entries, state has {s.x.size}")
    return xs.reshape(s.x.shape)


def lyapunov_node(
    g: CommGraph,
    s: SeekerState,
    x_star: ArrayLike,
    theta_star: float | ArrayLike,
    gamma: float | ArrayLike = 1.0,
) -> float:
    """``e'Me + 1/2 |x - x*|^2 + sum_ij (theta_ij - theta*_ij)^2 / gamma_ij``.

    ``M`` acts on each action coordinate separately when ``d > 1``.
    """
    n = g.n
    if s.theta is None or s.theta.shape != (n, n) or s.n != n:
        raise InputError("state does not match the graph or lacks theta gains")
    xs = _x_star(s, x_star)
    e, _ = consensus_error(s)
    d = s.d
    Le = (laplacian(g) @ e.reshape(n, n * d)).reshape(n, n, d)
    Me = Le + g.adjacency[:, :, None] * e
    v1 = float(np.sum(e * Me))
    v2 = 0.5 * float(np.sum((s.x - xs) ** 2))
    ts = np.broadcast_to(np.asarray(theta_star, dtype=np.float64), (n, n))
    gm = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (n, n))
    v3 = float(np.sum((s.theta - ts) ** 2 / gm))
    return v1 + v2 + v3


def lyapunov_edge(s: SeekerState, x_star: ArrayLike, c_star: float) -> float:
    """Action, estimate and off-diagonal edge-gain energies.

    ``1/2 |x - x*|^2 + 1/2 |e|^2 + sum_{i != j} (c_ij - c*)^2 / 4
    + sum_{i != j} (cbar_ij - c*)^2 / 2``
    """
    if s.c is None or s.cbar is None:
        raise InputError("state lacks edge gains")
    xs = _x_star(s, x_star)
    _, e_norm = consensus_error(s)
    off = ~np.eye(s.n, dtype=bool)
    v1 = 0.5 * float(np.sum((s.x - xs) ** 2))
    v2 = 0.5 * e_norm**2
    v3 = float(np.sum((s.c[off] - c_star) ** 2)) / 4.0
    v4 = float(np.sum((s.cbar[off] - c_star) ** 2)) / 2.0
    return v1 + v2 + v3 + v4


def trace_monitor(problem: SeekingProblem, x_star: ArrayLike, lyapunov=None):
    """Per-sample diagnostics for :func:`~nashseek.integrator.integrate`.

    Records ``err_consensus``, ``err_nash`` (``|x - x*|``), ``gain_min`` and
    ``gain_max``; ``lyapunov(state) -> float`` adds a ``lyapunov`` column.
    """
    xs = np.asarray(x_star, dtype=np.float64).ravel()

    def monitor(t: float, z: NDArray[np.float64]) -> dict[str, float]:
        s = problem.unpack(z)
        _, cons = consensus_error(s)
        g = s.gains()
        out = {
            "err_consensus": cons,
            "err_nash": float(np.linalg.norm(s.x.ravel() - xs)),
            "gain_min": float(g.min()) if g.size else 0.0,
            "gain_max": float(g.max()) if g.size else 0.0,
        }
        if lyapunov is not None:
            out["lyapunov"] = float(lyapunov(s))
        return out

    return monitor


@dataclass(frozen=True)
class Check:
    passed: bool
    value: float
    threshold: float


@dataclass(frozen=True)
class ConvergenceVerdict:
    """Trajectory-wise evidence, not a stability proof.

    ``gains_settled`` is a heuristic: the spread of every gain over the last
    tenth of the samples.
    """

    nash: Check
    consensus: Check
    gains_monotone: Check
    gains_settled: Check
    t_final: float
    samples: int

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in (self.nash, self.consensus, self.gains_monotone, self.gains_settled))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["all_passed"] = self.all_passed
        out["gains_settled"]["heuristic"] = True
        return out


def last_decile(n_samples: int) -> int:
    """Number of trailing samples forming the last decile (at least one)."""
    return max(1, math.ceil(0.1 * n_samples))


def verdict(
    trace: SimulationTrace,
    x_star: ArrayLike,
    tol: float = 1e-3,
    gain_tol: float | None = None,
    monotone_tol: float = 1e-9,
) -> ConvergenceVerdict:
    """Judge a trace against x*, estimate consensus and gain behaviour.

    ``monotone_tol`` is a relative allowance for round-off in the gain
    increments; ``gain_tol`` defaults to ``tol``.
    """
    if len(trace) == 0:
        raise InputError("trace is empty")
    gain_tol = tol if gain_tol is None else gain_tol
    final = trace.state(len(trace) - 1)
    xs = _x_star(final, x_star)
    err_nash = float(np.linalg.norm(final.x - xs))
    _, err_cons = consensus_error(final)

    gains = trace.block("gains")
    if gains.shape[1] and len(trace) > 1:
        steps = np.diff(gains, axis=0)
        allowance = monotone_tol * np.maximum(1.0, np.abs(gains[:-1]))
        worst_drop = float(np.max(np.maximum(-steps - allowance, 0.0)))
        monotone = bool(np.all(steps >= -allowance))
        tail = gains[-last_decile(len(trace)):]
        spread = float(np.max(tail.max(axis=0) - tail.min(axis=0)))
    else:
        worst_drop, monotone, spread = 0.0, True, 0.0

    return ConvergenceVerdict(
        nash=Check(err_nash <= tol, err_nash, tol),
        consensus=Check(err_cons <= tol, err_cons, tol),
        gains_monotone=Check(monotone, worst_drop, monotone_tol),
        gains_settled=Check(spread <= gain_tol, spread, gain_tol),
        t_final=float(trace.times[-1]),
        samples=len(trace),
    )
