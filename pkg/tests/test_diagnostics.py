import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nashseek.diagnostics import last_decile, lyapunov_edge, lyapunov_node, theory_bounds, verdict
from nashseek.dynamics import SeekerState, SeekingProblem, StrategyConfig, rhs_edge_adaptive, rhs_node_adaptive
from nashseek.exceptions import AssumptionViolation, InputError
from nashseek.game import AssumptionReport, example_game_connectivity, solve_nash, validate_assumptions
from nashseek.graph import CommGraph, SwitchingSchedule, augmented_m_matrix, two_graph_schedule
from nashseek.integrator import IntegratorConfig, StopCriterion, integrate, integrate_until

import oracles

GAME = example_game_connectivity()
RING = CommGraph.cycle(5)
X_STAR = solve_nash(GAME, tol=1e-12).reshape(5, 2)
EDGE = CommGraph.from_edges(2, [(1, 2)])


def report(n, max_l=1.0, m=1.0):
    return AssumptionReport((max_l,) * n, m, samples_used=0, seed=0)


@pytest.fixture(scope="module")
def ring_bounds():
    return theory_bounds(validate_assumptions(GAME), RING)


def test_single_edge_bounds_closed_form():
    tb = theory_bounds(report(2), EDGE, m=1.0, max_l=1.0)
    lam = (3 - math.sqrt(5)) / 2
    big = (3 + math.sqrt(5)) / 2
    assert tb.lambda_min_M == pytest.approx(lam, rel=1e-12)
    assert tb.lambda_min_MM == pytest.approx((7 - 3 * math.sqrt(5)) / 2, rel=1e-9)
    assert tb.norm_M == pytest.approx(big, rel=1e-12)
    assert tb.lbar1 == pytest.approx(2 * big * math.sqrt(2))
    assert tb.lbar2 == pytest.approx(4 * big)
    theta = ((4 * big + 1) ** 2 + 4 * 2 * big * math.sqrt(2)) / (8 * lam * lam)
    c = (1 + math.sqrt(2)) ** 2 / (4 * lam) + 1 / lam
    assert tb.theta_star_bound == pytest.approx(theta, rel=1e-9)
    assert tb.c_star_bound == pytest.approx(c, rel=1e-12)
    assert tb.c_star_switch_bound == tb.c_star_bound
    assert tb.estimated is False
    # Cross-check against eigensolver spectra.
    eig = np.linalg.eigvalsh(augmented_m_matrix(EDGE))
    assert (tb.theta_star_bound, tb.c_star_bound) == pytest.approx(
        oracles.theory_bounds_closed_form(1.0, 1.0, eig[0], eig[-1], 2), rel=1e-9
    )


def test_ring_bounds(ring_bounds):
    assert ring_bounds.lambda_min_M == pytest.approx(0.32487, abs=1e-5)
    assert ring_bounds.estimated
    assert ring_bounds.c_star_bound == pytest.approx(409.87, rel=1e-3)


@given(st.floats(0.1, 50), st.floats(0.1, 50))
@settings(max_examples=40, deadline=None)
def test_bounds_monotone(max_l, m):
    base = theory_bounds(report(5), RING, m=m, max_l=max_l)
    up = theory_bounds(report(5), RING, m=m, max_l=2 * max_l)
    down = theory_bounds(report(5), RING, m=2 * m, max_l=max_l)
    for f in ("theta_star_bound", "c_star_bound", "c_star_switch_bound"):
        assert getattr(up, f) > getattr(base, f) > 0
        assert getattr(down, f) < getattr(base, f)


def test_switch_bound_uses_worst_graph():
    tb = theory_bounds(report(5), SwitchingSchedule.constant(RING), m=1, max_l=1)
    assert tb.c_star_switch_bound == pytest.approx(theory_bounds(report(5), RING, m=1, max_l=1).c_star_bound)
    s = two_graph_schedule()
    both = theory_bounds(report(5), s, m=1, max_l=1)
    each = [theory_bounds(report(5), g, m=1, max_l=1) for g in s.graphs]
    assert both.c_star_switch_bound == pytest.approx(max(e.c_star_bound for e in each))


def test_bounds_errors():
    with pytest.raises(AssumptionViolation):
        theory_bounds(report(5, m=-1.0), RING)
    with pytest.raises(AssumptionViolation):
        theory_bounds(report(4), CommGraph.from_edges(4, [(1, 2), (3, 4)]))
    with pytest.raises(InputError):
        theory_bounds(report(3), RING)


def equilibrium(theta=None, c=None, cbar=None):
    y = np.broadcast_to(X_STAR[None], (5, 5, 2)).copy()
    return SeekerState(X_STAR.copy(), y, theta=theta, c=c, cbar=cbar)


def test_lyapunov_zero_and_unit():
    ts = np.full((5, 5), 7.0)
    assert lyapunov_node(RING, equilibrium(theta=ts), X_STAR, 7.0) == 0.0
    s = equilibrium(theta=ts)
    s.x[2, 1] += 1.0
    s.y[:, 2, 1] += 1.0
    assert lyapunov_node(RING, s, X_STAR, 7.0) == pytest.approx(0.5)
    cs = np.full((5, 5), 3.0)
    assert lyapunov_edge(equilibrium(c=cs, cbar=cs.copy()), X_STAR, 3.0) == 0.0
    c = cs.copy()
    c[0, 1] = c[1, 0] = 5.0
    assert lyapunov_edge(equilibrium(c=c, cbar=cs.copy()), X_STAR, 3.0) == pytest.approx(2.0)
    # Diagonal gains never enter the edge function.
    c[2, 2] = 100.0
    assert lyapunov_edge(equilibrium(c=c, cbar=cs.copy()), X_STAR, 3.0) == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(20))
def test_lyapunov_matches_naive_sums(seed):
    r = np.random.default_rng(seed)
    x, y = r.uniform(-20, 20, (5, 2)), r.uniform(-20, 20, (5, 5, 2))
    theta, c, cbar = (r.uniform(0, 50, (5, 5)) for _ in range(3))
    gamma = 1.7
    v = lyapunov_node(RING, SeekerState(x, y, theta=theta), X_STAR, 12.0, gamma)
    ref = oracles.lyapunov_node(RING.adjacency, x, y, X_STAR, theta, 12.0, gamma)
    assert v == pytest.approx(ref, rel=1e-12)
    v = lyapunov_edge(SeekerState(x, y, c=c, cbar=cbar), X_STAR, 12.0)
    assert v == pytest.approx(oracles.lyapunov_edge(x, y, X_STAR, c, cbar, 12.0), rel=1e-12)


def test_lyapunov_dimension_errors():
    with pytest.raises(InputError):
        lyapunov_node(RING, equilibrium(c=np.ones((5, 5)), cbar=np.ones((5, 5))), X_STAR, 1.0)
    with pytest.raises(InputError):
        lyapunov_edge(equilibrium(theta=np.ones((5, 5))), X_STAR, 1.0)
    with pytest.raises(InputError):
        lyapunov_edge(equilibrium(c=np.ones((5, 5)), cbar=np.ones((5, 5))), np.zeros(4), 1.0)


def random_near_equilibrium(r, gain_hi):
    scale = 10 ** r.uniform(-3, 1.5)
    x = X_STAR + scale * r.standard_normal((5, 2))
    y = x[None] + scale * r.uniform() * r.standard_normal((5, 5, 2))
    return x, y, r.uniform(0, gain_hi, (5, 5))


def test_edge_lyapunov_derivative_nonpositive(ring_bounds):
    # Exact derivative of the quadratic V along the vector field.
    cs = 1.01 * ring_bounds.c_star_bound
    off = ~np.eye(5, dtype=bool)
    r = np.random.default_rng(11)
    for _ in range(300):
        x, y, c = random_near_equilibrium(r, 3 * cs)
        c = np.triu(c) + np.triu(c, 1).T
        s = SeekerState(x, y, c=c, cbar=r.uniform(0, 3 * cs, (5, 5)))
        d = rhs_edge_adaptive(GAME, RING, StrategyConfig("edge_adaptive"), s)
        e, de = s.y - s.x[None], d.y - d.x[None]
        vdot = (
            np.sum((s.x - X_STAR) * d.x)
            + np.sum(e * de)
            + np.sum(((s.c - cs) * d.c)[off]) / 2
            + np.sum(((s.cbar - cs) * d.cbar)[off])
        )
        assert vdot <= 1e-9 * max(1.0, abs(np.sum(e * de)))


def test_node_lyapunov_derivative_nonpositive(ring_bounds):
    ts = 1.01 * ring_bounds.theta_star_bound
    M = augmented_m_matrix(RING)
    r = np.random.default_rng(12)
    for _ in range(300):
        x, y, theta = random_near_equilibrium(r, 3 * ts)
        s = SeekerState(x, y, theta=theta)
        d = rhs_node_adaptive(GAME, RING, StrategyConfig("node_adaptive"), s)
        E = (s.y - s.x[None]).transpose(2, 0, 1).reshape(2, 25)
        dE = (d.y - d.x[None]).transpose(2, 0, 1).reshape(2, 25)
        quad = 2 * np.sum((E @ M) * dE)
        vdot = quad + np.sum((s.x - X_STAR) * d.x) + 2 * np.sum((s.theta - ts) * d.theta)
        assert vdot <= 1e-9 * max(1.0, abs(quad))


def test_lyapunov_descends_along_edge_trajectory(ring_bounds):
    cs = 1.01 * ring_bounds.c_star_bound
    p = SeekingProblem(GAME, StrategyConfig("edge_adaptive"), graph=RING)
    trace = integrate(p.rhs, p.initial_state(2), IntegratorConfig(t_end=3.0), layout=(p.kind, 5, 2))
    v = np.array([lyapunov_edge(trace.state(k), X_STAR, cs) for k in range(len(trace))])
    assert np.all(np.diff(v) <= 1e-6 * v[:-1])
    # Not vacuous: the non-gain part of V falls by orders of magnitude.
    gains_part = [lyapunov_edge(trace.state(k), X_STAR, cs) - lyapunov_edge(_strip(trace.state(k)), X_STAR, cs) for k in (0, -1)]
    assert gains_part[1] < 1e-3 * gains_part[0]


def _strip(s):
    # Same gains, but x at x* and estimates at consensus: leaves only the gain terms.
    return SeekerState(X_STAR.copy(), np.broadcast_to(X_STAR[None], s.y.shape).copy(), c=s.c, cbar=s.cbar)


def trace_for(kind, seed=0, t_max=40.0):
    p = SeekingProblem(GAME, StrategyConfig(kind), graph=RING)
    stop = StopCriterion(1e-5, 1e-4, t_max, p.measure)
    return integrate_until(p.rhs, p.initial_state(seed), IntegratorConfig(method="rk45", abs_tol=1e-9, rel_tol=1e-9), stop, layout=(p.kind, 5, 2))


def test_verdict_on_converged_run():
    v = verdict(trace_for("node_adaptive"), X_STAR, tol=1e-3)
    assert v.all_passed
    d = v.to_dict()
    assert d["all_passed"] and d["gains_settled"]["heuristic"]


def test_verdict_on_truncated_run():
    v = verdict(trace_for("edge_adaptive", t_max=0.2), X_STAR, tol=1e-3)
    assert not v.nash.passed and v.nash.value > 1e-3
    assert not v.consensus.passed and v.consensus.value > 1e-3
    assert v.gains_monotone.passed


def test_verdict_on_equilibrium_start():
    p = SeekingProblem(GAME, StrategyConfig("node_adaptive"), graph=RING)
    trace = integrate(p.rhs, p.equilibrium_state(X_STAR, 2.0), IntegratorConfig(t_end=1.0), layout=(p.kind, 5, 2))
    assert verdict(trace, X_STAR).all_passed


def test_verdict_flags_decreasing_gain():
    p = SeekingProblem(GAME, StrategyConfig("node_adaptive"), graph=RING)
    trace = integrate(p.rhs, p.equilibrium_state(X_STAR, 2.0), IntegratorConfig(t_end=0.1), layout=(p.kind, 5, 2))
    trace.states[-1, -1] -= 0.5
    v = verdict(trace, X_STAR)
    assert not v.gains_monotone.passed
    assert v.gains_monotone.value == pytest.approx(0.5, rel=1e-6)
    assert not v.gains_settled.passed


def test_verdict_empty_trace():
    p = SeekingProblem(GAME, StrategyConfig("node_adaptive"), graph=RING)
    trace = integrate(p.rhs, p.equilibrium_state(X_STAR), IntegratorConfig(t_end=0.0), layout=(p.kind, 5, 2))
    assert len(trace) == 1
    trace.times, trace.states = trace.times[:0], trace.states[:0]
    with pytest.raises(InputError):
        verdict(trace, X_STAR)


@pytest.mark.parametrize("n, k", [(1, 1), (9, 1), (10, 1), (11, 2), (101, 11)])
def test_last_decile(n, k):
    assert last_decile(n) == k
