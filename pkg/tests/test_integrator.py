import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from nashseek.dynamics import SeekingProblem, StrategyConfig
from nashseek.exceptions import DivergenceError, InputError, StiffnessError
from nashseek.game import example_game_connectivity
from nashseek.graph import CommGraph, SwitchingSchedule, two_graph_schedule
from nashseek.integrator import IntegratorConfig, StopCriterion, integrate, integrate_until

import oracles


def decay(t, z):
    return -z


def rk4_error(h):
    cfg = IntegratorConfig(step=h, t_end=1.0, record_every=h)
    return abs(integrate(decay, np.array([1.0]), cfg).final_state[0] - math.exp(-1.0))


def test_rk4_decay_value():
    trace = integrate(decay, np.array([1.0]), IntegratorConfig(step=0.1, t_end=1.0, record_every=0.1))
    assert trace.final_state[0] == pytest.approx(math.exp(-1.0), abs=1e-6)
    # Same numbers as an independent scalar RK4.
    assert trace.final_state[0] == pytest.approx(oracles.rk4_scalar(lambda t, y: -y, 1.0, 1.0, 10), abs=1e-15)


@pytest.mark.parametrize("h", [0.2, 0.1, 0.05])
def test_rk4_order(h):
    assert 12.0 <= rk4_error(h) / rk4_error(h / 2) <= 20.0


def test_trace_shape_and_times():
    trace = integrate(decay, np.array([1.0, 2.0]), IntegratorConfig(step=0.01, t_end=1.05, record_every=0.1))
    assert trace.times[0] == 0.0 and trace.times[-1] == 1.05
    assert np.all(np.diff(trace.times) > 0)
    assert len(trace) == 12
    assert trace.states.shape == (12, 2)


@pytest.mark.parametrize("method", ["rk4", "rk45"])
def test_zero_rhs_is_constant(method):
    s0 = np.array([1.5, -2.0, 3.25])
    trace = integrate(lambda t, z: np.zeros_like(z), s0, IntegratorConfig(method=method, t_end=2.0, record_every=0.25))
    assert np.all(trace.states == s0)


@pytest.mark.parametrize("method", ["rk4", "rk45"])
def test_deterministic(method):
    game = example_game_connectivity()
    p = SeekingProblem(game, StrategyConfig("edge_switching"), schedule=two_graph_schedule())
    cfg = IntegratorConfig(method=method, t_end=1.0, abs_tol=1e-8, rel_tol=1e-8)
    a = integrate(p.rhs, p.initial_state(3), cfg, p.schedule)
    b = integrate(p.rhs, p.initial_state(3), cfg, p.schedule)
    assert a.states.tobytes() == b.states.tobytes()
    assert a.step_times.tobytes() == b.step_times.tobytes()


@pytest.mark.parametrize("method", ["rk4", "rk45"])
def test_nan_raises_divergence(method):
    def bad(t, z):
        return np.full_like(z, np.nan) if t > 0.3 else -z

    with pytest.raises(DivergenceError) as info:
        integrate(bad, np.array([1.0]), IntegratorConfig(method=method, t_end=1.0, record_every=0.1))
    exc = info.value
    assert np.all(np.isfinite(exc.last_state))
    assert np.all(np.isfinite(exc.trace.states))
    assert exc.trace.times[-1] <= 0.4


@pytest.mark.parametrize("method", ["rk4", "rk45"])
def test_breakpoint_alignment(method):
    sched = SwitchingSchedule(
        (CommGraph.cycle(3), CommGraph.path(3)), (0.0, 0.123, 0.777, 1.5), (0, 1, 0, 1), min_dwell=0.1
    )
    seen = []

    def rhs(t, z):
        seen.append(t)
        return -z

    cfg = IntegratorConfig(method=method, step=0.05, t_end=1.2, record_every=0.1, abs_tol=1e-6, rel_tol=1e-6)
    trace = integrate(rhs, np.ones(2), cfg, sched)
    for b in (0.123, 0.777):
        assert b in set(trace.step_times.tolist())
    assert 1.5 not in set(trace.step_times.tolist())
    # The right-hand side never sees the instant of a switch before the step that starts there.
    steps = trace.step_times
    for b in (0.123, 0.777):
        k = int(np.where(steps == b)[0][0])
        assert steps[k - 1] < b < steps[k + 1]


def test_rhs_is_not_sampled_across_switch():
    # A discontinuous RHS integrates exactly when steps land on the switch.
    sched = SwitchingSchedule((CommGraph.cycle(3), CommGraph.path(3)), (0.0, 0.3), (0, 1), min_dwell=0.1)

    def rhs(t, z):
        return np.array([1.0 if t < 0.3 else -1.0])

    for method in ("rk4", "rk45"):
        trace = integrate(rhs, np.zeros(1), IntegratorConfig(method=method, step=0.07, t_end=1.0, record_every=0.1), sched)
        assert trace.final_state[0] == pytest.approx(0.3 - 0.7, abs=1e-12)


def test_rk45_matches_reference_solver():
    A = np.array([[-1.0, 2.0, 0.0], [-2.0, -1.0, 0.0], [0.0, 0.0, -0.5]])
    z0 = np.array([1.0, 0.0, 2.0])
    cfg = IntegratorConfig(method="rk45", t_end=3.0, abs_tol=1e-11, rel_tol=1e-11, record_every=0.5)
    trace = integrate(lambda t, z: A @ z, z0, cfg)
    ref = solve_ivp(lambda t, z: A @ z, (0, 3), z0, method="DOP853", rtol=1e-13, atol=1e-13, t_eval=trace.times)
    np.testing.assert_allclose(trace.states, ref.y.T, atol=1e-9)


def test_adaptive_matches_fixed_on_example_game():
    game = example_game_connectivity()
    p = SeekingProblem(game, StrategyConfig("node_adaptive"), graph=CommGraph.cycle(5))
    z0 = p.initial_state(0)
    a = integrate(p.rhs, z0, IntegratorConfig(method="rk45", t_end=1.0))
    f = integrate(p.rhs, z0, IntegratorConfig(method="rk4", step=1e-4, t_end=1.0))
    assert np.max(np.abs(a.final_state - f.final_state)) <= 1e-5


def test_stiffness_error():
    # z' = z^2 blows up at t = 1; the step collapses before the state overflows.
    cfg = IntegratorConfig(method="rk45", t_end=2.0, min_step=1e-4, record_every=0.5)
    with pytest.raises(StiffnessError) as info:
        integrate(lambda t, z: z * z, np.array([1.0]), cfg)
    assert info.value.t < 1.0
    assert info.value.trace is not None


def test_until_already_converged():
    stop = StopCriterion(1e-6, 1e-6, 10.0, lambda z: (0.0, 0.0))
    trace = integrate_until(decay, np.array([1.0]), IntegratorConfig(), stop)
    assert trace.converged is True
    assert len(trace) == 1 and trace.times[0] == 0.0


def test_until_zero_horizon():
    stop = StopCriterion(1e-6, 1e-6, 0.0, lambda z: (1.0, 1.0))
    trace = integrate_until(decay, np.array([1.0]), IntegratorConfig(), stop)
    assert trace.converged is False
    assert len(trace) == 1


def test_until_stops_at_first_sample():
    stop = StopCriterion(0.5, 1.0, 10.0, lambda z: (abs(z[0]), 0.0))
    trace = integrate_until(decay, np.array([1.0]), IntegratorConfig(record_every=0.01), stop)
    assert trace.converged is True
    assert trace.times[-1] == pytest.approx(0.7, abs=1e-9)  # first sample with e^-t <= 0.5
    assert abs(trace.final_state[0]) <= 0.5 < abs(trace.states[-2][0])


def test_until_converges_on_node_adaptive_run():
    game = example_game_connectivity()
    p = SeekingProblem(game, StrategyConfig("node_adaptive"), graph=CommGraph.cycle(5))
    stop = StopCriterion(1e-5, 1e-4, 50.0, p.measure)
    trace = integrate_until(p.rhs, p.initial_state(1), IntegratorConfig(method="rk45", abs_tol=1e-9, rel_tol=1e-9), stop)
    assert trace.converged is True and trace.times[-1] < 50.0


def test_keep_steps():
    trace = integrate(decay, np.array([1.0]), IntegratorConfig(step=0.1, t_end=0.5, record_every=0.1, keep_steps=True))
    assert trace.full_states.shape == (len(trace.step_times) - 1, 1)


def test_config_validation():
    with pytest.raises(InputError):
        IntegratorConfig(method="euler")
    with pytest.raises(InputError):
        IntegratorConfig(step=0.0)
    with pytest.raises(InputError):
        IntegratorConfig(step=0.1, record_every=0.01)
    with pytest.raises(InputError):
        IntegratorConfig(abs_tol=0.0)
    with pytest.raises(InputError):
        integrate(decay, np.array([np.inf]), IntegratorConfig())
