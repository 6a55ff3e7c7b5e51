import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nashseek.exceptions import AssumptionViolation, InputError
from nashseek.graph import (
    CommGraph,
    SwitchingSchedule,
    algebraic_connectivity,
    augmented_m_matrix,
    connected_graphs,
    graph_at,
    lambda_min_m,
    laplacian,
    min_lambda_over_schedule,
    two_graph_schedule,
)


@st.composite
def random_graphs(draw, max_n=8):
    n = draw(st.integers(2, max_n))
    pairs = list(itertools.combinations(range(n), 2))
    bits = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return CommGraph.from_edges(n, [p for p, b in zip(pairs, bits) if b], one_based=False)


def test_path_laplacian():
    np.testing.assert_array_equal(laplacian(CommGraph.path(3)), [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def test_edgeless_laplacian():
    np.testing.assert_array_equal(laplacian(CommGraph(np.zeros((2, 2)))), np.zeros((2, 2)))


def test_complete_laplacian():
    np.testing.assert_array_equal(laplacian(CommGraph.complete(3)), 3 * np.eye(3) - np.ones((3, 3)))


@given(random_graphs())
@settings(max_examples=80, deadline=None)
def test_laplacian_properties(g):
    L = laplacian(g)
    np.testing.assert_array_equal(L, L.T)
    np.testing.assert_allclose(L.sum(axis=1), 0.0)
    assert np.linalg.eigvalsh(L)[0] >= -1e-12


def test_algebraic_connectivity_examples():
    assert algebraic_connectivity(CommGraph.path(3)) == pytest.approx(1.0, abs=1e-9)
    assert algebraic_connectivity(CommGraph.complete(5)) == pytest.approx(5.0, abs=1e-9)
    two_plus_two = CommGraph.from_edges(4, [(1, 2), (3, 4)])
    assert algebraic_connectivity(two_plus_two) <= 1e-9
    assert not two_plus_two.is_connected


def test_m_matrix_single_edge():
    M = augmented_m_matrix(CommGraph.from_edges(2, [(1, 2)]))
    expected = [[1, 0, -1, 0], [0, 2, 0, -1], [-1, 0, 2, 0], [0, -1, 0, 1]]
    np.testing.assert_array_equal(M, expected)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_m_positive_definite_on_connected_library(n):
    graphs = connected_graphs(n)
    # Known counts of connected labeled graphs.
    assert len(graphs) == {3: 4, 4: 38, 5: 728}[n]
    assert min(lambda_min_m(g) for g in graphs) > 0


@given(random_graphs(max_n=6))
@settings(max_examples=60, deadline=None)
def test_m_matrix_symmetric_and_square_identity(g):
    M = augmented_m_matrix(g)
    np.testing.assert_array_equal(M, M.T)
    lam = np.linalg.eigvalsh(M)[0]
    assert abs(np.linalg.eigvalsh(M @ M)[0] - lam * lam) <= 1e-9 * max(1.0, lam * lam)


def test_graph_validation():
    with pytest.raises(InputError):
        CommGraph(np.array([[0, 1], [0, 0]]))
    with pytest.raises(InputError):
        CommGraph(np.array([[1, 0], [0, 0]]))
    with pytest.raises(InputError):
        CommGraph(np.array([[0, 2], [2, 0]]))
    with pytest.raises(InputError):
        CommGraph.from_edges(3, [(1, 4)])


def test_edges_are_one_based():
    assert CommGraph.cycle(4).edges == [(1, 2), (1, 4), (2, 3), (3, 4)]


def test_schedule_lookup():
    s = two_graph_schedule()
    a, b = s.graphs
    assert graph_at(s, 0.2) == a
    assert graph_at(s, 3.0) == b
    assert graph_at(s, 6.0) == a
    assert graph_at(s, 9.0) == b
    assert graph_at(s, 1e6) == b
    # Right-continuous at the switches.
    assert graph_at(s, 0.5) == b
    assert graph_at(s, 5.0) == a
    assert graph_at(s, np.nextafter(5.0, 0.0)) == b
    assert s.switch_times() == [0.5, 5.0, 8.0]
    assert all(g.is_connected for g in s.graphs)


@given(st.floats(0, 100))
def test_single_graph_schedule_constant(t):
    g = CommGraph.cycle(4)
    assert graph_at(SwitchingSchedule.constant(g), t) == g


@given(st.floats(0, 20))
def test_schedule_piecewise_constant(t):
    s = two_graph_schedule()
    k = max(i for i, b in enumerate(s.breakpoints) if b <= t)
    assert graph_at(s, t) == s.graphs[s.indices[k]]


def test_schedule_errors():
    g = CommGraph.cycle(3)
    with pytest.raises(InputError):
        graph_at(SwitchingSchedule.constant(g), -0.1)
    with pytest.raises(InputError):
        SwitchingSchedule((g,), (0.0, 0.2), (0, 0), min_dwell=0.5)
    with pytest.raises(InputError):
        SwitchingSchedule((g,), (0.0, 1.0, 1.0), (0, 0, 0), min_dwell=0.5)
    with pytest.raises(InputError):
        SwitchingSchedule((g,), (0.1,), (0,), min_dwell=0.5)
    with pytest.raises(InputError):
        SwitchingSchedule((g,), (0.0,), (1,), min_dwell=0.5)
    disconnected = CommGraph.from_edges(3, [(1, 2)])
    with pytest.raises(AssumptionViolation):
        SwitchingSchedule((g, disconnected), (0.0, 1.0), (0, 1), min_dwell=0.5)


def test_min_lambda_over_schedule():
    ring = CommGraph.cycle(5)
    lam = np.linalg.eigvalsh(np.kron(laplacian(ring), np.eye(5)) + np.diag(ring.adjacency.ravel()))[0]
    assert min_lambda_over_schedule(SwitchingSchedule.constant(ring)) == pytest.approx(lam, abs=1e-12)
    twin = SwitchingSchedule((ring, ring), (0.0, 1.0), (0, 1), min_dwell=1.0)
    assert min_lambda_over_schedule(twin) == pytest.approx(lam, abs=1e-12)
    s = two_graph_schedule()
    assert min_lambda_over_schedule(s) == pytest.approx(min(lambda_min_m(g) for g in s.graphs))
    loose = SwitchingSchedule((ring, CommGraph.from_edges(5, [(1, 2)])), (0.0, 1.0), (0, 1), 1.0, require_connected=False)
    with pytest.raises(AssumptionViolation):
        min_lambda_over_schedule(loose)
