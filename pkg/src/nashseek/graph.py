"""Undirected communication graphs, switching schedules and spectral data."""

from __future__ import annotations

import bisect
import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .exceptions import AssumptionViolation, InputError

CONNECTIVITY_THRESHOLD = 1e-9


@dataclass(frozen=True, eq=False)
class CommGraph:
    """Unweighted undirected graph without self-loops.

    ``adjacency`` is an ``(n, n)`` symmetric 0/1 matrix with zero diagonal.
    """

    adjacency: NDArray[np.float64]

    def __post_init__(self) -> None:
        A = np.array(self.adjacency, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise InputError(f"adjacency must be a square matrix, got shape {A.shape}")
        if not np.all((A == 0.0) | (A == 1.0)):
            raise InputError("adjacency entries must be 0 or 1")
        if np.any(np.diag(A) != 0.0):
            raise InputError("self-loops are not allowed")
        if not np.array_equal(A, A.T):
            raise InputError("adjacency must be symmetric (undirected graph)")
        A.setflags(write=False)
        object.__setattr__(self, "adjacency", A)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]], one_based: bool = True) -> "CommGraph":
        A = np.zeros((n, n))
        shift = 1 if one_based else 0
        for edge in edges:
            if len(edge) != 2:
                raise InputError(f"edge must have two endpoints, got {edge!r}")
            i, j = int(edge[0]) - shift, int(edge[1]) - shift
            if not (0 <= i < n and 0 <= j < n):
                raise InputError(f"edge {tuple(edge)} out of range for {n} vertices")
            if i == j:
                raise InputError(f"self-loop {tuple(edge)} is not allowed")
            A[i, j] = A[j, i] = 1.0
        return cls(A)

    @classmethod
    def cycle(cls, n: int) -> "CommGraph":
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)], one_based=False)

    @classmethod
    def path(cls, n: int) -> "CommGraph":
        return cls.from_edges(n, [(i, i + 1) for i in range(n - 1)], one_based=False)

    @classmethod
    def complete(cls, n: int) -> "CommGraph":
        return cls(np.ones((n, n)) - np.eye(n))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        """1-based edge list with ``i < j``."""
        rows, cols = np.nonzero(np.triu(self.adjacency))
        return [(int(i) + 1, int(j) + 1) for i, j in zip(rows, cols)]

    @property
    def is_connected(self) -> bool:
        return algebraic_connectivity(self) > CONNECTIVITY_THRESHOLD

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CommGraph) and np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self) -> int:
        return hash(self.adjacency.tobytes())

    def __repr__(self) -> str:
        return f"CommGraph(n={self.n}, edges={self.edges})"


def laplacian(g: CommGraph) -> NDArray[np.float64]:
    A = g.adjacency
    return np.diag(A.sum(axis=1)) - A


def algebraic_connectivity(g: CommGraph) -> float:
    """Second-smallest Laplacian eigenvalue (0.0 for a single vertex)."""
    if g.n < 2:
        return 0.0
    return float(np.linalg.eigvalsh(laplacian(g))[1])


def augmented_m_matrix(g: CommGraph) -> NDArray[np.float64]:
    """``L kron I_n + diag(a_11, a_12, ..., a_nn)`` acting on pair-indexed vectors.

    Entry ``(i, j)`` of a pair-indexed vector sits at position ``i*n + j``.
    """
    n = g.n
    return np.kron(laplacian(g), np.eye(n)) + np.diag(g.adjacency.ravel())


def lambda_min_m(g: CommGraph) -> float:
    return float(np.linalg.eigvalsh(augmented_m_matrix(g))[0])


def connected_graphs(n: int) -> list[CommGraph]:
    """Every connected labeled graph on ``n`` vertices (exhaustive; keep n small)."""
    pairs = list(itertools.combinations(range(n), 2))
    out = []
    for mask in range(1 << len(pairs)):
        A = np.zeros((n, n))
        for bit, (i, j) in enumerate(pairs):
            if mask >> bit & 1:
                A[i, j] = A[j, i] = 1.0
        g = CommGraph(A)
        if g.is_connected:
            out.append(g)
    return out


@dataclass(frozen=True, eq=False)
class SwitchingSchedule:
    """Piecewise-constant graph selector with a minimum dwell time.

    Interval ``[breakpoints[k], breakpoints[k+1])`` uses
    ``graphs[indices[k]]``; the last graph persists after the final
    breakpoint. ``breakpoints[0]`` must be 0.
    """

    graphs: tuple[CommGraph, ...]
    breakpoints: tuple[float, ...]
    indices: tuple[int, ...]
    min_dwell: float
    names: tuple[str, ...] | None = None
    require_connected: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "graphs", tuple(self.graphs))
        object.__setattr__(self, "breakpoints", tuple(float(t) for t in self.breakpoints))
        object.__setattr__(self, "indices", tuple(int(k) for k in self.indices))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(self.names))
            if len(self.names) != len(self.graphs):
                raise InputError("need one name per graph")
        if not self.graphs:
            raise InputError("schedule needs at least one graph")
        if len({g.n for g in self.graphs}) != 1:
            raise InputError("all graphs in a schedule must have the same vertex count")
        if len(self.breakpoints) != len(self.indices) or not self.breakpoints:
            raise InputError("need one graph index per breakpoint")
        if self.breakpoints[0] != 0.0:
            raise InputError("first breakpoint must be t=0")
        if not self.min_dwell > 0:
            raise InputError("min_dwell must be positive")
        for k, (a, b) in enumerate(zip(self.breakpoints, self.breakpoints[1:])):
            if b <= a:
                raise InputError("breakpoints must be strictly increasing")
            if b - a < self.min_dwell * (1.0 - 1e-12):
                raise InputError(f"interval {k} lasts {b - a:g} < min_dwell {self.min_dwell:g}")
        for k in self.indices:
            if not 0 <= k < len(self.graphs):
                raise InputError(f"graph index {k} out of range")
        if self.require_connected:
            for k, g in enumerate(self.graphs):
                if not g.is_connected:
                    raise AssumptionViolation(f"graph {self._label(k)} in schedule is disconnected")

    @classmethod
    def constant(cls, g: CommGraph, min_dwell: float = 1.0) -> "SwitchingSchedule":
        return cls((g,), (0.0,), (0,), min_dwell)

    def _label(self, k: int) -> str:
        return repr(self.names[k]) if self.names else str(k)

    @property
    def n(self) -> int:
        return self.graphs[0].n

    def switch_times(self, t_end: float | None = None) -> list[float]:
        """Breakpoints after t=0 where the graph actually changes."""
        out = []
        for k in range(1, len(self.breakpoints)):
            if self.graphs[self.indices[k]] != self.graphs[self.indices[k - 1]]:
                t = self.breakpoints[k]
                if t_end is None or t <= t_end:
                    out.append(t)
        return out


def graph_at(s: SwitchingSchedule, t: float) -> CommGraph:
    """Graph active at time ``t`` (right-continuous at breakpoints)."""
    if t < 0:
        raise InputError(f"time must be non-negative, got {t}")
    k = bisect.bisect_right(s.breakpoints, t) - 1
    return s.graphs[s.indices[k]]


def min_lambda_over_schedule(s: SwitchingSchedule) -> float:
    """Smallest ``lambda_min(M)`` over the schedule's graphs."""
    for k, g in enumerate(s.graphs):
        if not g.is_connected:
            raise AssumptionViolation(f"graph {s._label(k)} in schedule is disconnected")
    return min(lambda_min_m(g) for g in s.graphs)


def two_graph_schedule() -> SwitchingSchedule:
    """Two-graph schedule: ring on [0, 0.5) and [5, 8), path-plus-chord elsewhere."""
    a = CommGraph.cycle(5)
    b = CommGraph.from_edges(5, [(1, 2), (2, 3), (3, 4), (4, 5), (1, 3)])
    return SwitchingSchedule((a, b), (0.0, 0.5, 5.0, 8.0), (0, 1, 0, 1), min_dwell=0.5, names=("a", "b"))


def as_schedule(g_or_sched: CommGraph | SwitchingSchedule) -> SwitchingSchedule:
    if isinstance(g_or_sched, SwitchingSchedule):
        return g_or_sched
    return SwitchingSchedule.constant(g_or_sched)

