"""Right-hand sides of the four Nash-seeking flows.

Flat state layout (row-major everywhere, 0-based ``i, j`` below)::

    [ x (N*d) | y (N*N*d), y[i, j] is player i's estimate of x_j | gains ]

gains are ``theta (N*N)`` for ``fixed`` (held constant) and
``node_adaptive``, and ``c (N*N)`` followed by ``cbar (N*N)`` for the
edge strategies. Gains are stored for every ordered pair; where
``a_ij = 0`` their rates are identically zero.
"""

from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import InputError
from .game import GameModel, pseudo_gradient
from .graph import CommGraph, SwitchingSchedule, graph_at

Matrix = Union[float, ArrayLike]


class Strategy(str, enum.Enum):
    FIXED = "fixed"
    NODE_ADAPTIVE = "node_adaptive"
    EDGE_ADAPTIVE = "edge_adaptive"
    EDGE_SWITCHING = "edge_switching"

    @property
    def is_edge(self) -> bool:
        return self in (Strategy.EDGE_ADAPTIVE, Strategy.EDGE_SWITCHING)

    @property
    def adaptive(self) -> bool:
        return self is not Strategy.FIXED


def n_gain_slots(kind: Strategy, n: int) -> int:
    return 2 * n * n if kind.is_edge else n * n


def _pair_matrix(value: Matrix, n: int, name: str) -> NDArray[np.float64]:
    m = np.asarray(value, dtype=np.float64)
    if m.ndim == 0:
        return np.full((n, n), float(m))
    if m.shape != (n, n):
        raise InputError(f"{name} must be a scalar or an {n}x{n} matrix, got shape {m.shape}")
    return m.copy()


@dataclass(frozen=True)
class StrategyConfig:
    """Strategy kind plus the constants that kind needs.

    ``theta``/``theta_bar`` belong to ``fixed`` (gain ``theta * theta_bar_ij``),
    ``gamma`` to ``node_adaptive``. ``cbar_uses_coupling_gain`` switches the
    anchoring-gain rate of ``edge_adaptive`` from ``a_ij * |e_ij|^2`` to
    ``c_ij * |e_ij|^2``; it is off by default.
    """

    kind: Strategy
    theta: float | None = None
    theta_bar: Matrix | None = None
    gamma: Matrix | None = None
    cbar_uses_coupling_gain: bool = False

    def __post_init__(self) -> None:
        kind = Strategy(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind is Strategy.FIXED:
            if self.theta is None or not self.theta > 0:
                raise InputError("fixed strategy needs theta > 0")
            if self.theta_bar is None:
                object.__setattr__(self, "theta_bar", 1.0)
            if np.any(np.asarray(self.theta_bar, dtype=float) <= 0):
                raise InputError("theta_bar entries must be positive")
        elif self.theta is not None or self.theta_bar is not None:
            raise InputError(f"theta/theta_bar only apply to the fixed strategy, not {kind.value}")
        if kind is Strategy.NODE_ADAPTIVE:
            if self.gamma is None:
                object.__setattr__(self, "gamma", 1.0)
            if np.any(np.asarray(self.gamma, dtype=float) <= 0):
                raise InputError("gamma entries must be positive")
        elif self.gamma is not None:
            raise InputError(f"gamma only applies to node_adaptive, not {kind.value}")
        if self.cbar_uses_coupling_gain and kind is not Strategy.EDGE_ADAPTIVE:
            raise InputError("cbar_uses_coupling_gain only applies to edge_adaptive")

    def theta_matrix(self, n: int) -> NDArray[np.float64]:
        return self.theta * _pair_matrix(self.theta_bar, n, "theta_bar")

    def gamma_matrix(self, n: int) -> NDArray[np.float64]:
        return _pair_matrix(self.gamma, n, "gamma")


@dataclass
class SeekerState:
    """Unpacked state. ``x`` is ``(N, d)``, ``y`` is ``(N, N, d)``, gains ``(N, N)``."""

    x: NDArray[np.float64]
    y: NDArray[np.float64]
    theta: NDArray[np.float64] | None = None
    c: NDArray[np.float64] | None = None
    cbar: NDArray[np.float64] | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def kind_is_edge(self) -> bool:
        return self.c is not None

    def gains(self) -> NDArray[np.float64]:
        if self.c is not None:
            return np.concatenate([self.c.ravel(), self.cbar.ravel()])
        if self.theta is not None:
            return self.theta.ravel()
        return np.empty(0)

    def flatten(self) -> NDArray[np.float64]:
        return np.concatenate([self.x.ravel(), self.y.ravel(), self.gains()])

    @classmethod
    def unflatten(cls, z: ArrayLike, kind: Strategy, n: int, d: int) -> "SeekerState":
        """Split a flat vector into reshaped views (no copies)."""
        z = np.asarray(z, dtype=np.float64)
        nx, ny = n * d, n * n * d
        expected = nx + ny + n_gain_slots(kind, n)
        if z.shape != (expected,):
            raise InputError(f"flat state must have length {expected}, got shape {z.shape}")
        x = z[:nx].reshape(n, d)
        y = z[nx:nx + ny].reshape(n, n, d)
        g = z[nx + ny:]
        if kind.is_edge:
            return cls(x, y, c=g[: n * n].reshape(n, n), cbar=g[n * n:].reshape(n, n))
        return cls(x, y, theta=g.reshape(n, n))

    def copy(self) -> "SeekerState":
        cp = lambda a: None if a is None else a.copy()  # noqa: E731
        return SeekerState(self.x.copy(), self.y.copy(), cp(self.theta), cp(self.c), cp(self.cbar))


def consensus_error(s: SeekerState) -> tuple[NDArray[np.float64], float]:
    """``e[i, j] = y[i, j] - x[j]`` and the Euclidean norm of the stacked errors."""
    e = s.y - s.x[None, :, :]
    return e, float(np.linalg.norm(e))


# Array kernels shared by the public rhs_* functions and SeekingProblem.rhs.

def _disagreement(A: NDArray, deg: NDArray, x: NDArray, y: NDArray) -> NDArray:
    """``sum_k a_ik (y_ij - y_kj) + a_ij (y_ij - x_j)`` for all (i, j)."""
    n, _, d = y.shape
    Ay = (A @ y.reshape(n, n * d)).reshape(n, n, d)
    return deg[:, None, None] * y - Ay + A[:, :, None] * (y - x[None])


def _weighted_disagreement(A: NDArray, c: NDArray, cbar: NDArray, x: NDArray, y: NDArray) -> NDArray:
    """``sum_k a_ik c_ik (y_ij - y_kj) + a_ij cbar_ij (y_ij - x_j)``."""
    n, _, d = y.shape
    W = A * c
    Wy = (W @ y.reshape(n, n * d)).reshape(n, n, d)
    return W.sum(axis=1)[:, None, None] * y - Wy + (A * cbar)[:, :, None] * (y - x[None])


def _action_rate(game: GameModel, y: NDArray) -> NDArray:
    n, _, d = y.shape
    return -game.local_gradients(y.reshape(n, n * d))


def _edge_rates(A: NDArray, c: NDArray, cbar: NDArray, x: NDArray, y: NDArray, coupling_cbar: bool):
    n = y.shape[0]
    yf = y.reshape(n, -1)
    diff = yf[:, None, :] - yf[None, :, :]
    dc = A * np.einsum("ijk,ijk->ij", diff, diff)
    e = y - x[None]
    dcbar = (c if coupling_cbar else A) * np.einsum("ijk,ijk->ij", e, e)
    return dc, dcbar


def _check_dims(game: GameModel, n: int, s: SeekerState) -> None:
    if game.n_players != n:
        raise InputError(f"graph has {n} vertices but game has {game.n_players} players")
    if s.x.shape != (n, game.action_dim) or s.y.shape != (n, n, game.action_dim):
        raise InputError(
            f"state shapes x{s.x.shape}, y{s.y.shape} do not match N={n}, d={game.action_dim}"
        )


def _check_gain(g: NDArray | None, n: int, name: str) -> NDArray:
    if g is None or g.shape != (n, n):
        raise InputError(f"state is missing {name} gains of shape ({n}, {n})")
    return g


def rhs_fixed(game: GameModel, g: CommGraph, cfg: StrategyConfig, s: SeekerState) -> SeekerState:
    """Constant-gain flow; the gain slots of the derivative are zero."""
    _check_dims(game, g.n, s)
    A = g.adjacency
    D = _disagreement(A, A.sum(axis=1), s.x, s.y)
    theta = cfg.theta_matrix(g.n)
    return SeekerState(_action_rate(game, s.y), -theta[:, :, None] * D, theta=np.zeros_like(theta))


def rhs_node_adaptive(game: GameModel, g: CommGraph, cfg: StrategyConfig, s: SeekerState) -> SeekerState:
    """Node-based law: ``theta_ij`` grows with the squared local disagreement."""
    _check_dims(game, g.n, s)
    theta = _check_gain(s.theta, g.n, "theta")
    A = g.adjacency
    D = _disagreement(A, A.sum(axis=1), s.x, s.y)
    dtheta = cfg.gamma_matrix(g.n) * np.einsum("ijk,ijk->ij", D, D)
    return SeekerState(_action_rate(game, s.y), -theta[:, :, None] * D, theta=dtheta)


def rhs_edge_adaptive(game: GameModel, g: CommGraph, cfg: StrategyConfig, s: SeekerState) -> SeekerState:
    """Edge-based law with coupling gains ``c`` and anchoring gains ``cbar``."""
    _check_dims(game, g.n, s)
    c = _check_gain(s.c, g.n, "c")
    cbar = _check_gain(s.cbar, g.n, "cbar")
    A = g.adjacency
    dy = -_weighted_disagreement(A, c, cbar, s.x, s.y)
    dc, dcbar = _edge_rates(A, c, cbar, s.x, s.y, cfg.cbar_uses_coupling_gain)
    return SeekerState(_action_rate(game, s.y), dy, c=dc, cbar=dcbar)


def rhs_edge_switching(
    game: GameModel, sched: SwitchingSchedule, cfg: StrategyConfig, s: SeekerState, t: float
) -> SeekerState:
    """Edge-based law on the graph active at time ``t``."""
    return rhs_edge_adaptive(game, graph_at(sched, t), cfg, s)


def check_edge_symmetry(s: SeekerState, atol: float = 0.0) -> None:
    if s.c is not None and not np.allclose(s.c, s.c.T, rtol=0.0, atol=atol):
        raise InputError("edge strategies need symmetric initial coupling gains (c_ij = c_ji)")


@dataclass(frozen=True)
class SeekingProblem:
    """A game, a strategy and its communication structure, as one ODE.

    ``graph`` is used by every strategy except ``edge_switching``, which takes
    ``schedule`` instead.
    """

    game: GameModel
    strategy: StrategyConfig
    graph: CommGraph | None = None
    schedule: SwitchingSchedule | None = None

    def __post_init__(self) -> None:
        kind = self.strategy.kind
        if kind is Strategy.EDGE_SWITCHING:
            if self.schedule is None:
                raise InputError("edge_switching needs a switching schedule")
            n = self.schedule.n
        else:
            if self.graph is None:
                raise InputError(f"{kind.value} needs a communication graph")
            n = self.graph.n
        if n != self.game.n_players:
            raise InputError(f"graph has {n} vertices but game has {self.game.n_players} players")
        n = self.game.n_players
        graphs = self.schedule.graphs if kind is Strategy.EDGE_SWITCHING else (self.graph,)
        object.__setattr__(self, "_adj", [g.adjacency for g in graphs])
        object.__setattr__(self, "_deg", [g.adjacency.sum(axis=1) for g in graphs])
        if kind is Strategy.FIXED:
            object.__setattr__(self, "_theta", self.strategy.theta_matrix(n))
        if kind is Strategy.NODE_ADAPTIVE:
            object.__setattr__(self, "_gamma", self.strategy.gamma_matrix(n))

    @property
    def kind(self) -> Strategy:
        return self.strategy.kind

    @property
    def n(self) -> int:
        return self.game.n_players

    @property
    def d(self) -> int:
        return self.game.action_dim

    @property
    def state_size(self) -> int:
        n, d = self.n, self.d
        return n * d + n * n * d + n_gain_slots(self.kind, n)

    def unpack(self, z: ArrayLike) -> SeekerState:
        return SeekerState.unflatten(z, self.kind, self.n, self.d)

    def _graph_index(self, t: float) -> int:
        if self.kind is not Strategy.EDGE_SWITCHING:
            return 0
        s = self.schedule
        return s.indices[bisect.bisect_right(s.breakpoints, t) - 1]

    def adjacency_at(self, t: float) -> NDArray[np.float64]:
        return self._adj[self._graph_index(t)]

    def rhs(self, t: float, z: NDArray[np.float64]) -> NDArray[np.float64]:
        """Flat derivative; time enters only through the switching signal."""
        n, d = self.n, self.d
        nx, ny = n * d, n * n * d
        x = z[:nx].reshape(n, d)
        y = z[nx:nx + ny].reshape(n, n, d)
        k = self._graph_index(t)
        A = self._adj[k]
        out = np.empty_like(z)
        out[:nx] = _action_rate(self.game, y).ravel()
        kind = self.kind
        if kind.is_edge:
            c = z[nx + ny:nx + ny + n * n].reshape(n, n)
            cbar = z[nx + ny + n * n:].reshape(n, n)
            out[nx:nx + ny] = -_weighted_disagreement(A, c, cbar, x, y).ravel()
            dc, dcbar = _edge_rates(A, c, cbar, x, y, self.strategy.cbar_uses_coupling_gain)
            out[nx + ny:nx + ny + n * n] = dc.ravel()
            out[nx + ny + n * n:] = dcbar.ravel()
            return out
        D = _disagreement(A, self._deg[k], x, y)
        if kind is Strategy.FIXED:
            out[nx:nx + ny] = (-self._theta[:, :, None] * D).ravel()
            out[nx + ny:] = 0.0
        else:
            theta = z[nx + ny:].reshape(n, n)
            out[nx:nx + ny] = (-theta[:, :, None] * D).ravel()
            out[nx + ny:] = (self._gamma * np.einsum("ijk,ijk->ij", D, D)).ravel()
        return out

    def rhs_state(self, t: float, s: SeekerState) -> SeekerState:
        """Dispatch to the public per-strategy functions."""
        kind = self.kind
        if kind is Strategy.FIXED:
            return rhs_fixed(self.game, self.graph, self.strategy, s)
        if kind is Strategy.NODE_ADAPTIVE:
            return rhs_node_adaptive(self.game, self.graph, self.strategy, s)
        if kind is Strategy.EDGE_ADAPTIVE:
            return rhs_edge_adaptive(self.game, self.graph, self.strategy, s)
        return rhs_edge_switching(self.game, self.schedule, self.strategy, s, t)

    def initial_state(
        self,
        seed: int,
        low: float = -20.0,
        high: float = 20.0,
        gains: float | str | None = None,
    ) -> NDArray[np.float64]:
        """Seeded random start.

        Draws from ``numpy.random.default_rng(seed)`` (PCG64), in order: x, y,
        then gains when ``gains == "uniform"``, all uniform on ``[low, high)``.
        ``gains`` defaults to ``"uniform"`` for node_adaptive and 1.0 for the
        edge strategies; fixed always uses ``theta * theta_bar``.
        """
        if not high > low:
            raise InputError(f"initialization range [{low}, {high}] is empty")
        n, d = self.n, self.d
        rng = np.random.default_rng(seed)
        x = rng.uniform(low, high, n * d)
        y = rng.uniform(low, high, n * n * d)
        kind = self.kind
        if kind is Strategy.FIXED:
            g = self._theta.ravel()
        else:
            if gains is None:
                gains = "uniform" if kind is Strategy.NODE_ADAPTIVE else 1.0
            slots = n_gain_slots(kind, n)
            if gains == "uniform":
                if kind.is_edge:
                    # Symmetrize so the coupling-gain precondition holds.
                    c = rng.uniform(low, high, (n, n))
                    c = np.triu(c) + np.triu(c, 1).T
                    cbar = rng.uniform(low, high, (n, n))
                    g = np.concatenate([c.ravel(), cbar.ravel()])
                else:
                    g = rng.uniform(low, high, slots)
            else:
                g = np.full(slots, float(gains))
        return np.concatenate([x, y, g])

    def equilibrium_state(self, x_star: ArrayLike, gains: float | ArrayLike = 1.0) -> NDArray[np.float64]:
        """State with x = x*, every estimate equal to x*, and the given gains."""
        n, d = self.n, self.d
        xs = np.asarray(x_star, dtype=np.float64).reshape(n, d)
        y = np.broadcast_to(xs[None], (n, n, d))
        if self.kind is Strategy.FIXED:
            g = self._theta.ravel()
        else:
            g = np.broadcast_to(np.asarray(gains, dtype=np.float64), (n_gain_slots(self.kind, n),))
        return np.concatenate([xs.ravel(), y.ravel(), g])

    def check_initial(self, z: ArrayLike) -> None:
        s = self.unpack(z)
        if not np.all(np.isfinite(s.flatten())):
            raise InputError("initial state must be finite")
        if self.kind.is_edge:
            check_edge_symmetry(s)

    def measure(self, z: NDArray[np.float64]) -> tuple[float, float]:
        """``(||P(x)||, ||y - 1 kron x||)`` at flat state ``z``."""
        s = self.unpack(z)
        return float(np.linalg.norm(pseudo_gradient(self.game, s.x.ravel()))), consensus_error(s)[1]
