"""Games, pseudo-gradients, assumption sampling and the Nash oracle.

An action profile is a flat vector of length ``n_players * action_dim``;
player ``i`` owns the slice ``[i*d, (i+1)*d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .exceptions import InputError, OracleFailure

Gradient = Callable[[NDArray[np.float64]], NDArray[np.float64]]
Objective = Callable[[NDArray[np.float64]], float]


class GameModel:
    """An N-player game described by each player's partial gradient.

    Parameters:
        n_players: Number of players, at least 2.
        action_dim: Dimension of each player's action.
        partial_gradients: ``partial_gradients[i](x)`` returns the gradient of
            player i's objective with respect to its own action, evaluated at
            the full profile ``x``.
        objectives: Optional ``objectives[i](x)`` returning player i's cost.
        name: Label used in reports.
    """

    def __init__(
        self,
        n_players: int,
        action_dim: int,
        partial_gradients: Sequence[Gradient],
        objectives: Sequence[Objective] | None = None,
        name: str = "game",
    ) -> None:
        if n_players < 2:
            raise InputError(f"n_players must be >= 2, got {n_players}")
        if action_dim < 1:
            raise InputError(f"action_dim must be >= 1, got {action_dim}")
        if len(partial_gradients) != n_players:
            raise InputError("need one partial gradient per player")
        if objectives is not None and len(objectives) != n_players:
            raise InputError("need one objective per player")
        self.n_players = n_players
        self.action_dim = action_dim
        self._gradients = tuple(partial_gradients)
        self._objectives = tuple(objectives) if objectives is not None else None
        self.name = name

    @property
    def size(self) -> int:
        return self.n_players * self.action_dim

    @property
    def has_objectives(self) -> bool:
        return self._objectives is not None

    def player_slice(self, i: int) -> slice:
        d = self.action_dim
        return slice(i * d, (i + 1) * d)

    def check_profile(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.size:
            raise InputError(f"action profile must have length {self.size}, got shape {x.shape}")
        return x

    def partial_gradient(self, i: int, x: ArrayLike) -> NDArray[np.float64]:
        x = self.check_profile(x)
        return np.asarray(self._gradients[i](x), dtype=np.float64).reshape(self.action_dim)

    def objective(self, i: int, x: ArrayLike) -> float:
        if self._objectives is None:
            raise InputError(f"game {self.name!r} has no objective functions")
        return float(self._objectives[i](self.check_profile(x)))

    def local_gradients(self, estimates: NDArray[np.float64]) -> NDArray[np.float64]:
        """Evaluate every player's gradient at its own estimate of the profile.

        ``estimates`` has shape ``(N, N*d)``; row i is player i's estimate.
        Returns shape ``(N, d)``.
        """
        out = np.empty((self.n_players, self.action_dim))
        for i, grad in enumerate(self._gradients):
            out[i] = grad(estimates[i])
        return out

    def __repr__(self) -> str:
        return f"{type(self).__name__}(name={self.name!r}, n_players={self.n_players}, action_dim={self.action_dim})"


class QuadraticGame(GameModel):
    """Game with affine pseudo-gradient ``P(x) = Q x + b``.

    If every diagonal block ``Q_ii`` is symmetric, the objectives
    ``f_i(x) = 1/2 x_i' Q_ii x_i + x_i' (sum_{j != i} Q_ij x_j + b_i)`` are
    attached automatically so the gradient audit applies; pass
    ``objectives`` to override them.
    """

    def __init__(
        self,
        jacobian: ArrayLike,
        offset: ArrayLike,
        n_players: int,
        action_dim: int = 1,
        objectives: Sequence[Objective] | None = None,
        name: str = "quadratic",
    ) -> None:
        Q = np.array(jacobian, dtype=np.float64)
        b = np.array(offset, dtype=np.float64).ravel()
        n = n_players * action_dim
        if Q.shape != (n, n) or b.shape != (n,):
            raise InputError(f"expected Q of shape {(n, n)} and b of length {n}, got {Q.shape} and {b.shape}")
        self.jacobian = Q
        self.offset = b
        d = action_dim
        gradients = [self._block_gradient(i, d) for i in range(n_players)]
        if objectives is None and self._diagonal_blocks_symmetric(n_players, d):
            objectives = [self._block_objective(i, d) for i in range(n_players)]
        super().__init__(n_players, action_dim, gradients, objectives, name=name)
        # (N, d, N*d) view of the rows owned by each player.
        self._rows = Q.reshape(n_players, d, n)
        self._offsets = b.reshape(n_players, d)

    def _block_gradient(self, i: int, d: int) -> Gradient:
        rows = self.jacobian[i * d:(i + 1) * d]
        off = self.offset[i * d:(i + 1) * d]
        return lambda x: rows @ x + off

    def _block_objective(self, i: int, d: int) -> Objective:
        sl = slice(i * d, (i + 1) * d)
        Qii = self.jacobian[sl, sl]
        rows = self.jacobian[sl].copy()
        rows[:, sl] = 0.0
        off = self.offset[sl]

        def f(x: NDArray[np.float64]) -> float:
            xi = x[sl]
            return float(0.5 * xi @ Qii @ xi + xi @ (rows @ x + off))

        return f

    def _diagonal_blocks_symmetric(self, n_players: int, d: int) -> bool:
        for i in range(n_players):
            sl = slice(i * d, (i + 1) * d)
            block = self.jacobian[sl, sl]
            if not np.allclose(block, block.T, rtol=0.0, atol=1e-12):
                return False
        return True

    def local_gradients(self, estimates: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.einsum("iak,ik->ia", self._rows, estimates) + self._offsets

    def linear_solution(self) -> NDArray[np.float64]:
        """Zero of the affine pseudo-gradient by a direct dense solve."""
        return np.linalg.solve(self.jacobian, -self.offset)


def pseudo_gradient(game: GameModel, x: ArrayLike) -> NDArray[np.float64]:
    """Stack of every player's own-action gradient at profile ``x``."""
    x = game.check_profile(x)
    return np.concatenate([game.partial_gradient(i, x) for i in range(game.n_players)])


def pseudo_gradient_jacobian(game: GameModel, x: ArrayLike, step: float = 1e-6) -> NDArray[np.float64]:
    """Central finite-difference Jacobian of the pseudo-gradient."""
    x = game.check_profile(x)
    n = game.size
    J = np.empty((n, n))
    for k in range(n):
        h = step * max(1.0, abs(x[k]))
        xp = x.copy()
        xm = x.copy()
        xp[k] += h
        xm[k] -= h
        J[:, k] = (pseudo_gradient(game, xp) - pseudo_gradient(game, xm)) / (2.0 * h)
    return J


def solve_nash(
    game: GameModel,
    x0: ArrayLike | None = None,
    tol: float = 1e-10,
    max_iter: int = 200,
    flow_step: float | None = None,
) -> NDArray[np.float64]:
    """Find the zero of the pseudo-gradient.

    Damped Newton with a finite-difference Jacobian and backtracking on
    ``||P||``. When no damped Newton step reduces the residual, a gradient
    flow step ``x <- x - alpha P(x)`` is tried instead.

    Raises:
        OracleFailure: ``max_iter`` reached; carries the best iterate.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    x = np.zeros(game.size) if x0 is None else game.check_profile(x0).copy()
    p = pseudo_gradient(game, x)
    res = float(np.linalg.norm(p))
    best, best_res = x.copy(), res
    alpha = flow_step
    for _ in range(max_iter):
        if res <= tol:
            return x
        accepted = False
        try:
            delta = np.linalg.solve(pseudo_gradient_jacobian(game, x), -p)
        except np.linalg.LinAlgError:
            delta = None
        if delta is not None and np.all(np.isfinite(delta)):
            t = 1.0
            for _ in range(30):
                xn = x + t * delta
                pn = pseudo_gradient(game, xn)
                rn = float(np.linalg.norm(pn))
                if rn < res:
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            a = alpha if alpha is not None else 1.0
            for _ in range(60):
                xn = x - a * p
                pn = pseudo_gradient(game, xn)
                rn = float(np.linalg.norm(pn))
                if rn < res:
                    accepted = True
                    alpha = a
                    break
                a *= 0.5
        if not accepted:
            break
        x, p, res = xn, pn, rn
        if res < best_res:
            best, best_res = x.copy(), res
    if res <= tol:
        return x
    raise OracleFailure(
        f"Nash oracle did not reach ||P|| <= {tol:g} (best residual {best_res:.3e})",
        best=best,
        residual=best_res,
    )


@dataclass(frozen=True)
class AssumptionReport:
    """Sampled estimates of the Lipschitz and strong-monotonicity constants.

    Both numbers are falsifiers, not proofs: ``lipschitz_estimate`` is a lower
    estimate of each ``l_i`` and ``monotonicity_modulus`` an upper estimate of
    the true modulus, taken over ``samples_used`` evaluated pairs.
    """

    lipschitz_estimate: tuple[float, ...]
    monotonicity_modulus: float
    samples_used: int
    seed: int
    guided_pairs: int = 0
    method: str = "sampled"

    @property
    def max_lipschitz(self) -> float:
        return max(self.lipschitz_estimate)

    @property
    def strongly_monotone(self) -> bool:
        return self.monotonicity_modulus > 0

    def to_dict(self) -> dict:
        return {
            "lipschitz_estimate": list(self.lipschitz_estimate),
            "monotonicity_modulus": self.monotonicity_modulus,
            "samples_used": self.samples_used,
            "seed": self.seed,
            "guided_pairs": self.guided_pairs,
            "method": self.method,
        }


def _box_bounds(box, n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    low, high = box
    low = np.broadcast_to(np.asarray(low, dtype=np.float64), (n,)).copy()
    high = np.broadcast_to(np.asarray(high, dtype=np.float64), (n,)).copy()
    if not np.all(np.isfinite(low)) or not np.all(np.isfinite(high)):
        raise InputError("sampling box must be finite")
    if np.any(high <= low):
        raise InputError("sampling box has zero volume")
    return low, high


def validate_assumptions(
    game: GameModel,
    box=(-20.0, 20.0),
    n_samples: int = 1000,
    seed: int = 0,
    guided: int = 16,
) -> AssumptionReport:
    """Estimate per-player Lipschitz constants and the monotonicity modulus.

    ``n_samples`` uniform pairs are drawn from ``box`` (a ``(low, high)``
    pair of scalars or length ``N*d`` arrays). At the first ``guided``
    sampled points a finite-difference Jacobian proposes extra pairs along
    its worst directions: the smallest eigenvector of the symmetric part for
    monotonicity and each player's top right singular vector for Lipschitz.
    Every estimate is still the ratio measured on an actual pair.

    A negative modulus is reported, not raised.
    """
    if n_samples < 1:
        raise InputError("n_samples must be positive")
    n = game.size
    low, high = _box_bounds(box, n)
    rng = np.random.default_rng(seed)
    X = rng.uniform(low, high, size=(n_samples, n))
    Z = rng.uniform(low, high, size=(n_samples, n))

    lips = np.zeros(game.n_players)
    mono = np.inf
    pairs = 0

    def record(x: NDArray[np.float64], z: NDArray[np.float64]) -> None:
        nonlocal mono, pairs
        dx = x - z
        nd = float(np.linalg.norm(dx))
        if nd == 0.0:
            return
        px, pz = pseudo_gradient(game, x), pseudo_gradient(game, z)
        dp = px - pz
        mono = min(mono, float(dx @ dp) / nd**2)
        for i in range(game.n_players):
            sl = game.player_slice(i)
            lips[i] = max(lips[i], float(np.linalg.norm(dp[sl])) / nd)
        pairs += 1

    for x, z in zip(X, Z):
        record(x, z)

    delta = 1e-2 * float(np.min(high - low))
    n_guided = 0
    for x in X[: min(guided, n_samples)]:
        J = pseudo_gradient_jacobian(game, x)
        _, vecs = np.linalg.eigh(0.5 * (J + J.T))
        v = vecs[:, 0]
        record(x + delta * v, x - delta * v)
        n_guided += 1
        for i in range(game.n_players):
            _, _, vt = np.linalg.svd(J[game.player_slice(i)])
            u = vt[0]
            record(x + delta * u, x - delta * u)
            n_guided += 1

    return AssumptionReport(
        lipschitz_estimate=tuple(float(v) for v in lips),
        monotonicity_modulus=float(mono),
        samples_used=pairs,
        seed=seed,
        guided_pairs=n_guided,
    )


def gradient_audit(
    game: GameModel,
    n_points: int = 100,
    seed: int = 0,
    box=(-20.0, 20.0),
    step: float = 1e-6,
) -> float:
    """Largest relative gap between supplied gradients and central differences.

    The gap for player i at x is ``||g_fd - g|| / max(||g||, 1)``.
    """
    if not game.has_objectives:
        raise InputError(f"game {game.name!r} has no objectives to differentiate")
    n = game.size
    low, high = _box_bounds(box, n)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in rng.uniform(low, high, size=(n_points, n)):
        for i in range(game.n_players):
            sl = game.player_slice(i)
            g = game.partial_gradient(i, x)
            fd = np.empty(game.action_dim)
            for k, idx in enumerate(range(sl.start, sl.stop)):
                xp = x.copy()
                xm = x.copy()
                xp[idx] += step
                xm[idx] -= step
                fd[k] = (game.objective(i, xp) - game.objective(i, xm)) / (2.0 * step)
            worst = max(worst, float(np.linalg.norm(fd - g)) / max(float(np.linalg.norm(g)), 1.0))
    return worst


# Per-dimension coupling of the connectivity game: row i holds the
# coefficients of grad_i f_i in (x_1, ..., x_5), offsets are the constants.
_CONNECTIVITY_ROWS = np.array(
    [
        [4.0, -2.0, 0.0, 0.0, 0.0],
        [0.0, 6.0, -2.0, 0.0, 0.0],
        [0.0, -2.0, 8.0, 0.0, 0.0],
        [0.0, -2.0, 0.0, 12.0, -2.0],
        [-2.0, 0.0, 0.0, 0.0, 12.0],
    ]
)
_CONNECTIVITY_OFFSETS = np.array([1.0, 2.0, 3.0, 4.0, 5.0])


def _connectivity_objectives() -> list[Objective]:
    def p(x: NDArray[np.float64], i: int) -> NDArray[np.float64]:
        return x[2 * i:2 * i + 2]

    def sq(v: NDArray[np.float64]) -> float:
        return float(v @ v)

    def f1(x):
        x1 = p(x, 0)
        return sq(x1) + x1.sum() + 1.0 + sq(x1 - p(x, 1))

    def f2(x):
        x2 = p(x, 1)
        return 2 * sq(x2) + 2 * x2.sum() + 2.0 + sq(x2 - p(x, 2))

    def f3(x):
        x3 = p(x, 2)
        return 3 * sq(x3) + 3 * x3.sum() + 3.0 + sq(x3 - p(x, 1))

    def f4(x):
        x4 = p(x, 3)
        return 4 * sq(x4) + 4 * x4.sum() + 4.0 + sq(x4 - p(x, 1)) + sq(x4 - p(x, 4))

    def f5(x):
        # Quadratic self-term uses x_5: with x_4 here player 5 would have no
        # curvature in its own action and the game loses strong monotonicity.
        x5 = p(x, 4)
        return 5 * sq(x5) + 5 * x5.sum() + 5.0 + sq(x5 - p(x, 0))

    return [f1, f2, f3, f4, f5]


def example_game_connectivity() -> QuadraticGame:
    """Five mobile sensors with planar positions and connectivity costs.

    Gradients are the hand-derived affine maps, e.g.
    ``grad_1 f_1 = 4 x_1 - 2 x_2 + 1`` per coordinate.
    """
    return QuadraticGame(
        np.kron(_CONNECTIVITY_ROWS, np.eye(2)),
        np.repeat(_CONNECTIVITY_OFFSETS, 2),
        n_players=5,
        action_dim=2,
        objectives=_connectivity_objectives(),
        name="connectivity5",
    )


def decoupled_quadratic_game(centers: ArrayLike, weight: float = 1.0) -> QuadraticGame:
    """``f_i = weight * ||x_i - c_i||^2``; scalar actions."""
    c = np.asarray(centers, dtype=np.float64).ravel()
    n = c.shape[0]
    return QuadraticGame(2.0 * weight * np.eye(n), -2.0 * weight * c, n_players=n, name="decoupled")


@dataclass
class GameRegistry:
    factories: dict[str, Callable[[], GameModel]] = field(default_factory=dict)

    def register(self, name: str, factory: Callable[[], GameModel]) -> None:
        self.factories[name] = factory

    def get(self, name: str) -> GameModel:
        try:
            return self.factories[name]()
        except KeyError:
            raise InputError(f"unknown game {name!r}; known: {sorted(self.factories)}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.factories

    def names(self) -> list[str]:
        return sorted(self.factories)


GAMES = GameRegistry()
GAMES.register("connectivity5", example_game_connectivity)
