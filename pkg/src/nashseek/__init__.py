"""Fully distributed Nash equilibrium seeking with adaptive consensus gains."""

from .diagnostics import (
    ConvergenceVerdict,
    TheoryBounds,
    lyapunov_edge,
    lyapunov_node,
    theory_bounds,
    verdict,
)
from .dynamics import (
    SeekerState,
    SeekingProblem,
    Strategy,
    StrategyConfig,
    consensus_error,
    rhs_edge_adaptive,
    rhs_edge_switching,
    rhs_fixed,
    rhs_node_adaptive,
)
from .game import (
    AssumptionReport,
    GameModel,
    QuadraticGame,
    example_game_connectivity,
    pseudo_gradient,
    solve_nash,
    validate_assumptions,
)
from .graph import (
    CommGraph,
    SwitchingSchedule,
    algebraic_connectivity,
    augmented_m_matrix,
    graph_at,
    laplacian,
    min_lambda_over_schedule,
)
from .integrator import IntegratorConfig, SimulationTrace, StopCriterion, integrate, integrate_until

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "CommGraph",
    "ConvergenceVerdict",
    "GameModel",
    "IntegratorConfig",
    "QuadraticGame",
    "SeekerState",
    "SeekingProblem",
    "SimulationTrace",
    "StopCriterion",
    "Strategy",
    "StrategyConfig",
    "SwitchingSchedule",
    "TheoryBounds",
    "algebraic_connectivity",
    "augmented_m_matrix",
    "consensus_error",
    "example_game_connectivity",
    "graph_at",
    "integrate",
    "integrate_until",
    "laplacian",
    "lyapunov_edge",
    "lyapunov_node",
    "min_lambda_over_schedule",
    "pseudo_gradient",
    "rhs_edge_adaptive",
    "rhs_edge_switching",
    "rhs_fixed",
    "rhs_node_adaptive",
    "solve_nash",
    "theory_bounds",
    "validate_assumptions",
    "verdict",
]
