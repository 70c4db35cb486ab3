"""Solvers for zero-sum differential games with asymmetric information.

The pipeline: finite control sets make the mixed-strategy Hamiltonian an
exact matrix-game value; the dual Hamilton-Jacobi equation is marched
backward with a monotone Lax-Friedrichs scheme; the primal value is
recovered by Fenchel conjugation over belief simplices; brute-force
discrete games along time partitions cross-validate everything.
"""

from .core import (
    ControlPath,
    GameSpec,
    MixedStrategy,
    NumericsConfig,
    SimplexGrid,
    StateGrid,
    TimePartition,
    constant_path,
    dynamics_bound,
    integrate,
    payoff_bound,
    uniform_mix,
    verify_estimates,
)
from .matrix_game import MatrixGame, Saddle, pure_minimax, solve, solve_matrix

__version__ = "0.1.0"
