"""Solvers for two-player zero-sum discounted stochastic games.

Large tabular games and finite-difference discretisations of differential
games are solved by nested policy iteration whose inner linear systems go
through an algebraic multigrid solver; grid problems can also be solved
coarse-to-fine with value and strategy interpolation between levels.
"""

from .amg import (
    AmgConfig,
    AmgHierarchy,
    amg_solve,
    build_interpolation,
    cf_gauss_seidel,
    cf_split,
    galerkin,
    mg_cycle,
    setup_hierarchy,
    strength_graph,
)
from .csr import CsrMatrix, read_matrix_market, write_matrix_market
from .directlu import BandLU, SingularMatrixError, direct_solve
from .fmg import LevelStack, fmg_solve, interp_strategy, interp_value
from .game import (
    GameInstance,
    PolicyPair,
    SolveReport,
    assemble_linear_system,
    bellman,
    bellman_fixed_max,
    error_norms,
    parse_tabular_game,
    random_game,
    residual,
    value_iteration,
    write_tabular_game,
)
from .pde import (
    GridSpec,
    ProblemSpec,
    build_game,
    build_game_double_stop,
    build_game_isaacs,
    build_game_stopping,
    double_stop_problem,
    exact_solution,
    isaacs_sin_problem,
    stopping_parabola_problem,
)
from .policy import (
    PiConfig,
    improve_max,
    improve_min,
    solve_game,
    solve_inner,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
