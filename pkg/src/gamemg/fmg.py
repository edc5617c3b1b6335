"""Coarse-to-fine policy iteration for discretised grid games.

Solves the game on a nested ladder of grids, coarsest first.  Each level is
solved by the usual nested policy iteration to a tolerance proportional to
the square of that level's mesh width; the resulting value and strategies
seed the next finer level.  Policy iteration behaves like a Newton method,
so a good starting point is most of the work: free-boundary games whose
cold iteration count grows with the grid diameter collapse to a handful of
iterations per level.

Value transfer copies coincident points and averages the nearby coarse
points (two along edges, four at cell centres); boundary neighbours
contribute Dirichlet data.  Strategy transfer copies coincident points and
initialises new points with one local policy improvement against the
interpolated value; continuous min-player fields are simply re-derived from
the interpolated value everywhere.

Note that the loose thresholds on intermediate levels truncate the inner
solves, so the exact-policy-iteration monotonicity guarantees only bind on
the finest level (which runs with the final epsilon).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .game import GameInstance, PolicyPair, SolveReport
from .pde import GridSpec, ProblemSpec, build_game, exact_solution
from .policy import PiConfig, improve_max_with_values, improve_min, solve_game


class LevelNonConvergence(RuntimeError):
    def __init__(self, level_index, points, reports):
        super().__init__(
            f"policy iteration failed to converge on level {level_index} "
            f"({points} points per direction)"
        )
        self.level_index = level_index
        self.reports = reports


@dataclass(frozen=True)
class LevelStack:
    """Grids and games from coarsest (first) to finest, with per-level
    stopping thresholds c * h_l^2 (the finest level uses the final epsilon)."""

    problem: ProblemSpec
    grids: list
    games: list
    thresholds: list

    @property
    def n_levels(self) -> int:
        return len(self.grids)


def build_level_stack(problem: ProblemSpec, finest_m: int, n_coarse_levels: int,
                      c: float, epsilon: float) -> LevelStack:
    if finest_m % (1 << n_coarse_levels) != 0:
        raise ValueError(
            f"finest grid m={finest_m} is not divisible by 2^{n_coarse_levels}"
        )
    grids = []
    games = []
    thresholds = []
    for level in range(n_coarse_levels, -1, -1):
        m_l = finest_m >> level
        grid = GridSpec(m=m_l, dim=problem.dim)
        grids.append(grid)
        games.append(build_game(problem, grid))
        thresholds.append(epsilon if level == 0 else c * grid.h ** 2)
    return LevelStack(problem, grids, games, thresholds)


def default_coarse_levels(finest_m: int, coarsest_m: int = 4) -> int:
    """Largest ladder depth whose coarsest grid keeps at least coarsest_m
    subdivisions per axis."""
    levels = 0
    m = finest_m
    while m % 2 == 0 and m // 2 >= coarsest_m:
        m //= 2
        levels += 1
    return levels


def _coincident_maps(coarse: GridSpec, fine: GridSpec):
    """Fine-state indices sitting on coarse points, and their coarse indices."""
    if fine.m != 2 * coarse.m:
        raise ValueError("grids are not nested with ratio 2")
    nf = fine.points_per_axis
    nc = coarse.points_per_axis
    if fine.dim == 1:
        i = np.arange(1, nf + 1)
        mask = i % 2 == 0
        fine_ids = np.flatnonzero(mask)
        coarse_ids = i[mask] // 2 - 1
        return fine_ids, coarse_ids
    idx = np.arange(fine.n_states)
    i = idx % nf + 1
    j = idx // nf + 1
    mask = (i % 2 == 0) & (j % 2 == 0)
    fine_ids = np.flatnonzero(mask)
    coarse_ids = (j[mask] // 2 - 1) * nc + (i[mask] // 2 - 1)
    return fine_ids, coarse_ids


def interp_value(coarse: GridSpec, fine: GridSpec, v_coarse, boundary=None) -> np.ndarray:
    """Interpolate a value vector to the next finer grid.

    Coincident points copy; new edge points average their two coarse
    neighbours and cell centres the four surrounding coarse points.  Where
    a neighbour lies on the domain boundary its Dirichlet value is used
    (zero if no boundary callback is supplied).
    """
    if fine.m != 2 * coarse.m:
        raise ValueError("grids are not nested with ratio 2")
    v_coarse = np.asarray(v_coarse, dtype=np.float64)
    if v_coarse.shape != (coarse.n_states,):
        raise ValueError("coarse value vector has the wrong length")
    mc, mf = coarse.m, fine.m
    h = coarse.h

    if coarse.dim == 1:
        padded = np.zeros(mc + 1)
        padded[1:mc] = v_coarse
        if boundary is not None:
            ends = np.array([[0.0], [1.0]])
            padded[[0, mc]] = np.asarray(boundary(ends), dtype=np.float64)
        fine_padded = np.zeros(mf + 1)
        fine_padded[::2] = padded
        fine_padded[1::2] = 0.5 * (padded[:-1] + padded[1:])
        return fine_padded[1:mf].copy()

    padded = np.zeros((mc + 1, mc + 1))  # [x2 line, x1 line]
    padded[1:mc, 1:mc] = v_coarse.reshape(mc - 1, mc - 1)
    if boundary is not None:
        line = np.arange(mc + 1) * h
        for edge, pts in (
            ((0, slice(None)), np.column_stack([line, np.zeros(mc + 1)])),
            ((mc, slice(None)), np.column_stack([line, np.ones(mc + 1)])),
            ((slice(None), 0), np.column_stack([np.zeros(mc + 1), line])),
            ((slice(None), mc), np.column_stack([np.ones(mc + 1), line])),
        ):
            padded[edge] = np.asarray(boundary(pts), dtype=np.float64)
    fine_padded = np.zeros((mf + 1, mf + 1))
    fine_padded[::2, ::2] = padded
    fine_padded[::2, 1::2] = 0.5 * (padded[:, :-1] + padded[:, 1:])
    fine_padded[1::2, ::2] = 0.5 * (padded[:-1, :] + padded[1:, :])
    fine_padded[1::2, 1::2] = 0.25 * (
        padded[:-1, :-1] + padded[:-1, 1:] + padded[1:, :-1] + padded[1:, 1:]
    )
    return fine_padded[1:mf, 1:mf].reshape(-1).copy()


def interp_strategy(coarse: GridSpec, fine: GridSpec, policies: PolicyPair,
                    v_fine, game_fine: GameInstance, tol: float = 1e-12) -> PolicyPair:
    """Transfer a policy pair to the next finer grid (see module docstring)."""
    fine_ids, coarse_ids = _coincident_maps(coarse, fine)
    alpha_new, _ = improve_max_with_values(game_fine, v_fine, tol=tol)
    alpha = np.array(alpha_new)
    alpha[fine_ids] = np.asarray(policies.alpha)[coarse_ids]
    if game_fine.is_tabular:
        beta = np.array(improve_min(game_fine, alpha, v_fine, tol=tol))
        beta[fine_ids] = np.asarray(policies.beta)[coarse_ids]
    else:
        # continuous min-player field: re-derive from the interpolated value
        beta = improve_min(game_fine, alpha, v_fine, tol=tol)
    return PolicyPair(alpha, beta)


def fmg_solve(problem: ProblemSpec, finest_m: int, n_coarse_levels: Optional[int] = None,
              c: float = 1e-2, config: PiConfig | None = None,
              ) -> tuple[np.ndarray, PolicyPair, list[SolveReport]]:
    """Full coarse-to-fine solve; returns the finest-level value, policies,
    and one report per level (coarsest first).

    `c` scales the per-level thresholds c * h_l^2; the finest level uses
    config.epsilon.  A level that fails to converge raises
    LevelNonConvergence with the reports gathered so far.
    """
    config = config or PiConfig()
    if n_coarse_levels is None:
        n_coarse_levels = default_coarse_levels(finest_m)
    stack = build_level_stack(problem, finest_m, n_coarse_levels, c, config.epsilon)
    reports: list[SolveReport] = []
    v0 = None
    alpha0 = beta0 = None
    v = pol = None
    for li in range(stack.n_levels):
        grid = stack.grids[li]
        game = stack.games[li]
        level_cfg = replace(config, epsilon=stack.thresholds[li])
        exact = exact_solution(problem, grid)
        v, pol, report = solve_game(
            game, alpha0, beta0, v0, level_cfg, exact=exact,
            level_points=grid.m + 1,
        )
        reports.append(report)
        if not report.converged:
            raise LevelNonConvergence(li, grid.m + 1, reports)
        if li + 1 < stack.n_levels:
            fine_grid = stack.grids[li + 1]
            fine_game = stack.games[li + 1]
            v0 = interp_value(grid, fine_grid, v, boundary=problem.boundary)
            pol0 = interp_strategy(grid, fine_grid, pol, v0, fine_game,
                                   tol=config.improvement_tolerance)
            alpha0, beta0 = pol0.alpha, pol0.beta
    return v, pol, reports
