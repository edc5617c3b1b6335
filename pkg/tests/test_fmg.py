import numpy as np
import pytest

from gamemg.fmg import (
    build_level_stack,
    default_coarse_levels,
    fmg_solve,
    interp_strategy,
    interp_value,
)
from gamemg.pde import (
    STOP,
    GridSpec,
    _parabola_gap,
    build_game,
    double_stop_problem,
    isaacs_sin_problem,
    stopping_parabola_problem,
)
from gamemg.policy import PiConfig, solve_game


# -- value interpolation ------------------------------------------------------

def test_interp_value_preserves_constants():
    coarse = GridSpec(m=4, dim=2)
    fine = GridSpec(m=8, dim=2)
    v = np.full(coarse.n_states, 3.5)
    out = interp_value(coarse, fine, v, boundary=lambda p: np.full(p.shape[0], 3.5))
    assert np.allclose(out, 3.5, atol=1e-15)


def test_interp_value_1d_midpoint():
    # coarse values 0 at the boundary x=0 and 1 at x=0.5: the new fine point
    # x=0.25 is the average 0.5
    coarse = GridSpec(m=2, dim=1)
    fine = GridSpec(m=4, dim=1)
    out = interp_value(coarse, fine, np.array([1.0]),
                       boundary=lambda p: np.zeros(p.shape[0]))
    assert np.allclose(out, [0.5, 1.0, 0.5])


def test_interp_value_2d_cell_center_is_four_point_mean():
    coarse = GridSpec(m=4, dim=2)
    fine = GridSpec(m=8, dim=2)
    rng = np.random.default_rng(0)
    v = rng.standard_normal(coarse.n_states)
    out = interp_value(coarse, fine, v, boundary=lambda p: np.zeros(p.shape[0]))
    # fine point (3, 3) sits between coarse points (1,1), (2,1), (1,2), (2,2)
    target = fine.index((3, 3))
    corners = [coarse.index(c) for c in ((1, 1), (2, 1), (1, 2), (2, 2))]
    assert out[target] == pytest.approx(np.mean(v[corners]), abs=1e-14)
    # coincident point copies
    assert out[fine.index((4, 4))] == pytest.approx(v[coarse.index((2, 2))])


def test_interp_value_rejects_non_nested():
    with pytest.raises(ValueError):
        interp_value(GridSpec(m=4, dim=2), GridSpec(m=10, dim=2), np.zeros(9))


# -- strategy interpolation -----------------------------------------------------

def test_interp_strategy_copies_coincident_and_stops_inside_region():
    prob = stopping_parabola_problem()
    coarse = GridSpec(m=16, dim=2)
    fine = GridSpec(m=32, dim=2)
    game_c = build_game(prob, coarse)
    game_f = build_game(prob, fine)
    v_c, pol_c, rep = solve_game(game_c, config=PiConfig(epsilon=1e-10))
    assert rep.converged
    v_f = interp_value(coarse, fine, v_c, boundary=prob.boundary)
    pol_f = interp_strategy(coarse, fine, pol_c, v_f, game_f)
    # coincident points carry the coarse decision
    for ci, cj in ((4, 4), (8, 3), (11, 13)):
        fi = fine.index((2 * ci, 2 * cj))
        assert pol_f.alpha[fi] == pol_c.alpha[coarse.index((ci, cj))]
    # new points deep inside the stop region come out stopped, matching the
    # converged fine policy there
    gap = _parabola_gap(fine.points())
    v_conv, pol_conv, _ = solve_game(game_f, config=PiConfig(epsilon=1e-10))
    deep = gap < -3 * fine.h
    assert np.all(pol_f.alpha[deep] == STOP)
    assert np.all(pol_conv.alpha[deep] == STOP)


def test_interp_strategy_singleton_tabular():
    prob = double_stop_problem()
    coarse = GridSpec(m=8, dim=1)
    fine = GridSpec(m=16, dim=1)
    game_c = build_game(prob, coarse)
    game_f = build_game(prob, fine)
    v_c, pol_c, _ = solve_game(game_c, config=PiConfig(epsilon=1e-10))
    v_f = interp_value(coarse, fine, v_c, boundary=prob.boundary)
    pol_f = interp_strategy(coarse, fine, pol_c, v_f, game_f)
    # beta is always a valid index for the chosen alpha
    for x in range(game_f.n_states):
        assert pol_f.beta[x] < game_f.n_min_actions(x, pol_f.alpha[x])


# -- the full multilevel driver ---------------------------------------------------

def test_level_thresholds_exact():
    prob = isaacs_sin_problem()
    stack = build_level_stack(prob, finest_m=32, n_coarse_levels=3, c=0.01,
                              epsilon=1e-9)
    hs = [g.h for g in stack.grids]
    assert hs == [1 / 4, 1 / 8, 1 / 16, 1 / 32]
    assert stack.thresholds[:-1] == [0.01 * h * h for h in hs[:-1]]
    assert stack.thresholds[-1] == 1e-9


def test_default_coarse_levels():
    assert default_coarse_levels(256) == 6   # down to m = 4
    assert default_coarse_levels(4) == 0
    assert default_coarse_levels(48) == 3    # 48 -> 24 -> 12 -> 6 (stop: 3 < 4)


def test_divisibility_enforced():
    with pytest.raises(ValueError):
        build_level_stack(isaacs_sin_problem(), 48, 5, 0.01, 1e-9)


def test_zero_levels_equals_plain_solve():
    prob = isaacs_sin_problem()
    v1, _, reports = fmg_solve(prob, 16, n_coarse_levels=0,
                               config=PiConfig(epsilon=1e-9))
    game = build_game(prob, GridSpec(m=16, dim=2))
    v2, _, rep2 = solve_game(game, config=PiConfig(epsilon=1e-9),
                             level_points=17)
    assert len(reports) == 1
    assert np.array_equal(v1, v2)
    assert [(r.ki, r.nkj) for r in reports[0].records] == \
        [(r.ki, r.nkj) for r in rep2.records]


def test_fmg_reaches_same_fixed_point_as_cold_start():
    for prob in (isaacs_sin_problem(), stopping_parabola_problem()):
        eps = 1e-8
        v_f, _, _ = fmg_solve(prob, 32, c=1e-2, config=PiConfig(epsilon=eps))
        game = build_game(prob, GridSpec(m=32, dim=2))
        v_c, _, rep = solve_game(game, config=PiConfig(epsilon=eps, max_outer=2000))
        assert rep.converged
        assert np.max(np.abs(v_f - v_c)) <= 2 * eps


def test_fmg_reports_are_coarse_to_fine():
    _, _, reports = fmg_solve(double_stop_problem(), 64, c=1e-2,
                              config=PiConfig(epsilon=1e-10))
    points = [r.level_points for r in reports]
    assert points == sorted(points)
    assert points[0] == 5 and points[-1] == 65


def test_fine_level_iterations_grow_sublinearly():
    """Cold outer counts on the free-boundary game grow linearly with the
    grid diameter; the coarse-to-fine warm start keeps the fine-level count
    small and nearly flat."""
    prob = stopping_parabola_problem()
    cold = []
    warm = []
    for m in (32, 64, 128):
        game = build_game(prob, GridSpec(m=m, dim=2))
        _, _, rep = solve_game(game, config=PiConfig(epsilon=1e-10, max_outer=3000))
        cold.append(len(rep.records))
        _, _, reports = fmg_solve(prob, m, c=1e-2, config=PiConfig(epsilon=1e-10))
        warm.append(len(reports[-1].records))
    assert cold[2] >= 2 * cold[0]          # at least linear growth in m
    assert all(w <= 12 for w in warm)
    assert warm[2] <= warm[0] + 4          # nearly flat


def test_fmg_double_stop_matches_cold_start():
    prob = double_stop_problem()
    v_f, _, _ = fmg_solve(prob, 64, c=1e-2, config=PiConfig(epsilon=1e-10))
    game = build_game(prob, GridSpec(m=64, dim=1))
    v_c, _, rep = solve_game(game, config=PiConfig(epsilon=1e-10, max_outer=2000))
    assert rep.converged
    assert np.max(np.abs(v_f - v_c)) <= 2e-10


def test_fmg_smooth_game_needs_few_rounds_per_level():
    _, _, reports = fmg_solve(isaacs_sin_problem(), 128, c=0.1,
                              config=PiConfig(epsilon=0.001 / 128 ** 2))
    assert all(len(r.records) <= 4 for r in reports)
