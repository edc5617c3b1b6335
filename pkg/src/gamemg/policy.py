"""Nested policy iteration for two-player games.

The outer loop improves the maximiser's policy; each outer step values the
current max policy by running the one-player policy iteration for the
minimiser, and every inner step solves one linear system (I - M) v = r.
Warm starts follow the nesting: the inner loop starts from the outer loop's
last value and min policy, and the linear solver starts from the previous
value iterate.

Improvement operators retain the incumbent action whenever it is within a
small slack of the best candidate.  That tie-break prevents policy cycling
from floating-point noise and makes "policy unchanged" an exact termination
test.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
import numpy as np

from . import game as game_mod
from .amg import AmgConfig, amg_solve, setup_hierarchy
from .csr import CsrMatrix
from .directlu import BandLU, SingularMatrixError
from .game import (
    GameInstance,
    OuterRecord,
    PolicyPair,
    SolveReport,
    _max_slots,
    error_norms,
    min_action_values,
)

MONOTONE_SLACK = 1e-9  # relative slack when checking value monotonicity
PAIR_TRACK_LIMIT = 10_000  # track policy-pair revisits only below this size


class LinearSolverError(RuntimeError):
    def __init__(self, message, inner_iteration=None):
        super().__init__(message)
        self.inner_iteration = inner_iteration


@dataclass
class PiConfig:
    """Stopping rule and solver selection for the policy iterations.

    epsilon: residual threshold; iterations stop once ||F(v) - v||_inf
    falls below it.  linear_solver is "amg" or "direct".
    """

    epsilon: float = 1e-10
    max_outer: int = 2000
    max_inner: int = 20000
    linear_solver: str = "amg"
    amg: AmgConfig = field(default_factory=AmgConfig)
    improvement_tolerance: float = 1e-12

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be at least 1")
        if self.linear_solver not in ("amg", "direct"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


def improve_min(game: GameInstance, alpha, v, beta=None, tol=1e-12):
    """Pointwise argmin of the one-step value over the min player's actions.

    If `beta` is given and already attains the minimum within the slack,
    it is returned unchanged (same array object).
    """
    new_beta, _ = improve_min_with_values(game, alpha, v, beta, tol)
    return new_beta


def improve_min_with_values(game: GameInstance, alpha, v, beta=None, tol=1e-12):
    """As improve_min, also returning the improved one-step values F_alpha(v)."""
    if not game.is_tabular:
        return game.action_model.improve_min_with_values(alpha, v, beta, tol)
    w = min_action_values(game, v)
    per_ma_min = np.minimum.reduceat(w, game.mi_ptr[:-1])
    slots = _max_slots(game, alpha)
    best = per_ma_min[slots]
    pos = np.arange(w.size, dtype=np.int64)
    big = np.iinfo(np.int64).max
    attain = np.where(w == per_ma_min[game.ma_of_mi], pos, big)
    first = np.minimum.reduceat(attain, game.mi_ptr[:-1])
    candidate = (first - game.mi_ptr[:-1])[slots]
    if beta is None:
        return candidate, best
    beta = np.asarray(beta, dtype=np.int64)
    incumbent_vals = w[game_mod._min_slots(game, alpha, beta)]
    keep = incumbent_vals <= best + tol * (1.0 + np.abs(best))
    if keep.all():
        return beta, incumbent_vals
    new_beta = np.where(keep, beta, candidate)
    return new_beta, np.where(keep, incumbent_vals, best)


def improve_max(game: GameInstance, v, alpha=None, tol=1e-12):
    """Pointwise argmax of F(v; x, a), with incumbent retention as above."""
    new_alpha, _ = improve_max_with_values(game, v, alpha, tol)
    return new_alpha


def improve_max_with_values(game: GameInstance, v, alpha=None, tol=1e-12):
    """As improve_max, also returning F(v) (shared computation)."""
    if not game.is_tabular:
        return game.action_model.improve_max_with_values(v, alpha, tol)
    u = np.minimum.reduceat(min_action_values(game, v), game.mi_ptr[:-1])
    per_state_max = np.maximum.reduceat(u, game.ma_ptr[:-1])
    pos = np.arange(u.size, dtype=np.int64)
    big = np.iinfo(np.int64).max
    attain = np.where(u == per_state_max[game.state_of_ma], pos, big)
    first = np.minimum.reduceat(attain, game.ma_ptr[:-1])
    candidate = first - game.ma_ptr[:-1]
    if alpha is None:
        return candidate, per_state_max
    alpha = np.asarray(alpha, dtype=np.int64)
    incumbent_vals = u[_max_slots(game, alpha)]
    keep = incumbent_vals >= per_state_max - tol * (1.0 + np.abs(per_state_max))
    if keep.all():
        return alpha, per_state_max
    new_alpha = np.where(keep, alpha, candidate)
    return new_alpha, per_state_max


def _trivial_rows(a: CsrMatrix):
    """Rows holding only their diagonal; their unknowns are fixed directly."""
    lens = np.diff(a.row_offsets)
    trivial = np.zeros(a.n, dtype=bool)
    one = np.flatnonzero(lens == 1)
    if one.size:
        trivial[one] = a.col_indices[a.row_offsets[one]] == one
    return trivial


def solve_policy_system(a: CsrMatrix, rhs, v0, config: PiConfig):
    """Solve (I - M) v = r, eliminating trivially determined rows first.

    Stop actions produce identity rows; substituting them keeps the reduced
    matrix irreducible and the multigrid coarsening healthy.  Returns the
    full-length solution and the AMG cycle count (None for the direct path).
    """
    trivial = _trivial_rows(a)
    if trivial.all():
        diag = a.diagonal()
        return rhs / diag, 0 if config.linear_solver == "amg" else None
    if trivial.any():
        keep = np.flatnonzero(~trivial)
        fixed = np.zeros(a.n)
        diag = a.diagonal()
        fixed[trivial] = rhs[trivial] / diag[trivial]
        reduced = a.submatrix(keep)
        rhs_red = rhs[keep] - a.matvec(fixed)[keep]
        v0_red = None if v0 is None else np.asarray(v0)[keep]
    else:
        keep = None
        reduced, rhs_red, v0_red = a, np.asarray(rhs, dtype=np.float64), v0

    if config.linear_solver == "direct":
        x = BandLU(reduced).solve(rhs_red)
        cycles = None
    else:
        result = amg_solve(setup_hierarchy(reduced, config.amg), rhs_red, v0_red)
        if not result.converged:
            # accept iterates whose residual sits at the float64 rounding
            # floor; anything above that is a genuine solver failure
            scale = float(np.linalg.norm(rhs_red))
            if result.u.size:
                scale += float(np.max(np.abs(reduced.values)) * np.linalg.norm(result.u))
            if result.residual_norm > 64.0 * np.finfo(np.float64).eps * max(scale, 1.0):
                raise LinearSolverError(
                    f"multigrid stalled at residual {result.residual_norm:.3e} "
                    f"after {result.cycles} cycles"
                )
        x = result.u
        cycles = result.cycles
    if keep is None:
        return x, cycles
    full = np.zeros(a.n)
    full[trivial] = rhs[trivial] / a.diagonal()[trivial]
    full[keep] = x
    return full, cycles


@dataclass
class InnerResult:
    v: np.ndarray
    beta: np.ndarray
    nkj: int
    amg_cycles: list
    res_inf: float
    monotone_violations: int
    hit_limit: bool


def solve_inner(game: GameInstance, alpha, beta0, v0, config: PiConfig,
                pair_tracker=None) -> InnerResult:
    """One-player policy iteration for the minimiser, at fixed alpha.

    Alternates a policy evaluation (linear solve, warm-started from the
    current value) with a min-policy improvement; stops when the one-player
    residual drops below epsilon or the policy stops changing.
    """
    v = np.asarray(v0, dtype=np.float64)
    beta = beta0 if beta0 is not None else improve_min(game, alpha, v,
                                                       tol=config.improvement_tolerance)
    cycles = []
    violations = 0
    nkj = 0
    res_inf = np.inf
    v_prev = None
    hit_limit = True
    while nkj < config.max_inner:
        a, rhs = game_mod.assemble_linear_system(game, alpha, beta)
        if pair_tracker is not None:
            pair_tracker.record(alpha, beta)
        try:
            v_new, amg_cycles = solve_policy_system(a, rhs, v, config)
        except (LinearSolverError, SingularMatrixError) as exc:
            raise LinearSolverError(
                f"{exc} (inner iteration {nkj + 1})", inner_iteration=nkj + 1
            ) from exc
        nkj += 1
        cycles.append(amg_cycles)
        if v_prev is not None:
            slack = MONOTONE_SLACK * (1.0 + float(np.max(np.abs(v_new))))
            if np.any(v_new > v_prev + slack):
                violations += 1
        v_prev = v_new
        v = v_new
        beta_new, w = improve_min_with_values(game, alpha, v, beta,
                                              config.improvement_tolerance)
        res_inf = float(np.max(np.abs(w - v)))
        if res_inf <= config.epsilon:
            beta = beta_new
            hit_limit = False
            break
        if beta_new is beta or np.array_equal(beta_new, beta):
            beta = beta_new
            hit_limit = False
            break
        beta = beta_new
    return InnerResult(v, beta, nkj, cycles, res_inf, violations, hit_limit)


class _PairTracker:
    """Detects revisited (alpha, beta) pairs within one solve."""

    def __init__(self):
        self.seen = set()
        self.repeats = 0

    def record(self, alpha, beta):
        key = (np.asarray(alpha).tobytes(), np.asarray(beta).tobytes())
        if key in self.seen:
            self.repeats += 1
        else:
            self.seen.add(key)


def _rebase_beta(game: GameInstance, alpha, beta):
    """Warm-started min policies are stored relative to the max policy; when
    alpha changes at a state the old index may exceed the new action count,
    so clip it (the next improvement re-optimises those states anyway)."""
    if beta is None or not game.is_tabular:
        return beta
    slots = _max_slots(game, alpha)
    counts = game.mi_ptr[slots + 1] - game.mi_ptr[slots]
    clipped = np.minimum(np.asarray(beta, dtype=np.int64), counts - 1)
    return clipped if np.any(clipped != beta) else beta


def default_policies(game: GameInstance):
    """Builder-provided starting policies; first action for plain tabular
    games.  A missing beta is derived by a min improvement later."""
    alpha = game.default_alpha
    beta = game.default_beta
    if alpha is None and game.is_tabular:
        alpha = np.zeros(game.n_states, dtype=np.int64)
    return alpha, beta


def solve_game(game: GameInstance, alpha0=None, beta0=None, v0=None,
               config: PiConfig | None = None, exact=None,
               level_points=None) -> tuple[np.ndarray, PolicyPair, SolveReport]:
    """Nested policy iteration for the full two-player game.

    Returns the value vector, the final policy pair, and a report with one
    record per outer iteration.  Non-convergence (outer or inner limit hit)
    is reported through the report's `converged` flag, never silently.
    """
    config = config or PiConfig()
    if v0 is None:
        v0 = np.zeros(game.n_states)
    v = np.asarray(v0, dtype=np.float64).copy()
    d_alpha, d_beta = default_policies(game)
    alpha = d_alpha if alpha0 is None else alpha0
    beta = d_beta if beta0 is None else beta0
    if alpha is None:
        alpha, _ = improve_max_with_values(game, v, tol=config.improvement_tolerance)

    report = SolveReport(records=[], level_points=level_points)
    report.initial_policy = "caller" if alpha0 is not None else (
        "builder-default" if d_alpha is not None else "improved-from-v0")
    tracker = None
    if game.is_tabular and game.n_states <= PAIR_TRACK_LIMIT:
        tracker = _PairTracker()

    v_prev_outer = None
    for ki in range(1, config.max_outer + 1):
        t0 = time.perf_counter()
        inner = solve_inner(game, alpha, _rebase_beta(game, alpha, beta), v,
                            config, tracker)
        v, beta = inner.v, inner.beta
        report.inner_monotone_violations += inner.monotone_violations
        alpha_new, fv = improve_max_with_values(game, v, alpha,
                                                config.improvement_tolerance)
        diff = fv - v
        res_inf = float(np.max(np.abs(diff)))
        res_rms = float(np.sqrt(np.mean(diff * diff)))
        err_inf = err_rms = None
        if exact is not None:
            err_inf, err_rms = error_norms(v, exact)
        report.records.append(OuterRecord(
            ki, inner.nkj, inner.amg_cycles, res_inf, res_rms,
            err_inf, err_rms, time.perf_counter() - t0,
        ))
        if v_prev_outer is not None:
            slack = MONOTONE_SLACK * (1.0 + float(np.max(np.abs(v))))
            if np.any(v < v_prev_outer - slack):
                report.outer_monotone_violations += 1
        v_prev_outer = v
        if inner.hit_limit:
            report.termination = "max_inner"
            report.converged = False
            alpha = alpha_new
            break
        if res_inf <= config.epsilon:
            report.termination = "residual"
            report.converged = True
            alpha = alpha_new
            break
        if alpha_new is alpha or np.array_equal(alpha_new, alpha):
            report.termination = "policy_fixed"
            report.converged = True
            break
        alpha = alpha_new
    else:
        report.termination = "max_outer"
        report.converged = False
    if tracker is not None:
        report.policy_pair_repeats = tracker.repeats
    return v, PolicyPair(alpha, beta), report
