"""Upwind finite-difference discretisation of the benchmark games.

Each continuous problem lives on the open unit cube with Dirichlet data on
the boundary.  Second derivatives use the centred three-point stencil and
first derivatives are one-sided, switched on the sign of the drift, so all
stencil weights are nonnegative and the discrete equations form a game with
substochastic transition rows.  Per action pair the stencil is normalised by

    c = 2 * sum(diffusion) + h * sum(|drift|)  (+ h^2 * lambda via discount)

which turns the discrete equation into fixed-point form: neighbour weights
become transition probabilities and the running reward is scaled by h^2/c.
Rows next to the boundary send the corresponding mass to the Dirichlet data,
which is folded into the reward, so row sums drop below one there.

Two benchmark games have continuous action sets (the minimiser ranges over
the whole plane with a quadratic cost, the maximiser over the unit ball).
Their improvement steps are closed-form: per axis the candidate minimisers
are the forward and backward difference quotients, kept when their upwind
sign condition is self-consistent, with the kink value as fallback; the
maximiser's candidates are the normalised difference-quotient gradients.
Candidates (plus the incumbent action) are compared by the value of the
normalised one-step map, which keeps the policy-iteration value sequences
monotone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .csr import CsrMatrix
from .game import GameInstance

CONTINUE = 0
STOP = 1

_TINY_GRADIENT = 1e-14


class UnsupportedSchemeError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the unit cube; only interior points are states."""

    m: int
    dim: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least two subdivisions per axis")
        if self.dim not in (1, 2):
            raise ValueError("only dimensions 1 and 2 are wired up")

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def points_per_axis(self) -> int:
        return self.m - 1

    @property
    def n_states(self) -> int:
        return (self.m - 1) ** self.dim

    def index(self, coords) -> int:
        """Row-major state index of interior grid coordinates (1-based)."""
        if self.dim == 1:
            return int(coords[0]) - 1
        i, j = int(coords[0]), int(coords[1])
        return (j - 1) * (self.m - 1) + (i - 1)

    def coords(self, index: int):
        """Inverse of `index`."""
        if self.dim == 1:
            return (index + 1,)
        n1 = self.m - 1
        return (index % n1 + 1, index // n1 + 1)

    def points(self) -> np.ndarray:
        """Interior point positions, shape (n_states, dim), row-major."""
        ax = np.arange(1, self.m) * self.h
        if self.dim == 1:
            return ax[:, None]
        x1, x2 = np.meshgrid(ax, ax, indexing="xy")
        return np.column_stack([x1.ravel(), x2.ravel()])


@dataclass(frozen=True)
class ProblemSpec:
    """Continuous benchmark definition.

    `max_space` is "unit-ball" (continuous control in the unit ball),
    "stop-continue" (obstacle game) or "none" (minimiser only on that
    branch); `min_space` is "plane" (control in R^d with cost |b|^2/2) or
    "stop-continue".  Callbacks take an (n, dim) point array.
    """

    name: str
    dim: int
    lam: float
    diffusion: tuple
    forcing: Callable
    boundary: Callable
    max_space: str
    min_space: str
    obstacle: Optional[Callable] = None          # psi2 for the max player's stop
    max_stop_reward: Optional[Callable] = None   # psi1 when MAX stops (both-stop game)
    min_stop_reward: Optional[Callable] = None   # psi2 when MIN stops (both-stop game)
    exact: Optional[Callable] = None
    mixed_derivatives: bool = False
    scheme: str = "upwind"


def isaacs_sin_problem(lam: float = 0.0) -> ProblemSpec:
    """Smooth diffusion game on the unit square with known solution
    sin(x1)*sin(x2); the maximiser steers in the unit ball, the minimiser
    pays |b|^2/2 for drift b."""

    def u(points):
        return np.sin(points[:, 0]) * np.sin(points[:, 1])

    def forcing(points):
        s1, c1 = np.sin(points[:, 0]), np.cos(points[:, 0])
        s2, c2 = np.sin(points[:, 1]), np.cos(points[:, 1])
        uu = s1 * s2
        grad_sq = (c1 * s2) ** 2 + (s1 * c2) ** 2
        grad_norm = np.sqrt(grad_sq)
        lap = -2.0 * uu
        return -(lap + grad_norm - 0.5 * grad_sq - lam * uu)

    return ProblemSpec(
        name="isaacs-sin", dim=2, lam=lam, diffusion=(1.0, 1.0),
        forcing=forcing, boundary=u, max_space="unit-ball", min_space="plane",
        exact=u,
    )


def _parabola_gap(points):
    return points[:, 1] - ((points[:, 0] - 0.5) ** 2 + 0.1)


def stopping_parabola_problem() -> ProblemSpec:
    """Free-boundary game: the maximiser may stop and collect psi2 = 0; the
    continue branch is a 0.5-Laplacian diffusion against the minimiser.
    The optimal continue region is the set above the parabola
    x2 = (x1 - 0.5)^2 + 0.1."""

    def u(points):
        s = _parabola_gap(points)
        return np.where(s >= 0.0, s ** 3, 0.0)

    def forcing(points):
        # residual of the cubic solution; sign flips across the parabola
        s = _parabola_gap(points)
        w = points[:, 0] - 0.5
        lap = 24.0 * s * w ** 2 - 6.0 * s ** 2 + 6.0 * s
        grad_sq = 9.0 * s ** 4 * (4.0 * w ** 2 + 1.0)
        g = 0.5 * lap - 0.5 * grad_sq
        return np.where(s >= 0.0, -g, g)

    def obstacle(points):
        return np.zeros(points.shape[0])

    return ProblemSpec(
        name="stopping-parabola", dim=2, lam=0.0, diffusion=(0.5, 0.5),
        forcing=forcing, boundary=u, max_space="stop-continue",
        min_space="plane", obstacle=obstacle, exact=u,
    )


_STOP_BAR = (2.0 * math.cos(0.09 * math.pi)
             + math.pi * (0.18 - 1.0) * math.sin(0.09 * math.pi)) / 2.0
_STOP_CONST = (_STOP_BAR - math.cos(0.09 * math.pi)
               - 0.09 * math.pi * math.sin(0.09 * math.pi))


def double_stop_problem() -> ProblemSpec:
    """One-dimensional game where either player may stop: the maximiser
    collects -psi_bar, the minimiser pays +psi_bar, and the continue branch
    is a 0.5-Laplacian with running reward 0.5*pi^2*cos(pi*x).  The optimal
    stop regions are x < 0.09 for the minimiser and x > 0.91 for the
    maximiser."""

    def exact(points):
        x = points[:, 0]
        interior = np.cos(np.pi * x) + np.pi * math.sin(0.09 * math.pi) * x + _STOP_CONST
        return np.where(x < 0.09, _STOP_BAR, np.where(x > 1.0 - 0.09, -_STOP_BAR, interior))

    def forcing(points):
        return 0.5 * np.pi ** 2 * np.cos(np.pi * points[:, 0])

    return ProblemSpec(
        name="double-stop", dim=1, lam=0.0, diffusion=(0.5,),
        forcing=forcing, boundary=exact, max_space="stop-continue",
        min_space="stop-continue",
        max_stop_reward=lambda pts: np.full(pts.shape[0], -_STOP_BAR),
        min_stop_reward=lambda pts: np.full(pts.shape[0], _STOP_BAR),
        exact=exact,
    )


BENCHMARKS = {
    "isaacs-sin": isaacs_sin_problem,
    "stopping-parabola": stopping_parabola_problem,
    "double-stop": double_stop_problem,
}


def _neighbor_tables(problem: ProblemSpec, grid: GridSpec):
    """Per state and axis: interior neighbour indices (-1 at the boundary)
    and the Dirichlet value standing in for boundary neighbours."""
    n = grid.n_states
    d = grid.dim
    h = grid.h
    nb_idx = np.full((n, d, 2), -1, dtype=np.int64)
    nb_pts_val = np.zeros((n, d, 2))
    pts = grid.points()
    for axis in range(d):
        for side, sign in ((0, -1.0), (1, +1.0)):
            shifted = pts.copy()
            shifted[:, axis] += sign * h
            on_boundary = (shifted[:, axis] < 0.5 * h) | (shifted[:, axis] > 1.0 - 0.5 * h)
            nb_pts_val[:, axis, side] = np.where(
                on_boundary, problem.boundary(shifted), 0.0
            )
            if d == 1:
                ids = np.arange(n, dtype=np.int64) + int(sign)
            else:
                step = 1 if axis == 0 else grid.m - 1
                ids = np.arange(n, dtype=np.int64) + int(sign) * step
            nb_idx[:, axis, side] = np.where(on_boundary, -1, ids)
    return nb_idx, nb_pts_val


class UpwindGridModel:
    """Action model for grid games with continuous controls.

    Provides the vectorised improvement, evaluation, and assembly callbacks
    consumed by the policy iteration; see the module docstring for the
    candidate construction.  Instances are immutable after construction.
    """

    def __init__(self, problem: ProblemSpec, grid: GridSpec):
        if problem.mixed_derivatives:
            raise UnsupportedSchemeError(
                "mixed second derivatives break the monotone stencil; "
                "only diagonal diffusion is supported"
            )
        if problem.min_space != "plane":
            raise ValueError("the analytic model needs a continuous min player")
        self.problem = problem
        self.grid = grid
        self.h = grid.h
        self.lam = problem.lam
        self.diff = np.asarray(problem.diffusion, dtype=np.float64)
        self.n_states = grid.n_states
        self.dim = grid.dim
        pts = grid.points()
        self.f = np.asarray(problem.forcing(pts), dtype=np.float64)
        self.nb_idx, self.nb_val = _neighbor_tables(problem, grid)
        self.obstacle = None
        if problem.max_space == "stop-continue":
            self.obstacle = np.asarray(problem.obstacle(pts), dtype=np.float64)
        elif problem.max_space != "unit-ball":
            raise ValueError(f"unsupported max action space {problem.max_space!r}")
        self.scheme = problem.scheme
        if self.scheme not in ("upwind", "centered"):
            raise UnsupportedSchemeError(f"unknown scheme {self.scheme!r}")
        self._c0 = 2.0 * float(self.diff.sum())

    # -- building blocks ---------------------------------------------------

    def default_alpha(self):
        if self.obstacle is not None:
            return np.full(self.n_states, STOP, dtype=np.int64)
        return None  # derived from the initial value by one improvement

    def default_beta(self):
        return None

    def _neighbor_values(self, v):
        safe = np.maximum(self.nb_idx, 0)
        return np.where(self.nb_idx >= 0, v[safe], self.nb_val)

    def _gradients(self, v, nb):
        vp = nb[:, :, 1]
        vm = nb[:, :, 0]
        dplus = (vp - v[:, None]) / self.h
        dminus = (v[:, None] - vm) / self.h
        return dplus, dminus

    def _min_b(self, base, dplus, dminus):
        """Per-axis minimiser of (base - b) * Dv + b^2/2 over the upwind
        branches; all three candidate values share the form
        phi(t) = base*t - t^2/2."""
        cand_p = np.where(dplus <= base, base * dplus - 0.5 * dplus ** 2, np.inf)
        cand_m = np.where(dminus > base, base * dminus - 0.5 * dminus ** 2, np.inf)
        kink = 0.5 * base * base
        b = np.where(cand_p <= cand_m, dplus, dminus)
        phi = np.minimum(cand_p, cand_m)
        b = np.where(kink < phi, base, b)
        return b

    def _weights(self, s):
        """Stencil weights and discount for drift coefficients s (n, dim).

        Returns (w_minus, w_plus, mu, c); weights already carry the
        discount factor, so rows of the kernel sum to mu at interior points.
        """
        h = self.h
        if self.scheme == "upwind":
            c = self._c0 + h * np.abs(s).sum(axis=1)
            wp = (self.diff[None, :] + h * np.maximum(s, 0.0)) / c[:, None]
            wm = (self.diff[None, :] + h * np.maximum(-s, 0.0)) / c[:, None]
        else:
            c = np.full(s.shape[0], self._c0)
            wp = (self.diff[None, :] + 0.5 * h * s) / c[:, None]
            wm = (self.diff[None, :] - 0.5 * h * s) / c[:, None]
            if np.any(wp < 0.0) or np.any(wm < 0.0):
                raise UnsupportedSchemeError(
                    "centered differences produced a negative stencil weight; "
                    "use the upwind scheme"
                )
        mu = 1.0 / (1.0 + h * h * self.lam / c)
        return wm, wp, mu, c

    def _one_step(self, s, b_cost, nb):
        """Normalised one-step map at drift s and min-control cost b_cost."""
        wm, wp, mu, c = self._weights(s)
        flow = (wp * nb[:, :, 1]).sum(axis=1) + (wm * nb[:, :, 0]).sum(axis=1)
        return mu * (flow + (self.h ** 2 / c) * (b_cost + self.f))

    def _drift_base(self, alpha):
        """Drift contribution of the max player: his control for the
        unit-ball game, zero for obstacle games."""
        if self.obstacle is None:
            return np.asarray(alpha, dtype=np.float64)
        return np.zeros((self.n_states, self.dim))

    # -- the action-model interface ----------------------------------------

    def improve_min_with_values(self, alpha, v, beta=None, tol=1e-12):
        v = np.asarray(v, dtype=np.float64)
        nb = self._neighbor_values(v)
        dplus, dminus = self._gradients(v, nb)
        base = self._drift_base(alpha)
        stop = (np.asarray(alpha) == STOP) if self.obstacle is not None else None
        b = self._min_b(base, dplus, dminus)
        t_new = self._one_step(base - b, 0.5 * (b * b).sum(axis=1), nb)
        if stop is not None:
            t_new = np.where(stop, self.obstacle, t_new)
        if beta is None:
            return b, t_new
        beta = np.asarray(beta, dtype=np.float64)
        t_inc = self._one_step(base - beta, 0.5 * (beta * beta).sum(axis=1), nb)
        if stop is not None:
            t_inc = np.where(stop, self.obstacle, t_inc)
        keep = t_inc <= t_new + tol * (1.0 + np.abs(t_new))
        if keep.all():
            return beta, t_inc
        new_beta = np.where(keep[:, None], beta, b)
        return new_beta, np.where(keep, t_inc, t_new)

    def improve_max_with_values(self, v, alpha=None, tol=1e-12):
        v = np.asarray(v, dtype=np.float64)
        nb = self._neighbor_values(v)
        dplus, dminus = self._gradients(v, nb)
        if self.obstacle is not None:
            b = self._min_b(np.zeros((self.n_states, self.dim)), dplus, dminus)
            t_cont = self._one_step(-b, 0.5 * (b * b).sum(axis=1), nb)
            fv = np.maximum(t_cont, self.obstacle)
            candidate = np.where(t_cont >= self.obstacle, CONTINUE, STOP).astype(np.int64)
            if alpha is None:
                return candidate, fv
            alpha = np.asarray(alpha, dtype=np.int64)
            inc_val = np.where(alpha == STOP, self.obstacle, t_cont)
            keep = inc_val >= fv - tol * (1.0 + np.abs(fv))
            if keep.all():
                return alpha, fv
            return np.where(keep, alpha, candidate), fv

        # unit-ball maximiser: branch-consistent normalised gradients
        candidates = []
        for combo in range(2 ** self.dim):
            g = np.empty((self.n_states, self.dim))
            for axis in range(self.dim):
                g[:, axis] = dplus[:, axis] if (combo >> axis) & 1 == 0 else dminus[:, axis]
            nrm = np.sqrt((g * g).sum(axis=1))
            a = np.where(nrm[:, None] > _TINY_GRADIENT, g / np.maximum(nrm, _TINY_GRADIENT)[:, None], 0.0)
            candidates.append(a)
        candidates.append(np.zeros((self.n_states, self.dim)))

        best_val = None
        best_a = None
        for a in candidates:
            b = self._min_b(a, dplus, dminus)
            t = self._one_step(a - b, 0.5 * (b * b).sum(axis=1), nb)
            if best_val is None:
                best_val, best_a = t, a
            else:
                better = t > best_val
                best_val = np.where(better, t, best_val)
                best_a = np.where(better[:, None], a, best_a)
        if alpha is None:
            return best_a, best_val
        alpha = np.asarray(alpha, dtype=np.float64)
        b = self._min_b(alpha, dplus, dminus)
        t_inc = self._one_step(alpha - b, 0.5 * (b * b).sum(axis=1), nb)
        keep = t_inc >= best_val - tol * (1.0 + np.abs(best_val))
        fv = np.maximum(best_val, t_inc)
        if keep.all():
            return alpha, fv
        return np.where(keep[:, None], alpha, best_a), fv

    def bellman(self, v):
        return self.improve_max_with_values(v)[1]

    def bellman_fixed_max(self, alpha, v):
        return self.improve_min_with_values(alpha, v)[1]

    def assemble(self, alpha, beta):
        """System (I - M) v = r at the policy pair; boundary mass goes to
        the reward, stop rows become identity rows with reward psi2."""
        beta = np.asarray(beta, dtype=np.float64)
        base = self._drift_base(alpha)
        s = base - beta
        wm, wp, mu, c = self._weights(s)
        reward = mu * (self.h ** 2 / c) * (0.5 * (beta * beta).sum(axis=1) + self.f)
        if self.obstacle is not None:
            stop = np.asarray(alpha) == STOP
            active = ~stop
        else:
            stop = None
            active = np.ones(self.n_states, dtype=bool)

        rows_and_vals = []
        for axis in range(self.dim):
            for side, w in ((0, wm[:, axis]), (1, wp[:, axis])):
                idx = self.nb_idx[:, axis, side]
                weight = mu * w
                interior = (idx >= 0) & active
                boundary = (idx < 0) & active
                reward = reward + np.where(boundary, weight * self.nb_val[:, axis, side], 0.0)
                rows_and_vals.append((
                    np.flatnonzero(interior), idx[interior], -weight[interior]
                ))
        if stop is not None:
            reward = np.where(stop, self.obstacle, reward)
        all_states = np.arange(self.n_states, dtype=np.int64)
        rows = np.concatenate([r for r, _, _ in rows_and_vals] + [all_states])
        cols = np.concatenate([c_ for _, c_, _ in rows_and_vals] + [all_states])
        vals = np.concatenate([v_ for _, _, v_ in rows_and_vals] + [np.ones(self.n_states)])
        matrix = CsrMatrix.square_from_coo(self.n_states, rows, cols, vals)
        return matrix, reward


def build_game_isaacs(problem: ProblemSpec, grid: GridSpec) -> GameInstance:
    """Discretise a plain (no obstacle) diffusion game."""
    if problem.max_space != "unit-ball":
        raise ValueError("build_game_isaacs expects a unit-ball max player")
    return GameInstance.analytic(UpwindGridModel(problem, grid))


def build_game_stopping(problem: ProblemSpec, grid: GridSpec) -> GameInstance:
    """Discretise an optimal-stopping game (max player may stop)."""
    if problem.max_space != "stop-continue" or problem.min_space != "plane":
        raise ValueError("build_game_stopping expects a stop/continue max player "
                         "and continuous min player")
    return GameInstance.analytic(UpwindGridModel(problem, grid))


def build_game_double_stop(problem: ProblemSpec, grid: GridSpec) -> GameInstance:
    """Discretise the one-dimensional game where both players may stop.

    Tabular layout per state: max action 0 = continue with min actions
    {0 = continue (diffusion row), 1 = stop (reward psi2)}; max action
    1 = stop (reward psi1, single dummy min action).
    """
    if problem.dim != 1 or grid.dim != 1:
        raise ValueError("the double-stopping game is one-dimensional")
    if problem.max_space != "stop-continue" or problem.min_space != "stop-continue":
        raise ValueError("build_game_double_stop expects stop/continue action sets")
    h = grid.h
    pts = grid.points()
    n = grid.n_states
    nb_idx, nb_val = _neighbor_tables(problem, grid)
    c = 2.0 * problem.diffusion[0]
    w = problem.diffusion[0] / c
    run = (h * h / c) * np.asarray(problem.forcing(pts), dtype=np.float64)
    psi1 = np.asarray(problem.max_stop_reward(pts), dtype=np.float64)
    psi2 = np.asarray(problem.min_stop_reward(pts), dtype=np.float64)
    kernel = []
    rewards = []
    for x in range(n):
        row = []
        r_cont = run[x]
        for side in (0, 1):
            y = nb_idx[x, 0, side]
            if y >= 0:
                row.append((int(y), w))
            else:
                r_cont += w * nb_val[x, 0, side]
        kernel.append([[row, []], [[]]])
        rewards.append([[float(r_cont), float(psi2[x])], [float(psi1[x])]])
    return GameInstance.tabular(
        kernel, rewards,
        default_alpha=np.full(n, STOP, dtype=np.int64),
        default_beta=np.zeros(n, dtype=np.int64),
    )


def build_game(problem: ProblemSpec, grid: GridSpec) -> GameInstance:
    if problem.min_space == "stop-continue":
        return build_game_double_stop(problem, grid)
    if problem.max_space == "stop-continue":
        return build_game_stopping(problem, grid)
    return build_game_isaacs(problem, grid)


def exact_solution(problem: ProblemSpec, grid: GridSpec):
    """Closed-form solution at the interior grid points, or None."""
    if problem.exact is None:
        return None
    return np.asarray(problem.exact(grid.points()), dtype=np.float64)


def analytic_improvements(problem: ProblemSpec, grid: GridSpec) -> UpwindGridModel:
    """The closed-form improvement callbacks for a continuous-control game."""
    return UpwindGridModel(problem, grid)


def parse_problem_config(path) -> ProblemSpec:
    """Custom problems: a small key/value text format selecting a built-in
    variant and overriding its numeric parameters.  No expression parsing.

    Keys: `variant <name>` (required), `lambda <float>`.
    """
    variant = None
    lam = None
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, *rest = line.split()
            if key == "variant":
                variant = rest[0]
            elif key == "lambda":
                lam = float(rest[0])
            else:
                raise ValueError(f"unknown problem config key {key!r}")
    if variant not in BENCHMARKS:
        raise ValueError(f"config must select a variant from {sorted(BENCHMARKS)}")
    if variant == "isaacs-sin" and lam is not None:
        return isaacs_sin_problem(lam=lam)
    if lam not in (None, 0.0):
        raise ValueError(f"variant {variant} only supports lambda = 0")
    return BENCHMARKS[variant]()
