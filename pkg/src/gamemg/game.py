"""Tabular zero-sum stochastic games and the dynamic programming operator.

A game is a finite state set where the maximising player picks an action,
the minimising player answers, and the pair determines a reward and a
substochastic transition row.  Discounting and boundary absorption are both
folded into the kernel: every stored row q sums to at most one, and strictly
less wherever the game can terminate.

Value vectors are plain float ndarrays.  The operator F maps v to

    F(v; x) = max_a min_b ( sum_y q(y|x,a,b) v(y) + r(x,a,b) )

and is monotone and a sup-norm contraction with factor max-row-sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .csr import CsrMatrix

ROW_SUM_SLACK = 1e-12


class FiniteEnumeration:
    """Action model marker: optimise by enumerating the stored tables."""

    def __repr__(self):
        return "FiniteEnumeration()"


@dataclass
class GameInstance:
    """Immutable game data; see module docstring for conventions.

    Tabular games store a three-level ragged layout: states own max-action
    slots (`ma_ptr`), max-action slots own min-action slots (`mi_ptr`), and
    each min-action slot owns a reward and a sparse kernel row.  Games with
    continuous action sets carry an analytic action model instead and leave
    the tables empty.
    """

    n_states: int
    action_model: object
    ma_ptr: Optional[np.ndarray] = None
    mi_ptr: Optional[np.ndarray] = None
    reward: Optional[np.ndarray] = None
    ker_ptr: Optional[np.ndarray] = None
    ker_idx: Optional[np.ndarray] = None
    ker_val: Optional[np.ndarray] = None
    # builder-provided starting policies (e.g. "stop everywhere")
    default_alpha: Optional[np.ndarray] = None
    default_beta: Optional[np.ndarray] = None
    state_of_ma: Optional[np.ndarray] = field(default=None, repr=False)
    ma_of_mi: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_tabular(self) -> bool:
        return self.ma_ptr is not None

    def n_max_actions(self, x: int) -> int:
        return int(self.ma_ptr[x + 1] - self.ma_ptr[x])

    def n_min_actions(self, x: int, a: int) -> int:
        s = self.ma_ptr[x] + a
        return int(self.mi_ptr[s + 1] - self.mi_ptr[s])

    @staticmethod
    def tabular(kernel, reward, default_alpha=None, default_beta=None) -> "GameInstance":
        """Build from nested lists: kernel[x][a][b] is a list of (y, q) pairs
        and reward[x][a][b] a scalar."""
        n = len(kernel)
        if n == 0:
            raise ValueError("a game needs at least one state")
        ma_ptr = [0]
        mi_ptr = [0]
        rewards = []
        ker_ptr = [0]
        ker_idx = []
        ker_val = []
        for x in range(n):
            if len(kernel[x]) == 0:
                raise ValueError(f"state {x} has no max-player actions")
            ma_ptr.append(ma_ptr[-1] + len(kernel[x]))
            for a, rows in enumerate(kernel[x]):
                if len(rows) == 0:
                    raise ValueError(f"state {x}, action {a} has no min-player actions")
                mi_ptr.append(mi_ptr[-1] + len(rows))
                for b, row in enumerate(rows):
                    rewards.append(reward[x][a][b])
                    total = 0.0
                    for y, q in row:
                        if not (0 <= y < n):
                            raise ValueError(f"kernel target {y} out of range at ({x},{a},{b})")
                        if q < 0:
                            raise ValueError(f"negative kernel weight at ({x},{a},{b})")
                        ker_idx.append(y)
                        ker_val.append(q)
                        total += q
                    if total > 1.0 + ROW_SUM_SLACK:
                        raise ValueError(
                            f"kernel row at ({x},{a},{b}) sums to {total}, above 1"
                        )
                    ker_ptr.append(len(ker_idx))
        rewards = np.asarray(rewards, dtype=np.float64)
        if not np.all(np.isfinite(rewards)):
            raise ValueError("rewards must be finite")
        game = GameInstance(
            n_states=n,
            action_model=FiniteEnumeration(),
            ma_ptr=np.asarray(ma_ptr, dtype=np.int64),
            mi_ptr=np.asarray(mi_ptr, dtype=np.int64),
            reward=rewards,
            ker_ptr=np.asarray(ker_ptr, dtype=np.int64),
            ker_idx=np.asarray(ker_idx, dtype=np.int64),
            ker_val=np.asarray(ker_val, dtype=np.float64),
            default_alpha=None if default_alpha is None else np.asarray(default_alpha, dtype=np.int64),
            default_beta=None if default_beta is None else np.asarray(default_beta, dtype=np.int64),
        )
        game.state_of_ma = np.repeat(np.arange(n, dtype=np.int64), np.diff(game.ma_ptr))
        game.ma_of_mi = np.repeat(
            np.arange(game.ma_ptr[-1], dtype=np.int64), np.diff(game.mi_ptr)
        )
        return game

    @staticmethod
    def analytic(model) -> "GameInstance":
        """Wrap a model with vectorised improvement/assembly callbacks."""
        return GameInstance(
            n_states=model.n_states,
            action_model=model,
            default_alpha=model.default_alpha(),
            default_beta=model.default_beta(),
        )


@dataclass
class PolicyPair:
    """Pure stationary strategies: alpha per state for MAX, beta per state
    for MIN (beta is read relative to the current alpha)."""

    alpha: np.ndarray
    beta: np.ndarray


class ValueIterationResult(NamedTuple):
    values: np.ndarray
    iterations: int
    converged: bool


@dataclass
class OuterRecord:
    """One row of a solve report, mirroring the benchmark table columns."""

    ki: int
    nkj: int
    amg_iters: list
    res_inf: float
    res_rms: float
    err_inf: Optional[float]
    err_rms: Optional[float]
    elapsed_seconds: float


@dataclass
class SolveReport:
    records: list
    termination: str = ""
    converged: bool = False
    initial_policy: str = ""
    level_points: Optional[int] = None
    outer_monotone_violations: int = 0
    inner_monotone_violations: int = 0
    policy_pair_repeats: int = 0

    def total_inner_iterations(self) -> int:
        return sum(r.nkj for r in self.records)


def _check_values(game: GameInstance, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (game.n_states,):
        raise ValueError(f"value vector has shape {v.shape}, expected ({game.n_states},)")
    if not np.all(np.isfinite(v)):
        raise ValueError("value vector has non-finite entries")
    return v


def segment_sums(vals, ptr) -> np.ndarray:
    """Per-segment sums with left-to-right accumulation; empty segments are 0.

    Strictly sequential within each segment, so results match a per-state
    loop bit for bit (pairwise summation would not).
    """
    out = np.zeros(ptr.size - 1)
    _kernels.segment_sums(np.ascontiguousarray(vals, dtype=np.float64), ptr, out)
    return out


def min_action_values(game: GameInstance, v) -> np.ndarray:
    """One-step value of every (state, max-action, min-action) slot."""
    return segment_sums(game.ker_val * v[game.ker_idx], game.ker_ptr) + game.reward


def max_action_values(game: GameInstance, v) -> np.ndarray:
    """min over the min player, for every (state, max-action) slot."""
    return np.minimum.reduceat(min_action_values(game, v), game.mi_ptr[:-1])


def bellman(game: GameInstance, v) -> np.ndarray:
    """Apply the dynamic programming operator F."""
    v = _check_values(game, v)
    if not game.is_tabular:
        return game.action_model.bellman(v)
    return np.maximum.reduceat(max_action_values(game, v), game.ma_ptr[:-1])


def bellman_fixed_max(game: GameInstance, alpha, v) -> np.ndarray:
    """F with the max replaced by evaluation at a = alpha(x)."""
    v = _check_values(game, v)
    if not game.is_tabular:
        return game.action_model.bellman_fixed_max(alpha, v)
    slots = _max_slots(game, alpha)
    return np.minimum.reduceat(min_action_values(game, v), game.mi_ptr[:-1])[slots]


def residual(game: GameInstance, v) -> tuple[float, float]:
    """Sup-norm and root-mean-square norm of F(v) - v."""
    v = _check_values(game, v)
    r = bellman(game, v) - v
    return float(np.max(np.abs(r))), float(np.sqrt(np.mean(r * r)))


def error_norms(v, u_exact) -> tuple[float, float]:
    v = np.asarray(v, dtype=np.float64)
    u_exact = np.asarray(u_exact, dtype=np.float64)
    if v.shape != u_exact.shape:
        raise ValueError("value vectors have different lengths")
    e = v - u_exact
    return float(np.max(np.abs(e))), float(np.sqrt(np.mean(e * e)))


def _max_slots(game: GameInstance, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=np.int64)
    if alpha.shape != (game.n_states,):
        raise ValueError("alpha has the wrong length")
    counts = np.diff(game.ma_ptr)
    if np.any(alpha < 0) or np.any(alpha >= counts):
        bad = int(np.argmax((alpha < 0) | (alpha >= counts)))
        raise ValueError(f"alpha action index out of range at state {bad}")
    return game.ma_ptr[:-1] + alpha


def _min_slots(game: GameInstance, alpha, beta) -> np.ndarray:
    slots = _max_slots(game, alpha)
    beta = np.asarray(beta, dtype=np.int64)
    if beta.shape != (game.n_states,):
        raise ValueError("beta has the wrong length")
    counts = game.mi_ptr[slots + 1] - game.mi_ptr[slots]
    if np.any(beta < 0) or np.any(beta >= counts):
        bad = int(np.argmax((beta < 0) | (beta >= counts)))
        raise ValueError(f"beta action index out of range at state {bad}")
    return game.mi_ptr[slots] + beta


def assemble_linear_system(game: GameInstance, alpha, beta) -> tuple[CsrMatrix, np.ndarray]:
    """System (I - M) v = r for the fixed policy pair.

    M holds the kernel rows selected by (alpha, beta); the result is a
    weakly diagonally dominant M-matrix whenever the kernel is substochastic.
    """
    if not game.is_tabular:
        return game.action_model.assemble(alpha, beta)
    n = game.n_states
    t = _min_slots(game, alpha, beta)
    starts = game.ker_ptr[t]
    lens = game.ker_ptr[t + 1] - starts
    total = int(lens.sum())
    indptr = np.concatenate([[0], np.cumsum(lens)])
    within = np.arange(total, dtype=np.int64) - np.repeat(indptr[:-1], lens)
    flat = np.repeat(starts, lens) + within
    rows = np.repeat(np.arange(n, dtype=np.int64), lens)
    cols = game.ker_idx[flat]
    vals = -game.ker_val[flat]
    rows = np.concatenate([rows, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([cols, np.arange(n, dtype=np.int64)])
    vals = np.concatenate([vals, np.ones(n)])
    return CsrMatrix.square_from_coo(n, rows, cols, vals), game.reward[t].copy()


def value_iteration(game: GameInstance, v0, tol, max_iters=100000) -> ValueIterationResult:
    """Fixed-point iteration v <- F(v); the independent reference solver.

    Contracts with factor max-row-sum of the kernel, so it is slow near
    row sums of one but needs no linear algebra at all.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = _check_values(game, v0).copy()
    for it in range(1, max_iters + 1):
        w = bellman(game, v)
        delta = float(np.max(np.abs(w - v)))
        v = w
        if delta <= tol:
            return ValueIterationResult(v, it, True)
    return ValueIterationResult(v, max_iters, False)


def max_row_sum(game: GameInstance) -> float:
    """Largest kernel row sum; the contraction factor of F (tabular games)."""
    sums = segment_sums(game.ker_val, game.ker_ptr)
    return float(sums.max()) if sums.size else 0.0


def estimate_spectral_radius(game: GameInstance, alpha, beta, iters=200, seed=0) -> float:
    """Power-iteration estimate of the spectral radius of M under (alpha, beta).

    Debug aid for the solvability contract; intended for games below 1e5
    states.
    """
    a, _ = assemble_linear_system(game, alpha, beta)
    # M = I - A
    x = np.random.default_rng(seed).standard_normal(game.n_states)
    x /= np.linalg.norm(x)
    rho = 0.0
    for _ in range(iters):
        y = x - a.matvec(x)
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0
        rho = nrm
        x = y / nrm
    return float(rho)


def random_game(seed, n_states, mu, max_actions=(2, 4), min_actions=(2, 4),
                row_nnz=(2, 5)) -> GameInstance:
    """Seeded random substochastic game with kernel row sums exactly mu."""
    rng = np.random.default_rng(seed)
    kernel = []
    rewards = []
    for _ in range(n_states):
        na = int(rng.integers(max_actions[0], max_actions[1] + 1))
        state_rows = []
        state_rewards = []
        for _ in range(na):
            nb = int(rng.integers(min_actions[0], min_actions[1] + 1))
            act_rows = []
            act_rewards = []
            for _ in range(nb):
                nnz = int(rng.integers(row_nnz[0], min(row_nnz[1], n_states) + 1))
                targets = rng.choice(n_states, size=nnz, replace=False)
                weights = rng.dirichlet(np.ones(nnz)) * mu
                act_rows.append(sorted(zip(targets.tolist(), weights.tolist())))
                act_rewards.append(float(rng.uniform(-1.0, 1.0)))
            state_rows.append(act_rows)
            state_rewards.append(act_rewards)
        kernel.append(state_rows)
        rewards.append(state_rewards)
    return GameInstance.tabular(kernel, rewards)


def write_tabular_game(game: GameInstance, path) -> None:
    if not game.is_tabular:
        raise ValueError("only tabular games can be written to the text format")
    with open(path, "w") as fh:
        fh.write(f"game {game.n_states}\n")
        for x in range(game.n_states):
            fh.write(f"state {x} {game.n_max_actions(x)}\n")
            for a in range(game.n_max_actions(x)):
                fh.write(f"maxact {a} {game.n_min_actions(x, a)}\n")
                for b in range(game.n_min_actions(x, a)):
                    t = game.mi_ptr[game.ma_ptr[x] + a] + b
                    lo, hi = game.ker_ptr[t], game.ker_ptr[t + 1]
                    fh.write(f"minact {b} {game.reward[t]:.17g} {hi - lo}\n")
                    for y, q in zip(game.ker_idx[lo:hi], game.ker_val[lo:hi]):
                        fh.write(f"  {y} {q:.17g}\n")


def parse_tabular_game(path) -> GameInstance:
    """Read the plain-text tabular game format.

    Layout: `game <n>`, then per state `state <x> <|A|>`, per max action
    `maxact <a> <|B|>`, per min action `minact <b> <r> <nnz>` followed by
    nnz `<y> <q>` pairs.  Rows summing above 1 are rejected.
    """
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def take(expect=None):
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of game file")
        tok = tokens[pos]
        pos += 1
        if expect is not None and tok != expect:
            raise ValueError(f"expected {expect!r}, found {tok!r}")
        return tok

    take("game")
    n = int(take())
    kernel = []
    rewards = []
    for x in range(n):
        take("state")
        if int(take()) != x:
            raise ValueError(f"state records out of order near state {x}")
        na = int(take())
        state_rows, state_rewards = [], []
        for a in range(na):
            take("maxact")
            if int(take()) != a:
                raise ValueError(f"maxact records out of order at state {x}")
            nb = int(take())
            act_rows, act_rewards = [], []
            for b in range(nb):
                take("minact")
                if int(take()) != b:
                    raise ValueError(f"minact records out of order at ({x},{a})")
                r = float(take())
                nnz = int(take())
                row = []
                for _ in range(nnz):
                    y = int(take())
                    q = float(take())
                    row.append((y, q))
                act_rows.append(row)
                act_rewards.append(r)
            state_rows.append(act_rows)
            state_rewards.append(act_rewards)
        kernel.append(state_rows)
        rewards.append(state_rewards)
    if pos != len(tokens):
        raise ValueError("trailing tokens after game definition")
    return GameInstance.tabular(kernel, rewards)
