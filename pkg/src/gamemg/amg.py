"""Algebraic multigrid for nonsymmetric M-matrix systems.

Setup follows the classical coarsening recipe: a strength-of-connection
graph over the negative couplings, a two-pass coarse/fine splitting, direct
interpolation from strong coarse neighbours, restriction fixed to the
transpose of interpolation, and Galerkin coarse operators.  The solve phase
runs V- or W-cycles with a coarse-first Gauss-Seidel smoother and a direct
factorisation on the coarsest level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .csr import CsrMatrix
from .directlu import BandLU

COARSE = 1
FINE = 2


@dataclass(frozen=True)
class AmgConfig:
    """Knobs for setup and cycling.

    theta: strength threshold in (0, 1).
    nu1, nu2: pre-/post-smoothing sweeps.
    gamma: cycle index (1 = V-cycle, 2 = W-cycle).
    coarsest_size: stop coarsening at or below this many unknowns.
    tol: absolute residual 2-norm target for the solve loop.
    """

    theta: float = 0.25
    nu1: int = 1
    nu2: int = 1
    gamma: int = 2
    max_levels: int = 25
    coarsest_size: int = 40
    tol: float = 1e-12
    max_cycles: int = 100

    def __post_init__(self):
        if not (0.0 < self.theta < 1.0):
            raise ValueError("theta must lie in (0, 1)")
        if self.gamma not in (1, 2):
            raise ValueError("gamma must be 1 (V-cycle) or 2 (W-cycle)")
        if min(self.nu1, self.nu2) < 0 or max(self.nu1, self.nu2) == 0:
            raise ValueError("need at least one smoothing sweep")
        if self.max_levels < 1 or self.coarsest_size < 1 or self.max_cycles < 1:
            raise ValueError("limits must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class StrengthGraph:
    """Strong connections of each row: j is strong for i when the negative
    coupling -a_ij reaches theta times the largest negative coupling in
    row i."""

    entry_mask: np.ndarray  # aligned with the matrix's stored entries
    ptr: np.ndarray
    idx: np.ndarray

    def row(self, i):
        return self.idx[self.ptr[i]: self.ptr[i + 1]]


@dataclass(frozen=True)
class CfSplit:
    is_coarse: np.ndarray  # boolean per point

    @property
    def c_points(self) -> np.ndarray:
        return np.flatnonzero(self.is_coarse)

    @property
    def f_points(self) -> np.ndarray:
        return np.flatnonzero(~self.is_coarse)

    @property
    def n_coarse(self) -> int:
        return int(np.count_nonzero(self.is_coarse))


def strength_graph(a: CsrMatrix, theta: float) -> StrengthGraph:
    n = a.n
    rows = a.row_indices()
    offdiag = rows != a.col_indices
    neg = np.where(offdiag, -a.values, 0.0)
    row_max = np.zeros(n)
    np.maximum.at(row_max, rows, neg)
    mask = offdiag & (neg > 0.0) & (neg >= theta * row_max[rows])
    counts = np.zeros(n + 1, dtype=np.int64)
    np.add.at(counts, rows[mask] + 1, 1)
    ptr = np.cumsum(counts)
    return StrengthGraph(mask, ptr, a.col_indices[mask])


def _transpose_graph(n, ptr, idx):
    rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(ptr))
    order = np.argsort(idx, kind="stable")
    t_idx = rows[order]
    counts = np.zeros(n + 1, dtype=np.int64)
    np.add.at(counts, idx + 1, 1)
    return np.cumsum(counts), t_idx


def cf_split(strength: StrengthGraph) -> CfSplit:
    """Two-pass coarsening over the strength graph.

    The first pass greedily picks coarse points by descending influence
    count; the second enforces a shared coarse point for every strong
    fine-fine pair.  Points with no strong connections become coarse, so a
    diagonal matrix does not coarsen at all.
    """
    n = strength.ptr.shape[0] - 1
    st_ptr, st_idx = _transpose_graph(n, strength.ptr, strength.idx)
    status = _kernels.rs_first_pass(strength.ptr, strength.idx, st_ptr, st_idx)
    _kernels.rs_second_pass(strength.ptr, strength.idx, status)
    return CfSplit(status == COARSE)


def build_interpolation(a: CsrMatrix, split: CfSplit, strength: StrengthGraph) -> CsrMatrix:
    n = a.n
    status = np.where(split.is_coarse, COARSE, FINE).astype(np.int8)
    cmap = np.cumsum(split.is_coarse.astype(np.int64)) - 1
    p_ptr, p_idx, p_val, bad = _kernels.interpolation_weights(
        a.row_offsets, a.col_indices, a.values, strength.entry_mask, status, cmap
    )
    if bad >= 0:
        raise RuntimeError(
            f"fine point {bad} has no usable strong coarse neighbour; "
            "the coarse/fine splitting should have prevented this"
        )
    return CsrMatrix(n, split.n_coarse, p_ptr, p_idx, p_val)


def galerkin(a: CsrMatrix, p: CsrMatrix) -> CsrMatrix:
    """Coarse operator P^T A P via sparse triple product."""
    if a.n != p.n_rows:
        raise ValueError(f"dimension mismatch: A is {a.shape}, P is {p.shape}")
    a_sp = a.to_scipy()
    p_sp = p.to_scipy()
    coarse = (p_sp.T @ (a_sp @ p_sp)).tocsr()
    return CsrMatrix.from_scipy(coarse)


@dataclass
class AmgLevel:
    a: CsrMatrix
    diag: np.ndarray
    split: CfSplit | None = None
    sweep_order: np.ndarray | None = None  # C-points ascending, then F-points
    p: CsrMatrix | None = None
    r: CsrMatrix | None = None


@dataclass
class AmgHierarchy:
    """Immutable after setup; one instance per system matrix."""

    levels: list[AmgLevel]
    coarsest_factor: BandLU
    config: AmgConfig

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def level_sizes(self) -> list[int]:
        return [lvl.a.n for lvl in self.levels]

    def grid_complexity(self) -> float:
        sizes = self.level_sizes()
        return sum(sizes) / sizes[0]

    def operator_complexity(self) -> float:
        return sum(lvl.a.nnz for lvl in self.levels) / max(self.levels[0].a.nnz, 1)


def setup_hierarchy(a: CsrMatrix, config: AmgConfig | None = None) -> AmgHierarchy:
    """Recursive setup: strength, splitting, interpolation, Galerkin product.

    Coarsening stops at `coarsest_size`, at `max_levels`, or when it stalls
    (coarse grid larger than 0.9 of the fine grid); the final level is
    factored directly.
    """
    config = config or AmgConfig()
    levels: list[AmgLevel] = []
    current = a
    while True:
        diag = current.diagonal()
        if current.n > 0 and np.any(diag == 0.0):
            raise ValueError("zero diagonal entry; matrix is not smoothable")
        level = AmgLevel(current, diag)
        levels.append(level)
        if current.n <= config.coarsest_size or len(levels) >= config.max_levels:
            break
        strength = strength_graph(current, config.theta)
        split = cf_split(strength)
        nc = split.n_coarse
        if nc == current.n or nc == 0 or nc > 0.9 * current.n:
            break  # stalled; solve this level directly
        p = build_interpolation(current, split, strength)
        level.split = split
        level.sweep_order = np.concatenate([split.c_points, split.f_points])
        level.p = p
        level.r = p.transpose()
        current = galerkin(current, p)
    try:
        factor = BandLU(levels[-1].a)
    except ValueError as exc:
        raise ValueError(
            f"coarsest level {len(levels) - 1} could not be factored: {exc}"
        ) from exc
    return AmgHierarchy(levels, factor, config)


def cf_gauss_seidel(a: CsrMatrix, u, f, split: CfSplit | None, order=None) -> np.ndarray:
    """One Gauss-Seidel sweep visiting coarse points first, in place.

    With no split every row is visited in ascending order, which is plain
    lexicographic Gauss-Seidel.
    """
    diag = a.diagonal()
    if np.any(diag == 0.0):
        raise ValueError("zero diagonal entry in Gauss-Seidel sweep")
    if order is None:
        if split is None:
            order = np.arange(a.n, dtype=np.int64)
        else:
            order = np.concatenate([split.c_points, split.f_points])
    _kernels.gs_sweep(a.row_offsets, a.col_indices, a.values, diag, u, f, order)
    return u


def _smooth(level: AmgLevel, u, f, sweeps):
    for _ in range(sweeps):
        _kernels.gs_sweep(
            level.a.row_offsets, level.a.col_indices, level.a.values,
            level.diag, u, f, level.sweep_order,
        )


def mg_cycle(hierarchy: AmgHierarchy, level: int, u, f, config: AmgConfig | None = None):
    """One multigrid cycle starting at `level`; returns the updated iterate."""
    config = config or hierarchy.config
    lvl = hierarchy.levels[level]
    if level == hierarchy.n_levels - 1:
        u[:] = hierarchy.coarsest_factor.solve(f)
        return u
    _smooth(lvl, u, f, config.nu1)
    residual = f - lvl.a.matvec(u)
    f_coarse = lvl.r.matvec(residual)
    u_coarse = np.zeros(lvl.p.n_cols)
    for _ in range(config.gamma):
        mg_cycle(hierarchy, level + 1, u_coarse, f_coarse, config)
    u += lvl.p.matvec(u_coarse)
    _smooth(lvl, u, f, config.nu2)
    return u


@dataclass
class AmgSolveResult:
    u: np.ndarray
    cycles: int
    converged: bool
    residual_norm: float


def amg_solve(
    hierarchy: AmgHierarchy, f, u0=None, config: AmgConfig | None = None
) -> AmgSolveResult:
    """Cycle until the residual 2-norm drops below the configured target."""
    config = config or hierarchy.config
    a = hierarchy.levels[0].a
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (a.n,):
        raise ValueError("right-hand side length does not match the hierarchy")
    u = np.zeros(a.n) if u0 is None else np.array(u0, dtype=np.float64)
    res = float(np.linalg.norm(f - a.matvec(u)))
    cycles = 0
    stagnant = 0
    while res >= config.tol and cycles < config.max_cycles:
        mg_cycle(hierarchy, 0, u, f, config)
        prev = res
        res = float(np.linalg.norm(f - a.matvec(u)))
        cycles += 1
        # a residual pinned at the rounding floor will never meet an
        # absolute target; stop instead of burning the cycle budget
        stagnant = stagnant + 1 if res >= 0.5 * prev else 0
        if stagnant >= 3:
            break
    return AmgSolveResult(u, cycles, res < config.tol, res)


def solve(a: CsrMatrix, f, u0=None, config: AmgConfig | None = None) -> AmgSolveResult:
    """Convenience wrapper: setup plus solve for a single system."""
    return amg_solve(setup_hierarchy(a, config), f, u0, config)
