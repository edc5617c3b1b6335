"""Direct solver: LU factorisation with partial pivoting on the band profile.

The systems this package produces (grid discretisations, their multigrid
coarse operators after the trivial rows are eliminated, and small tabular
games) all have a modest band profile, so factorising within the band with
row pivoting is both exact and fast.  Fill from pivoting stays inside an
extra `kl` superdiagonals, as in the classic banded LU storage scheme.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from .csr import CsrMatrix

_MAX_WORKSPACE = 200_000_000  # floats; guards against absurd band profiles


class SingularMatrixError(ValueError):
    """Raised when elimination hits a pivot that is numerically zero."""

    def __init__(self, pivot_index: int):
        super().__init__(f"matrix is numerically singular at pivot {pivot_index}")
        self.pivot_index = pivot_index


class BandLU:
    """Factored form of a square matrix; reusable for many right-hand sides."""

    def __init__(self, matrix: CsrMatrix):
        n = matrix.n
        rows = matrix.row_indices()
        cols = matrix.col_indices
        if rows.size:
            kl = int(np.max(rows - cols).clip(min=0))
            ku = int(np.max(cols - rows).clip(min=0))
        else:
            kl = ku = 0
        width = 2 * kl + ku + 1
        if n * width > _MAX_WORKSPACE:
            raise MemoryError(
                f"band profile too wide to factor: n={n}, kl={kl}, ku={ku}"
            )
        rowwin = np.zeros((n, width))
        rowwin[rows, cols - rows + kl] = matrix.values
        scale = np.abs(matrix.values).max() if matrix.values.size else 0.0
        piv = np.zeros(n, dtype=np.int64)
        bad = _kernels.band_factor(rowwin, n, kl, ku, piv, max(1e-300, 1e-14 * scale))
        if bad >= 0:
            raise SingularMatrixError(int(bad))
        self.n = n
        self._kl = kl
        self._ku = ku
        self._rowwin = rowwin
        self._piv = piv

    def solve(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if f.shape != (self.n,):
            raise ValueError("right-hand side length does not match the factorisation")
        x = f.copy()
        _kernels.band_solve(self._rowwin, self.n, self._kl, self._ku, self._piv, x)
        return x


def direct_solve(matrix: CsrMatrix, f) -> np.ndarray:
    """Factor and solve in one shot."""
    return BandLU(matrix).solve(f)
