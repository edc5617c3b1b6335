"""Compressed sparse row matrices and Matrix Market I/O.

Kept deliberately small: construction always canonicalises (sorted column
indices within each row, duplicates summed, explicit zeros dropped), so the
rest of the package can rely on that invariant.  System matrices are square;
the rectangular case exists for the multigrid transfer operators.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

_DROP_TOL = 1e-300  # magnitude below which stored entries count as explicit zeros


@dataclass(frozen=True)
class CsrMatrix:
    """Sparse matrix in compressed sparse row form.

    Invariants: `row_offsets` is monotone with `row_offsets[0] == 0`, column
    indices are in range and strictly increasing within each row, and no
    stored value is an explicit zero.  Instances are immutable and safe to
    share across threads.
    """

    n_rows: int
    n_cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    @property
    def n(self) -> int:
        """Dimension of a square system matrix."""
        if self.n_rows != self.n_cols:
            raise ValueError("matrix is not square")
        return self.n_rows

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @staticmethod
    def from_coo(n_rows, n_cols, rows, cols, vals) -> "CsrMatrix":
        """Build from coordinate triplets; duplicates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (
            rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols
        ):
            raise ValueError("coordinate index out of range")
        order = np.lexsort((cols, rows))
        rows, cols, vals = rows[order], cols[order], vals[order]
        if rows.size:
            first = np.ones(rows.size, dtype=bool)
            first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
            group = np.cumsum(first) - 1
            summed = np.zeros(int(group[-1]) + 1, dtype=np.float64)
            np.add.at(summed, group, vals)
            rows, cols, vals = rows[first], cols[first], summed
        keep = np.abs(vals) >= _DROP_TOL
        rows, cols, vals = rows[keep], cols[keep], vals[keep]
        offsets = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(offsets, rows + 1, 1)
        np.cumsum(offsets, out=offsets)
        return CsrMatrix(n_rows, n_cols, offsets, cols, vals)

    @staticmethod
    def square_from_coo(n, rows, cols, vals) -> "CsrMatrix":
        return CsrMatrix.from_coo(n, n, rows, cols, vals)

    @staticmethod
    def from_dense(a) -> "CsrMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("expected a 2-d array")
        rows, cols = np.nonzero(a)
        return CsrMatrix.from_coo(a.shape[0], a.shape[1], rows, cols, a[rows, cols])

    @staticmethod
    def identity(n) -> "CsrMatrix":
        return CsrMatrix(
            n,
            n,
            np.arange(n + 1, dtype=np.int64),
            np.arange(n, dtype=np.int64),
            np.ones(n, dtype=np.float64),
        )

    @staticmethod
    def from_scipy(a) -> "CsrMatrix":
        a = a.tocsr()
        a.sum_duplicates()
        a.sort_indices()
        m = CsrMatrix(
            a.shape[0],
            a.shape[1],
            np.asarray(a.indptr, dtype=np.int64),
            np.asarray(a.indices, dtype=np.int64),
            np.asarray(a.data, dtype=np.float64),
        )
        if m.values.size and np.abs(m.values).min() < _DROP_TOL:
            m = CsrMatrix.from_coo(m.n_rows, m.n_cols, m.row_indices(), m.col_indices, m.values)
        return m

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=self.shape
        )

    def row_indices(self) -> np.ndarray:
        lens = np.diff(self.row_offsets)
        return np.repeat(np.arange(self.n_rows, dtype=np.int64), lens)

    def row(self, i):
        lo, hi = self.row_offsets[i], self.row_offsets[i + 1]
        return self.col_indices[lo:hi], self.values[lo:hi]

    def diagonal(self) -> np.ndarray:
        d = np.zeros(min(self.n_rows, self.n_cols))
        rows = self.row_indices()
        on_diag = rows == self.col_indices
        d[rows[on_diag]] = self.values[on_diag]
        return d

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError(f"vector length {x.shape} does not match {self.shape}")
        out = np.empty(self.n_rows)
        _kernels.csr_matvec(self.row_offsets, self.col_indices, self.values, x, out)
        return out

    def transpose(self) -> "CsrMatrix":
        return CsrMatrix.from_coo(
            self.n_cols, self.n_rows, self.col_indices, self.row_indices(), self.values
        )

    def to_dense(self) -> np.ndarray:
        a = np.zeros(self.shape)
        a[self.row_indices(), self.col_indices] = self.values
        return a

    def submatrix(self, keep) -> "CsrMatrix":
        """Square restriction to the rows and columns in `keep` (renumbered)."""
        n = self.n
        keep = np.asarray(keep, dtype=np.int64)
        newid = np.full(n, -1, dtype=np.int64)
        newid[keep] = np.arange(keep.size, dtype=np.int64)
        rows = newid[self.row_indices()]
        cols = newid[self.col_indices]
        mask = (rows >= 0) & (cols >= 0)
        return CsrMatrix.from_coo(keep.size, keep.size, rows[mask], cols[mask], self.values[mask])


def write_matrix_market(matrix: CsrMatrix, path) -> None:
    """Coordinate-format Matrix Market file with 1-based indices."""
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{matrix.n_rows} {matrix.n_cols} {matrix.nnz}\n")
        rows = matrix.row_indices()
        for r, c, v in zip(rows, matrix.col_indices, matrix.values):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")


def read_matrix_market(path) -> CsrMatrix:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("%%MatrixMarket matrix coordinate real general"):
            raise ValueError(f"unsupported Matrix Market header: {header.strip()!r}")
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        nrow, ncol, nnz = (int(t) for t in line.split())
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k in range(nnz):
            parts = fh.readline().split()
            rows[k] = int(parts[0]) - 1
            cols[k] = int(parts[1]) - 1
            vals[k] = float(parts[2])
    return CsrMatrix.from_coo(nrow, ncol, rows, cols, vals)
