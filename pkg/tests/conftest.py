import numpy as np
import pytest

from gamemg.csr import CsrMatrix
from gamemg.pde import GridSpec, build_game, isaacs_sin_problem
from gamemg.policy import improve_max_with_values, improve_min


def poisson2d(m):
    """Unscaled 5-point stencil (-1, 4, -1) on the (m-1)^2 interior grid."""
    n1 = m - 1
    n = n1 * n1
    k = np.arange(n).reshape(n1, n1)
    rows = [k.ravel()]
    cols = [k.ravel()]
    vals = [np.full(n, 4.0)]
    pairs = [
        (k[:, 1:], k[:, :-1]),
        (k[:, :-1], k[:, 1:]),
        (k[1:, :], k[:-1, :]),
        (k[:-1, :], k[1:, :]),
    ]
    for r, c in pairs:
        rows.append(r.ravel())
        cols.append(c.ravel())
        vals.append(np.full(r.size, -1.0))
    return CsrMatrix.square_from_coo(
        n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def laplacian1d(n):
    """Tridiagonal (-1, 2, -1) of size n."""
    rows = np.concatenate([np.arange(n), np.arange(n - 1), np.arange(1, n)])
    cols = np.concatenate([np.arange(n), np.arange(1, n), np.arange(n - 1)])
    vals = np.concatenate([np.full(n, 2.0), np.full(n - 1, -1.0), np.full(n - 1, -1.0)])
    return CsrMatrix.square_from_coo(n, rows, cols, vals)


def dense_gauss_solve(a, b):
    """Dense Gaussian elimination with partial pivoting; test oracle."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = a.shape[0]
    for j in range(n):
        p = j + int(np.argmax(np.abs(a[j:, j])))
        if p != j:
            a[[j, p]] = a[[p, j]]
            b[[j, p]] = b[[p, j]]
        for i in range(j + 1, n):
            m = a[i, j] / a[j, j]
            a[i, j:] -= m * a[j, j:]
            b[i] -= m * b[j]
    x = np.zeros(n)
    for j in range(n - 1, -1, -1):
        x[j] = (b[j] - a[j, j + 1:] @ x[j + 1:]) / a[j, j]
    return x


@pytest.fixture(scope="session")
def isaacs_matrix_65():
    """Assembled policy system of the smooth 65x65 benchmark after one
    improvement from v = 0 (representative nonsymmetric M-matrix)."""
    grid = GridSpec(m=64, dim=2)
    game = build_game(isaacs_sin_problem(), grid)
    v0 = np.zeros(game.n_states)
    alpha, _ = improve_max_with_values(game, v0)
    beta = improve_min(game, alpha, v0)
    matrix, rhs = game.action_model.assemble(alpha, beta)
    return matrix, rhs
