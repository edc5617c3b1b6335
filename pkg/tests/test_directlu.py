import numpy as np
import pytest

from conftest import dense_gauss_solve, laplacian1d, poisson2d
from gamemg.csr import CsrMatrix
from gamemg.directlu import BandLU, SingularMatrixError, direct_solve


def test_identity_returns_rhs():
    f = np.array([3.0, -1.0, 2.0])
    assert np.array_equal(direct_solve(CsrMatrix.identity(3), f), f)


def test_laplacian_greens_column():
    a = laplacian1d(5)
    f = np.zeros(5)
    f[2] = 1.0
    u = direct_solve(a, f)
    assert np.max(np.abs(a.matvec(u) - f)) <= 1e-12
    # discrete Green's function of (-1,2,-1) with unit source at the middle
    expected = np.array([0.5, 1.0, 1.5, 1.0, 0.5])
    assert np.allclose(u, expected, atol=1e-12)


def test_random_diagonally_dominant_matches_dense_oracle():
    rng = np.random.default_rng(42)
    n = 50
    dense = rng.standard_normal((n, n))
    dense[rng.random((n, n)) < 0.7] = 0.0
    dense += np.diag(np.abs(dense).sum(axis=1) + 1.0)
    f = rng.standard_normal(n)
    u = direct_solve(CsrMatrix.from_dense(dense), f)
    assert np.max(np.abs(u - dense_gauss_solve(dense, f))) <= 1e-10


def test_pivoting_handles_zero_leading_diagonal():
    dense = np.array([[0.0, 2.0], [1.0, 1.0]])
    u = direct_solve(CsrMatrix.from_dense(dense), np.array([2.0, 2.0]))
    assert np.allclose(u, [1.0, 1.0], atol=1e-14)


def test_singular_matrix_reports_pivot_index():
    dense = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularMatrixError) as info:
        direct_solve(CsrMatrix.from_dense(dense), np.ones(3))
    assert info.value.pivot_index == 1


def test_residual_contract_on_grid_matrix():
    a = poisson2d(17)
    rng = np.random.default_rng(0)
    f = rng.standard_normal(a.n)
    u = direct_solve(a, f)
    assert np.linalg.norm(a.matvec(u) - f, np.inf) <= 1e-10 * (1 + np.linalg.norm(f, np.inf))


def test_factor_reuse_for_multiple_rhs():
    a = poisson2d(9)
    lu = BandLU(a)
    rng = np.random.default_rng(1)
    for _ in range(3):
        f = rng.standard_normal(a.n)
        assert np.max(np.abs(a.matvec(lu.solve(f)) - f)) <= 1e-11
