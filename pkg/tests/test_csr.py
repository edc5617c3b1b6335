import numpy as np
import pytest

from gamemg.csr import CsrMatrix, read_matrix_market, write_matrix_market


def test_from_coo_sums_duplicates_and_sorts():
    a = CsrMatrix.from_coo(3, 3, [0, 0, 1, 0], [2, 1, 1, 2], [1.0, 2.0, 3.0, 4.0])
    cols, vals = a.row(0)
    assert cols.tolist() == [1, 2]
    assert vals.tolist() == [2.0, 5.0]
    assert a.nnz == 3


def test_from_coo_drops_explicit_zeros():
    a = CsrMatrix.from_coo(2, 2, [0, 1], [0, 1], [0.0, 1.0])
    assert a.nnz == 1


def test_from_coo_rejects_out_of_range():
    with pytest.raises(ValueError):
        CsrMatrix.from_coo(2, 2, [0, 2], [0, 0], [1.0, 1.0])


def test_column_indices_strictly_increasing_per_row():
    rng = np.random.default_rng(7)
    n = 30
    rows = rng.integers(0, n, 200)
    cols = rng.integers(0, n, 200)
    vals = rng.standard_normal(200)
    a = CsrMatrix.from_coo(n, n, rows, cols, vals)
    for i in range(n):
        c, _ = a.row(i)
        assert np.all(np.diff(c) > 0)
    assert a.row_offsets[0] == 0
    assert np.all(np.diff(a.row_offsets) >= 0)


def test_matvec_matches_dense():
    rng = np.random.default_rng(3)
    dense = rng.standard_normal((12, 12))
    dense[rng.random((12, 12)) < 0.6] = 0.0
    a = CsrMatrix.from_dense(dense)
    x = rng.standard_normal(12)
    assert np.allclose(a.matvec(x), dense @ x, atol=1e-14)


def test_matvec_rejects_bad_length():
    a = CsrMatrix.identity(4)
    with pytest.raises(ValueError):
        a.matvec(np.ones(5))


def test_transpose_matches_dense():
    rng = np.random.default_rng(5)
    dense = rng.standard_normal((9, 5))
    dense[rng.random((9, 5)) < 0.5] = 0.0
    a = CsrMatrix.from_dense(dense)
    assert np.array_equal(a.transpose().to_dense(), dense.T)


def test_submatrix_matches_dense_slicing():
    rng = np.random.default_rng(11)
    dense = rng.standard_normal((10, 10))
    dense[rng.random((10, 10)) < 0.5] = 0.0
    keep = np.array([0, 3, 4, 8])
    a = CsrMatrix.from_dense(dense)
    assert np.allclose(a.submatrix(keep).to_dense(), dense[np.ix_(keep, keep)])


def test_matrix_market_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    dense = rng.standard_normal((8, 8))
    dense[rng.random((8, 8)) < 0.5] = 0.0
    a = CsrMatrix.from_dense(dense)
    path = tmp_path / "a.mtx"
    write_matrix_market(a, path)
    first = path.read_text().splitlines()[0]
    assert first == "%%MatrixMarket matrix coordinate real general"
    b = read_matrix_market(path)
    assert np.array_equal(a.to_dense(), b.to_dense())


def test_matrix_market_rejects_other_headers(tmp_path):
    path = tmp_path / "bad.mtx"
    path.write_text("%%MatrixMarket matrix array real general\n1 1\n1.0\n")
    with pytest.raises(ValueError):
        read_matrix_market(path)
