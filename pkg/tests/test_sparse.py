import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from alstokes.errors import DimensionMismatchError, InvalidMatrixError, QNotSPDError
from alstokes.sparse import (
    CsrMatrix,
    as_block,
    block_spmv,
    diag_solve,
    frobenius_inner,
    spmv,
    spmv_transpose,
)

M2 = CsrMatrix.from_dense([[1.0, 2.0], [0.0, 3.0]])


def test_spmv_identity():
    np.testing.assert_array_equal(spmv(CsrMatrix.identity(3), [1.0, 2.0, 3.0]), [1, 2, 3])


def test_spmv_dense_oracle():
    np.testing.assert_array_equal(spmv(M2, [1.0, 1.0]), [3.0, 3.0])


def test_spmv_empty_row_gives_zero():
    m = CsrMatrix(3, 3, [0, 1, 1, 2], [0, 2], [5.0, 7.0])
    y = spmv(m, np.array([1.0, -4.0, 2.0]))
    assert y[1] == 0.0
    np.testing.assert_array_equal(y, [5.0, 0.0, 14.0])


def test_spmv_dimension_error_carries_both_sizes():
    with pytest.raises(DimensionMismatchError) as exc:
        spmv(M2, np.ones(3))
    assert exc.value.expected == 2
    assert exc.value.got == (3,)


def test_spmv_transpose_examples():
    np.testing.assert_array_equal(spmv_transpose(CsrMatrix.identity(3), [1.0, 2.0, 3.0]), [1, 2, 3])
    np.testing.assert_array_equal(spmv_transpose(M2, [1.0, 1.0]), [1.0, 5.0])
    np.testing.assert_array_equal(spmv_transpose(M2, np.zeros(2)), [0.0, 0.0])
    with pytest.raises(DimensionMismatchError):
        spmv_transpose(M2, np.ones(3))


def test_block_spmv_examples():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((5, 2))
    np.testing.assert_array_equal(block_spmv(CsrMatrix.identity(5), X), X)
    M = CsrMatrix.from_dense(rng.standard_normal((5, 5)))
    Y = block_spmv(M, X)
    assert Y.flags.f_contiguous
    for j in range(2):
        np.testing.assert_array_equal(Y[:, j], spmv(M, X[:, j]))
    np.testing.assert_array_equal(block_spmv(M, X[:, :1])[:, 0], spmv(M, X[:, 0]))
    with pytest.raises(DimensionMismatchError):
        block_spmv(M, np.ones((4, 2)))


def test_diag_solve_examples():
    x = np.array([3.0, -1.0])
    np.testing.assert_array_equal(diag_solve(np.ones(2), x), x)
    np.testing.assert_array_equal(diag_solve([2.0, 4.0], [2.0, 4.0]), [1.0, 1.0])
    X = np.array([[2.0, 6.0], [4.0, 8.0]])
    out = diag_solve([2.0, 4.0], X)
    for j in range(2):
        np.testing.assert_array_equal(out[:, j], diag_solve([2.0, 4.0], X[:, j]))


@pytest.mark.parametrize("d", [[1.0, 0.0], [1.0, -2.0], [np.nan, 1.0]])
def test_diag_solve_rejects_nonpositive(d):
    with pytest.raises(QNotSPDError):
        diag_solve(d, np.ones(2))


def test_construction_rejects_duplicates_and_disorder():
    with pytest.raises(InvalidMatrixError):
        CsrMatrix(2, 2, [0, 2, 2], [1, 1], [1.0, 2.0])
    with pytest.raises(InvalidMatrixError):
        CsrMatrix(2, 2, [0, 2, 2], [1, 0], [1.0, 2.0])
    with pytest.raises(InvalidMatrixError):
        CsrMatrix.from_coo(2, 2, [0, 0], [1, 1], [1.0, 1.0])
    summed = CsrMatrix.from_coo(2, 2, [0, 0], [1, 1], [1.0, 1.0], sum_duplicates=True)
    assert summed.to_dense()[0, 1] == 2.0


@pytest.mark.parametrize(
    "rows, cols, ptr, idx",
    [
        (2, 2, [0, 1], [0]),  # row_ptr too short
        (2, 2, [1, 1, 1], [0]),  # row_ptr[0] != 0
        (2, 2, [0, 2, 1], [0]),  # decreasing
        (1, 2, [0, 1], [2]),  # column out of range
        (1, 2, [0, 1], [-1]),
    ],
)
def test_construction_rejects_bad_layout(rows, cols, ptr, idx):
    with pytest.raises(InvalidMatrixError):
        CsrMatrix(rows, cols, ptr, idx, np.ones(len(idx)))


def test_arrays_are_read_only():
    with pytest.raises(ValueError):
        M2.values[0] = 9.0


def test_block_helpers():
    v = np.arange(3.0)
    B = as_block(v)
    assert B.shape == (3, 1) and B.flags.f_contiguous
    with pytest.raises(DimensionMismatchError):
        as_block(np.ones((2, 2)), 3)
    X = np.arange(6.0).reshape(3, 2)
    assert frobenius_inner(X, X) == pytest.approx(np.sum(X * X))


dims = st.tuples(st.integers(1, 8), st.integers(1, 8))


@st.composite
def sparse_and_vectors(draw):
    r, c = draw(dims)
    elems = st.floats(-10, 10, allow_nan=False)
    dense = draw(hnp.arrays(np.float64, (r, c), elements=elems))
    mask = draw(hnp.arrays(np.bool_, (r, c)))
    x = draw(hnp.arrays(np.float64, c, elements=elems))
    y = draw(hnp.arrays(np.float64, r, elements=elems))
    return dense * mask, x, y


@given(sparse_and_vectors())
def test_adjointness(data):
    dense, x, y = data
    M = CsrMatrix.from_dense(dense)
    lhs = y @ spmv(M, x)
    rhs = spmv_transpose(M, y) @ x
    scale = np.abs(y) @ np.abs(dense) @ np.abs(x) + 1e-300
    assert abs(lhs - rhs) <= 1e-13 * scale


@given(sparse_and_vectors())
def test_dense_roundtrip_matches_spmv(data):
    dense, x, _ = data
    M = CsrMatrix.from_dense(dense)
    np.testing.assert_array_equal(M.to_dense(), dense)
    scale = np.abs(dense) @ np.abs(x) + 1e-300
    assert np.all(np.abs(M.to_dense() @ x - spmv(M, x)) <= 1e-14 * scale)


@given(sparse_and_vectors())
def test_block_equals_repeated_spmv_bitwise(data):
    dense, x, _ = data
    M = CsrMatrix.from_dense(dense)
    X = np.column_stack([x, 2 * x - 1])
    Y = block_spmv(M, X)
    np.testing.assert_array_equal(Y[:, 0], spmv(M, X[:, 0]))
    np.testing.assert_array_equal(Y[:, 1], spmv(M, X[:, 1]))


def test_transpose_and_symmetry_helpers():
    A = CsrMatrix.from_dense([[2.0, 1.0], [1.0, 3.0]])
    assert A.asymmetry() == 0.0
    assert M2.transpose().to_dense().tolist() == [[1.0, 0.0], [2.0, 3.0]]
    assert M2.asymmetry() == 2.0
    np.testing.assert_allclose(M2.row_norms(), [np.sqrt(5.0), 3.0])
