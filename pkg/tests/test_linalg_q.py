from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conemorse.linalg_q import RationalMatrix, inverse, kernel_basis, rank_q, rref, solve


def oracle_rank(rows: list[list[int]]) -> int:
    """Fraction-free Bareiss elimination with pivot search, kept independent
    of the library code path."""
    A = [list(r) for r in rows]
    if not A or not A[0]:
        return 0
    m, n = len(A), len(A[0])
    rank, prev = 0, 1
    for c in range(n):
        piv = next((i for i in range(rank, m) if A[i][c] != 0), None)
        if piv is None:
            continue
        A[rank], A[piv] = A[piv], A[rank]
        for i in range(rank + 1, m):
            for j in range(c + 1, n):
                A[i][j] = (A[rank][c] * A[i][j] - A[i][c] * A[rank][j]) // prev
            A[i][c] = 0
        prev = A[rank][c]
        rank += 1
        if rank == m:
            break
    return rank


int_matrices = st.integers(1, 6).flatmap(
    lambda r: st.integers(1, 6).flatmap(
        lambda c: st.lists(st.lists(st.integers(-3, 3), min_size=c, max_size=c), min_size=r, max_size=r)
    )
)


def test_identity_rank():
    assert rank_q(RationalMatrix.identity(3)) == 3


def test_proportional_rows():
    assert rank_q(RationalMatrix.from_rows([[1, 2], [2, 4]])) == 1


def test_empty_matrices_have_rank_zero():
    assert rank_q(RationalMatrix.zeros(0, 4)) == 0
    assert rank_q(RationalMatrix.zeros(3, 0)) == 0


@settings(max_examples=200, deadline=None)
@given(int_matrices)
def test_rank_matches_bareiss_oracle(rows):
    assert rank_q(RationalMatrix.from_rows(rows)) == oracle_rank(rows)


def test_random_6x6_against_oracle():
    import random

    rng = random.Random(7)
    for _ in range(50):
        rows = [[rng.randint(-2, 2) for _ in range(6)] for _ in range(6)]
        assert rank_q(RationalMatrix.from_rows(rows)) == oracle_rank(rows)


def test_kernel_of_identity_is_empty():
    assert kernel_basis(RationalMatrix.identity(2)) == []


def test_kernel_of_zero_matrix_is_everything():
    assert len(kernel_basis(RationalMatrix.zeros(2, 3))) == 3


def test_kernel_of_single_row():
    M = RationalMatrix.from_rows([[1, 1, 0]])
    basis = kernel_basis(M)
    assert len(basis) == 2
    for v in basis:
        assert M @ v == (0,)


@settings(max_examples=100, deadline=None)
@given(int_matrices)
def test_rank_nullity(rows):
    M = RationalMatrix.from_rows(rows)
    basis = kernel_basis(M)
    assert len(basis) + rank_q(M) == M.cols
    for v in basis:
        assert all(x == 0 for x in M @ v)


def test_entries_are_canonical_fractions():
    M = RationalMatrix.from_rows([["2/4", Fraction(-3, -6)], [0, "-4/2"]])
    assert M[0, 0] == Fraction(1, 2) and M[0, 0].denominator == 2
    assert M[1, 1] == -2


def test_non_integral_float_rejected():
    with pytest.raises(TypeError):
        RationalMatrix.from_rows([[0.5]])


def test_rref_pivots_first_nonzero_column():
    _, piv = rref(RationalMatrix.from_rows([[0, 2, 4], [0, 1, 3]]))
    assert piv == [1, 2]


def test_solve_and_inverse():
    A = RationalMatrix.from_rows([[2, 1], [1, 1]])
    assert solve(A, [3, 2]) == (1, 1)
    assert inverse(A) @ A == RationalMatrix.identity(2)
    assert solve(RationalMatrix.from_rows([[1, 1], [1, 1]]), [1, 2]) is None
