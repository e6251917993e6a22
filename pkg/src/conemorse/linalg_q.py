"""Exact linear algebra over the rationals.

Matrices are immutable and hold :class:`fractions.Fraction` entries, which
are always in lowest terms with a positive denominator.  Elimination is plain
Gauss-Jordan with the first nonzero entry of each column as pivot, so every
result (ranks, kernel bases, solutions) is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

Vector = tuple[Fraction, ...]


def _q(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        if not x.is_integer():
            raise TypeError(f"refusing to coerce non-integral float {x!r}; pass a Fraction or a string")
        return Fraction(int(x))
    raise TypeError(f"cannot interpret {x!r} as a rational number")


@dataclass(frozen=True)
class RationalMatrix:
    rows: int
    cols: int
    entries: tuple[tuple[Fraction, ...], ...]

    def __post_init__(self):
        if self.rows < 0 or self.cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if len(self.entries) != self.rows or any(len(r) != self.cols for r in self.entries):
            raise ValueError(f"entries do not form a {self.rows}x{self.cols} array")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence], cols: int | None = None) -> "RationalMatrix":
        data = tuple(tuple(_q(x) for x in r) for r in rows)
        if cols is None:
            cols = len(data[0]) if data else 0
        return cls(len(data), cols, data)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "RationalMatrix":
        z = Fraction(0)
        return cls(rows, cols, tuple((z,) * cols for _ in range(rows)))

    @classmethod
    def identity(cls, n: int, scale=1) -> "RationalMatrix":
        c = _q(scale)
        z = Fraction(0)
        return cls(n, n, tuple(tuple(c if i == j else z for j in range(n)) for i in range(n)))

    @classmethod
    def from_columns(cls, columns: Sequence[Sequence], rows: int) -> "RationalMatrix":
        if not columns:
            return cls.zeros(rows, 0)
        return cls.from_rows([[col[i] for col in columns] for i in range(rows)], cols=len(columns))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def __getitem__(self, ij: tuple[int, int]) -> Fraction:
        i, j = ij
        return self.entries[i][j]

    def column(self, j: int) -> Vector:
        return tuple(r[j] for r in self.entries)

    @property
    def T(self) -> "RationalMatrix":
        return RationalMatrix(self.cols, self.rows, tuple(zip(*self.entries)) if self.rows else tuple(() for _ in range(self.cols)))

    def __matmul__(self, other):
        if isinstance(other, RationalMatrix):
            if self.cols != other.rows:
                raise ValueError(f"shape mismatch {self.shape} @ {other.shape}")
            ocols = other.T.entries
            z = Fraction(0)
            out = tuple(
                tuple(sum((a * b for a, b in zip(r, c) if a and b), z) for c in ocols) if other.cols else ()
                for r in self.entries
            )
            return RationalMatrix(self.rows, other.cols, out)
        vec = tuple(_q(x) for x in other)
        if len(vec) != self.cols:
            raise ValueError(f"shape mismatch {self.shape} @ vector of length {len(vec)}")
        return tuple(sum((a * b for a, b in zip(r, vec) if a and b), Fraction(0)) for r in self.entries)

    def _combine(self, other: "RationalMatrix", sign: int) -> "RationalMatrix":
        if self.shape != other.shape:
            raise ValueError(f"shape mismatch {self.shape} vs {other.shape}")
        return RationalMatrix(
            self.rows,
            self.cols,
            tuple(tuple(a + sign * b for a, b in zip(r, s)) for r, s in zip(self.entries, other.entries)),
        )

    def __add__(self, other: "RationalMatrix") -> "RationalMatrix":
        return self._combine(other, 1)

    def __sub__(self, other: "RationalMatrix") -> "RationalMatrix":
        return self._combine(other, -1)

    def __neg__(self) -> "RationalMatrix":
        return self.scale(-1)

    def scale(self, c) -> "RationalMatrix":
        c = _q(c)
        return RationalMatrix(self.rows, self.cols, tuple(tuple(c * a for a in r) for r in self.entries))

    def is_zero(self) -> bool:
        return all(a == 0 for r in self.entries for a in r)

    def to_float(self):
        import numpy as np

        return np.array([[float(a) for a in r] for r in self.entries], dtype=float).reshape(self.rows, self.cols)

    def __repr__(self) -> str:
        body = "; ".join(" ".join(str(a) for a in r) for r in self.entries)
        return f"RationalMatrix({self.rows}x{self.cols}: [{body}])"


def block(blocks: Sequence[Sequence[RationalMatrix]]) -> RationalMatrix:
    """Assemble a block matrix; every block row must agree on height."""
    rows: list[list[Fraction]] = []
    ncols = None
    for brow in blocks:
        height = brow[0].rows
        if any(b.rows != height for b in brow):
            raise ValueError("block row heights disagree")
        width = sum(b.cols for b in brow)
        if ncols is None:
            ncols = width
        elif width != ncols:
            raise ValueError("block column widths disagree")
        for i in range(height):
            rows.append([a for b in brow for a in b.entries[i]])
    return RationalMatrix(len(rows), ncols or 0, tuple(tuple(r) for r in rows))


def rref(M: RationalMatrix) -> tuple[list[list[Fraction]], list[int]]:
    """Reduced row echelon form and the pivot columns."""
    A = [list(r) for r in M.entries]
    pivots: list[int] = []
    r = 0
    for c in range(M.cols):
        if r == M.rows:
            break
        p = next((i for i in range(r, M.rows) if A[i][c] != 0), None)
        if p is None:
            continue
        A[r], A[p] = A[p], A[r]
        inv = 1 / A[r][c]
        A[r] = [a * inv for a in A[r]]
        for i in range(M.rows):
            if i != r and A[i][c] != 0:
                f = A[i][c]
                A[i] = [a - f * b for a, b in zip(A[i], A[r])]
        pivots.append(c)
        r += 1
    return A, pivots


def rank_q(M: RationalMatrix) -> int:
    if M.rows == 0 or M.cols == 0:
        return 0
    return len(rref(M)[1])


def kernel_basis(M: RationalMatrix) -> list[Vector]:
    """Basis of the null space, one vector per free column in increasing order.

    Each vector has a 1 in its free column and zeros in the other free
    columns, so the basis is canonical for a given matrix.
    """
    if M.rows == 0:
        return [tuple(Fraction(int(i == j)) for i in range(M.cols)) for j in range(M.cols)]
    R, pivots = rref(M)
    pivot_set = set(pivots)
    basis = []
    for free in range(M.cols):
        if free in pivot_set:
            continue
        v = [Fraction(0)] * M.cols
        v[free] = Fraction(1)
        for row, pc in enumerate(pivots):
            v[pc] = -R[row][free]
        basis.append(tuple(v))
    return basis


def solve(A: RationalMatrix, b: Iterable) -> Vector | None:
    """One exact solution of ``A x = b`` (free variables set to 0), or None."""
    b = tuple(_q(x) for x in b)
    if len(b) != A.rows:
        raise ValueError("right-hand side has wrong length")
    aug = RationalMatrix(A.rows, A.cols + 1, tuple(r + (bi,) for r, bi in zip(A.entries, b)))
    R, pivots = rref(aug)
    if A.cols in pivots:
        return None
    x = [Fraction(0)] * A.cols
    for row, pc in enumerate(pivots):
        x[pc] = R[row][A.cols]
    return tuple(x)


def column_space_basis(vectors: Sequence[Vector], dim: int) -> list[Vector]:
    """Greedy independent subset, scanning in the given order."""
    chosen: list[Vector] = []
    for v in vectors:
        trial = RationalMatrix.from_columns(chosen + [v], dim)
        if rank_q(trial) > len(chosen):
            chosen.append(tuple(v))
    return chosen


def inverse(M: RationalMatrix) -> RationalMatrix:
    if M.rows != M.cols:
        raise ValueError("only square matrices are invertible")
    n = M.rows
    aug = block([[M, RationalMatrix.identity(n)]])
    R, pivots = rref(aug)
    if pivots[:n] != list(range(n)):
        raise ZeroDivisionError("matrix is singular")
    return RationalMatrix(n, n, tuple(tuple(r[n:]) for r in R))
