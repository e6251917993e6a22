"""Cubical discrete exterior calculus on the flat unit torus T^m (m = 1, 2).

Cell conventions, used by every operator here:

* a k-cell is a pair ``(J, v)``: ``J`` a sorted tuple of k axes, ``v`` the
  base vertex (lexicographically smallest corner) as a tuple of integer
  coordinates; the cell spans ``v + [0, h]^J`` and is oriented by the
  axis order of ``J``;
* k-cells are enumerated block by block over ``itertools.combinations``
  of the axes, and within a block by the flat vertex index with axis 0
  varying fastest;
* cochain values are integrals over cells, so ``dx`` is ``h`` on every
  x-edge.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

Cell = tuple[tuple[int, ...], tuple[int, ...]]


@dataclass(frozen=True)
class PeriodicGrid:
    m: int
    n: int

    def __post_init__(self):
        if self.m not in (1, 2):
            raise ValueError(f"only m = 1 or 2 is supported, got m = {self.m}")
        if self.n < 4:
            raise ValueError(f"need n >= 4 cells per axis, got n = {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def n_vertices(self) -> int:
        return self.n**self.m

    def directions(self, k: int) -> list[tuple[int, ...]]:
        return list(itertools.combinations(range(self.m), k))

    def n_cells(self, k: int) -> int:
        if k < 0 or k > self.m:
            return 0
        return math.comb(self.m, k) * self.n_vertices

    def vertex_index(self, v) -> int:
        return sum((c % self.n) * self.n**a for a, c in enumerate(v))

    def vertex(self, i: int) -> tuple[int, ...]:
        return tuple((i // self.n**a) % self.n for a in range(self.m))

    def cell_index(self, J: tuple[int, ...], v) -> int:
        return self.directions(len(J)).index(tuple(J)) * self.n_vertices + self.vertex_index(v)

    def cells(self, k: int) -> list[Cell]:
        return [(J, self.vertex(i)) for J in self.directions(k) for i in range(self.n_vertices)]

    @cached_property
    def vertex_coords(self) -> np.ndarray:
        """(n^m, m) array of vertex positions in [0, 1)."""
        idx = np.arange(self.n_vertices)
        return np.stack([((idx // self.n**a) % self.n) * self.h for a in range(self.m)], axis=1)

    def base_vertex_indices(self, k: int) -> np.ndarray:
        """Flat base-vertex index of every k-cell."""
        return np.tile(np.arange(self.n_vertices), math.comb(self.m, k))

    def shift(self, k: int, axes) -> np.ndarray:
        """For every k-cell, the index of the k-cell with the same directions
        based at ``v + sum(e_a for a in axes)``."""
        idx = np.arange(self.n_vertices)
        coords = [(idx // self.n**a) % self.n for a in range(self.m)]
        for a in axes:
            coords[a] = (coords[a] + 1) % self.n
        moved = sum(c * self.n**a for a, c in enumerate(coords))
        blocks = math.comb(self.m, k)
        return np.concatenate([moved + b * self.n_vertices for b in range(blocks)]) if blocks else moved[:0]


@dataclass(frozen=True)
class Cochain:
    grid: PeriodicGrid
    degree: int
    values: np.ndarray

    def __post_init__(self):
        if not 0 <= self.degree <= self.grid.m:
            raise ValueError(f"degree {self.degree} outside [0, {self.grid.m}]")
        if len(self.values) != self.grid.n_cells(self.degree):
            raise ValueError(
                f"{len(self.values)} values for {self.grid.n_cells(self.degree)} cells of degree {self.degree}"
            )

    def norm(self) -> float:
        return float(np.sqrt(self.values @ (mass_inner(self.grid, self.degree).diagonal() * self.values)))


@dataclass(frozen=True)
class GridOperator:
    """Sparse linear map from degree-``dom`` cochains to degree-``cod`` cochains."""

    grid: PeriodicGrid
    dom: int
    cod: int
    matrix: sp.csr_matrix

    def __post_init__(self):
        shape = (self.grid.n_cells(self.cod), self.grid.n_cells(self.dom))
        if self.matrix.shape != shape:
            raise ValueError(f"operator shape {self.matrix.shape} != {shape}")

    def __call__(self, c: Cochain | np.ndarray) -> Cochain:
        if isinstance(c, Cochain):
            if c.degree != self.dom:
                raise ValueError(f"operator expects degree {self.dom}, got {c.degree}")
            c = c.values
        return Cochain(self.grid, self.cod, self.matrix @ c)

    def __matmul__(self, other: "GridOperator") -> "GridOperator":
        if other.cod != self.dom:
            raise ValueError("degree mismatch in composition")
        return GridOperator(self.grid, other.dom, self.cod, (self.matrix @ other.matrix).tocsr())

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def d_op(grid: PeriodicGrid, k: int) -> GridOperator:
    """Cubical coboundary: ``(da)(J, v) = sum_i (-1)^i [a(J - j_i, v + e_{j_i}) - a(J - j_i, v)]``."""
    if not 0 <= k < grid.m:
        raise ValueError(f"d is defined for 0 <= k < {grid.m}, got k = {k}")
    nv = grid.n_vertices
    rows, cols, vals = [], [], []
    src_dirs = grid.directions(k)
    for b, J in enumerate(grid.directions(k + 1)):
        out = b * nv + np.arange(nv)
        for pos, j in enumerate(J):
            face = tuple(a for a in J if a != j)
            fb = src_dirs.index(face)
            sign = (-1) ** pos
            base = fb * nv + np.arange(nv)
            moved = grid.shift(k, (j,))[base]
            rows += [out, out]
            cols += [moved, base]
            vals += [np.full(nv, sign, float), np.full(nv, -sign, float)]
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_cells(k + 1), grid.n_cells(k)),
    )
    return GridOperator(grid, k, k + 1, M)


def mass_inner(grid: PeriodicGrid, k: int) -> sp.dia_matrix:
    """Diagonal L^2 weights ``h^(m - 2k)`` per k-cell."""
    if not 0 <= k <= grid.m:
        raise ValueError(f"degree {k} outside [0, {grid.m}]")
    w = grid.h ** (grid.m - 2 * k)
    return sp.diags(np.full(grid.n_cells(k), w))


def inner(a: Cochain, b: Cochain) -> float:
    if a.degree != b.degree:
        return 0.0
    return float(a.values @ (mass_inner(a.grid, a.degree).diagonal() * b.values))


def sample_zero_form(grid: PeriodicGrid, f: Callable[..., np.ndarray]) -> Cochain:
    """Evaluate ``f(x)`` (m=1) or ``f(x, y)`` (m=2) at every vertex."""
    xs = grid.vertex_coords
    vals = np.asarray(f(*xs.T), dtype=float)
    return Cochain(grid, 0, np.broadcast_to(vals, (grid.n_vertices,)).copy())


def sample_form(grid: PeriodicGrid, k: int, coefficients) -> Cochain:
    """Cochain of a constant-coefficient k-form.

    ``coefficients`` maps an axis tuple (e.g. ``(0,)`` for dx, ``(0, 1)`` for
    dx^dy) to a number; for k = 0 a bare number is accepted.  Callables are
    rejected, since only constant forms are supported.
    """
    if not 0 <= k <= grid.m:
        raise ValueError(f"degree {k} outside [0, {grid.m}]")
    if not isinstance(coefficients, Mapping):
        coefficients = {(): coefficients} if k == 0 else None
    if coefficients is None:
        raise ValueError("k-form coefficients must be a mapping from axis tuples to constants")
    vals = np.zeros(grid.n_cells(k))
    dirs = grid.directions(k)
    for J, c in coefficients.items():
        J = tuple(J)
        if callable(c) or not np.isscalar(c):
            raise ValueError("only constant coefficients are supported")
        if J not in dirs:
            raise ValueError(f"axes {J} do not name a {k}-form direction on T^{grid.m}")
        b = dirs.index(J)
        vals[b * grid.n_vertices:(b + 1) * grid.n_vertices] = float(c) * grid.h**k
    return Cochain(grid, k, vals)


def _shuffle_sign(seq) -> int:
    inv = sum(1 for i in range(len(seq)) for j in range(i + 1, len(seq)) if seq[i] > seq[j])
    return -1 if inv % 2 else 1


class NotClosedError(ValueError):
    pass


def is_closed(omega: Cochain, tol: float = 0.0) -> bool:
    if omega.degree == omega.grid.m:
        return True
    dw = d_op(omega.grid, omega.degree)(omega).values
    scale = max(1.0, float(np.abs(omega.values).max(initial=0.0)))
    return float(np.abs(dw).max(initial=0.0)) <= tol * scale


def cup_with(grid: PeriodicGrid, omega: Cochain, k: int, check: bool = True) -> GridOperator:
    """``beta -> omega cup beta`` on degree-k cochains (cubical cup product).

    ``(a cup b)(J, v) = sum over A + B = J of sign(A, B) a(A, v) b(B, v + e_A)``:
    front face spanned by ``A`` at ``v``, back face spanned by ``B`` at the
    far corner along ``A``.
    """
    ell = omega.degree
    if check and not is_closed(omega, tol=1e-12):
        raise NotClosedError("not closed: d(omega) != 0")
    if not 0 <= k <= grid.m - ell:
        return GridOperator(grid, k, k + ell, sp.csr_matrix((grid.n_cells(k + ell), grid.n_cells(k))))
    nv = grid.n_vertices
    odirs = grid.directions(ell)
    bdirs = grid.directions(k)
    rows, cols, vals = [], [], []
    for b, J in enumerate(grid.directions(k + ell)):
        out = b * nv + np.arange(nv)
        for A in itertools.combinations(J, ell):
            B = tuple(a for a in J if a not in A)
            sign = _shuffle_sign(A + B)
            wvals = omega.values[odirs.index(A) * nv + np.arange(nv)]
            src = grid.shift(k, A)[bdirs.index(B) * nv + np.arange(nv)]
            rows.append(out)
            cols.append(src)
            vals.append(sign * wvals)
    M = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(grid.n_cells(k + ell), grid.n_cells(k)),
    )
    M.eliminate_zeros()
    op = GridOperator(grid, k, k + ell, M)
    if check and k + ell < grid.m:
        _check_leibniz(grid, omega, op, k)
    return op


def _check_leibniz(grid: PeriodicGrid, omega: Cochain, op: GridOperator, k: int, samples: int = 4) -> None:
    """``d(omega cup b) = (-1)^ell omega cup db`` on a few seeded random b."""
    rng = np.random.default_rng(0)
    B = rng.standard_normal((grid.n_cells(k), samples))
    lhs = d_op(grid, k + omega.degree).matrix @ (op.matrix @ B)
    if k < grid.m:
        nxt = cup_with(grid, omega, k + 1, check=False).matrix
        rhs = (-1) ** omega.degree * (nxt @ (d_op(grid, k).matrix @ B))
    else:  # pragma: no cover - guarded by the caller
        rhs = np.zeros_like(lhs)
    scale = max(1.0, float(np.abs(B).max()) * float(np.abs(omega.values).max(initial=0.0)))
    if float(np.abs(lhs - rhs).max(initial=0.0)) > 1e-12 * scale:
        raise NotClosedError("Leibniz rule fails for this cup product; omega is not closed")


def adjoint(op: GridOperator) -> GridOperator:
    """``M_dom^{-1} op^T M_cod``: the adjoint for the mass inner products."""
    g = op.grid
    md = mass_inner(g, op.dom).diagonal()
    mc = mass_inner(g, op.cod).diagonal()
    M = sp.diags(1.0 / md) @ op.matrix.T @ sp.diags(mc)
    return GridOperator(g, op.cod, op.dom, M.tocsr())


def pointwise_norm(omega: Cochain) -> np.ndarray:
    """Pointwise norm ``sqrt(g(omega, omega))`` at each base vertex, reading
    each cell value as ``coefficient * h^degree``."""
    g = omega.grid
    nv = g.n_vertices
    coeffs = omega.values.reshape(-1, nv) / g.h**omega.degree
    return np.sqrt((coeffs**2).sum(axis=0))


def hodge_laplacian(grid: PeriodicGrid, k: int) -> np.ndarray:
    """Dense undeformed Hodge Laplacian ``d* d + d d*`` on k-cochains."""
    n = grid.n_cells(k)
    L = np.zeros((n, n))
    if k < grid.m:
        d = d_op(grid, k)
        L += (adjoint(d) @ d).toarray()
    if k > 0:
        d = d_op(grid, k - 1)
        L += (d @ adjoint(d)).toarray()
    return L
