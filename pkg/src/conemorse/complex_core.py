"""Graded cochain complexes over Q, mapping cones, and the Morse-type checks
built on them.

Degrees are always the user-facing ones (the cone starts at degree -1).  Any
degree outside a complex's range is a zero-dimensional space, and any
differential touching it is the empty matrix of the right shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from conemorse.linalg_q import (
    RationalMatrix,
    Vector,
    block,
    column_space_basis,
    kernel_basis,
    rank_q,
    solve,
)


class ComplexError(ValueError):
    """Base class for malformed complex data."""


class GradingError(ComplexError):
    pass


class NilpotencyError(ComplexError):
    pass


class InvalidConeData(ComplexError):
    pass


class NotACocycleImage(ComplexError):
    pass


@dataclass(frozen=True)
class GradedComplex:
    """Finite cochain complex ``d_k: C^k -> C^{k+1}`` for ``min_degree <= k <= max_degree``."""

    min_degree: int
    max_degree: int
    dims: Mapping[int, int]
    differentials: Mapping[int, RationalMatrix]
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        for k in range(self.min_degree - 1, self.max_degree + 1):
            d = self.differential(k)
            if d.shape != (self.dim(k + 1), self.dim(k)):
                raise GradingError(
                    f"d_{k} has shape {d.shape}, expected {(self.dim(k + 1), self.dim(k))}"
                )
        if self.check:
            for k in range(self.min_degree, self.max_degree):
                if not (self.differential(k + 1) @ self.differential(k)).is_zero():
                    raise NilpotencyError(f"d_{k + 1} d_{k} != 0")

    @property
    def degrees(self) -> range:
        return range(self.min_degree, self.max_degree + 1)

    def dim(self, k: int) -> int:
        if k < self.min_degree or k > self.max_degree:
            return 0
        return self.dims.get(k, 0)

    def differential(self, k: int) -> RationalMatrix:
        d = self.differentials.get(k)
        if d is None or k < self.min_degree or k > self.max_degree:
            return RationalMatrix.zeros(self.dim(k + 1), self.dim(k))
        return d


@dataclass(frozen=True)
class ChainMapPair:
    """A Thom-Smale type complex together with a degree-``ell`` cone map.

    ``dims[k]`` is the dimension in degree ``k`` for ``0 <= k <= len(dims)-1``;
    ``partial[k]`` maps degree k to k+1 and ``cone_map[k]`` maps degree k to
    k+ell.  Missing entries are zero.
    """

    dims: tuple[int, ...]
    partial: Mapping[int, RationalMatrix]
    cone_map: Mapping[int, RationalMatrix]
    ell: int

    @property
    def top(self) -> int:
        return len(self.dims) - 1

    def dim(self, k: int) -> int:
        return self.dims[k] if 0 <= k < len(self.dims) else 0

    def d(self, k: int) -> RationalMatrix:
        m = self.partial.get(k)
        return m if m is not None else RationalMatrix.zeros(self.dim(k + 1), self.dim(k))

    def c(self, k: int) -> RationalMatrix:
        m = self.cone_map.get(k)
        return m if m is not None else RationalMatrix.zeros(self.dim(k + self.ell), self.dim(k))

    def base_complex(self) -> GradedComplex:
        return GradedComplex(0, self.top, {k: self.dim(k) for k in range(len(self.dims))},
                             {k: self.d(k) for k in range(len(self.dims))})

    def check(self) -> None:
        """Raise unless the shapes are right, the boundary squares to zero and
        the cone map anticommutes with it."""
        if self.ell < 0:
            raise GradingError("ell must be nonnegative")
        for k in range(-1, self.top + 1):
            if self.d(k).shape != (self.dim(k + 1), self.dim(k)):
                raise GradingError(f"partial at degree {k} has shape {self.d(k).shape}")
            if self.c(k).shape != (self.dim(k + self.ell), self.dim(k)):
                raise GradingError(f"cone map at degree {k} has shape {self.c(k).shape}")
        for k in range(0, self.top):
            if not (self.d(k + 1) @ self.d(k)).is_zero():
                raise NilpotencyError(f"partial^2 != 0 at degree {k}")
        sign = (-1) ** self.ell
        for k in range(0, self.top + 1):
            lhs = self.d(k + self.ell) @ self.c(k)
            rhs = (self.c(k + 1) @ self.d(k)).scale(sign)
            if lhs != rhs:
                raise InvalidConeData(f"invalid cone data: anticommutation fails at degree {k}")


def cohomology_dims(C: GradedComplex) -> dict[int, int]:
    for k in range(C.min_degree, C.max_degree):
        if not (C.differential(k + 1) @ C.differential(k)).is_zero():
            raise NilpotencyError(f"d_{k + 1} d_{k} != 0")
    out = {}
    for k in C.degrees:
        out[k] = C.dim(k) - rank_q(C.differential(k)) - rank_q(C.differential(k - 1))
    return out


def mapping_cone(pair: ChainMapPair) -> GradedComplex:
    """Cone complex on ``C^k + C^{k-ell+1}`` with differential
    ``[[partial, C], [0, (-1)^(ell-1) partial]]``.

    Degrees run from -1 to ``top + ell - 1``, except that for ``ell = 0`` the
    space ``C^top + 0`` in degree ``top`` is kept as well.
    """
    pair.check()
    ell = pair.ell
    sign = (-1) ** (ell - 1)
    lo, hi = -1, max(pair.top, pair.top + ell - 1)
    dims = {k: pair.dim(k) + pair.dim(k - ell + 1) for k in range(lo, hi + 1)}
    diffs = {}
    for k in range(lo, hi + 1):
        top = pair.d(k)
        corner = pair.c(k - ell + 1)
        bottom = pair.d(k - ell + 1).scale(sign)
        zero = RationalMatrix.zeros(pair.dim(k - ell + 2), pair.dim(k))
        diffs[k] = block([[top, corner], [zero, bottom]])
    return GradedComplex(lo, hi, dims, diffs)


def _cohomology_basis(pair: ChainMapPair, k: int) -> tuple[list[Vector], list[Vector]]:
    """(image basis of partial_{k-1}, chosen cohomology representatives at k).

    Representatives are the kernel basis vectors (free-column order) that are
    independent of the image and of earlier choices.
    """
    n = pair.dim(k)
    d_prev = pair.d(k - 1)
    image = column_space_basis([d_prev.column(j) for j in range(d_prev.cols)], n)
    reps: list[Vector] = []
    span = list(image)
    for z in kernel_basis(pair.d(k)):
        trial = RationalMatrix.from_columns(span + [z], n)
        if rank_q(trial) > len(span):
            span.append(z)
            reps.append(z)
    return image, reps


def induced_cohomology_map(pair: ChainMapPair, k: int, verify: bool = True) -> RationalMatrix:
    """Matrix of the map H^k -> H^{k+ell} induced by the cone map, in the
    first-kernel-pivot cohomology bases.

    With ``verify=False`` the pair is not pre-checked, and a cone map that
    sends a cocycle to a non-cocycle raises :class:`NotACocycleImage`.
    """
    if verify:
        pair.check()
    _, src = _cohomology_basis(pair, k)
    tgt_image, tgt = _cohomology_basis(pair, k + pair.ell)
    n_tgt = pair.dim(k + pair.ell)
    images = [pair.c(k) @ z for z in src]
    for w in images:
        if any(x != 0 for x in pair.d(k + pair.ell) @ w):
            raise NotACocycleImage(f"cone map image of a degree-{k} cocycle is not closed")
    if not src or not tgt:
        return RationalMatrix.zeros(len(tgt), len(src))
    basis = RationalMatrix.from_columns(tgt_image + tgt, n_tgt)
    cols = []
    for w in images:
        coeffs = solve(basis, w)
        if coeffs is None:  # pragma: no cover - impossible for a closed w
            raise NotACocycleImage("closed vector not in span of image and representatives")
        cols.append(coeffs[len(tgt_image):])
    return RationalMatrix.from_columns(cols, len(tgt))


@dataclass(frozen=True)
class DecompositionRow:
    degree: int
    coker_dim: int
    ker_dim: int
    cone_betti: int

    @property
    def consistent(self) -> bool:
        return self.coker_dim + self.ker_dim == self.cone_betti


def decompose_cohomology(pair: ChainMapPair) -> list[DecompositionRow]:
    """Cone cohomology split as coker(H^{k-ell} -> H^k) + ker(H^{k-ell+1} -> H^{k+1})."""
    betti = cohomology_dims(pair.base_complex())
    b = lambda j: betti.get(j, 0)  # noqa: E731
    induced_rank = {}
    for j in range(-1, pair.top + 1):
        induced_rank[j] = rank_q(induced_cohomology_map(pair, j)) if 0 <= j <= pair.top else 0
    r = lambda j: induced_rank.get(j, 0)  # noqa: E731
    cone_b = cohomology_dims(mapping_cone(pair))
    rows = []
    ell = pair.ell
    for k in range(-1, max(pair.top, pair.top + ell - 1) + 1):
        row = DecompositionRow(k, b(k) - r(k - ell), b(k - ell + 1) - r(k - ell + 1), cone_b[k])
        if not row.consistent:
            raise AssertionError(f"decomposition inconsistent at degree {k}: {row}")
        rows.append(row)
    return rows


def _alt(values: Mapping[int, int], k: int, lo: int = -1) -> int:
    return sum((-1) ** (k - j) * values.get(j, 0) for j in range(lo, k + 1))


@dataclass(frozen=True)
class MorseEqualityReport:
    degrees: tuple[int, ...]
    R: tuple[int, ...]
    betti_alt: tuple[int, ...]
    mu_alt: tuple[int, ...]

    @property
    def residues(self) -> tuple[int, ...]:
        return tuple(r + b - m for r, b, m in zip(self.R, self.betti_alt, self.mu_alt))

    @property
    def passed(self) -> bool:
        return all(x == 0 for x in self.residues)


def morse_equalities(pair: ChainMapPair, mu: Mapping[int, int] | None = None) -> MorseEqualityReport:
    """Check ``R_k + sum (-1)^(k-j) b_j = sum (-1)^(k-j) (mu_j + mu_{j-ell+1})``."""
    mu = _mu_table(pair, mu)
    cone = mapping_cone(pair)
    bw = cohomology_dims(cone)
    ell = pair.ell
    degs = tuple(cone.degrees)
    R = tuple(rank_q(cone.differential(k)) for k in degs)
    shifted = {j: mu.get(j, 0) + mu.get(j - ell + 1, 0) for j in degs}
    return MorseEqualityReport(degs, R, tuple(_alt(bw, k) for k in degs), tuple(_alt(shifted, k) for k in degs))


@dataclass(frozen=True)
class MorseInequalityReport:
    degrees: tuple[int, ...]
    v: tuple[int, ...]
    lhs: tuple[int, ...]
    rhs: tuple[int, ...]

    @property
    def slacks(self) -> tuple[int, ...]:
        return tuple(r - l for l, r in zip(self.lhs, self.rhs))

    @property
    def passed(self) -> bool:
        return all(s >= 0 for s in self.slacks)


def morse_inequalities(pair: ChainMapPair, mu: Mapping[int, int] | None = None) -> MorseInequalityReport:
    """Alternating-sum bounds sharpened by the ranks ``v_k`` of the chain-level cone map."""
    mu = _mu_table(pair, mu)
    cone = mapping_cone(pair)
    bw = cohomology_dims(cone)
    ell = pair.ell
    degs = tuple(cone.degrees)
    v = {k: rank_q(pair.c(k)) for k in range(-1 - ell, pair.top + 1)}
    terms = {
        j: mu.get(j, 0) - v.get(j - ell, 0) + mu.get(j - ell + 1, 0) - v.get(j - ell + 1, 0) for j in degs
    }
    return MorseInequalityReport(
        degs,
        tuple(v.get(k, 0) for k in degs),
        tuple(_alt(bw, k) for k in degs),
        tuple(_alt(terms, k) for k in degs),
    )


def _mu_table(pair: ChainMapPair, mu: Mapping[int, int] | None) -> dict[int, int]:
    if mu is None:
        return {k: pair.dim(k) for k in range(len(pair.dims))}
    mu = dict(mu)
    for k in range(len(pair.dims)):
        if mu.get(k, 0) != pair.dim(k):
            raise GradingError(f"mu_{k} = {mu.get(k, 0)} but the complex has dimension {pair.dim(k)}")
    return mu


def negate_cone_map(pair: ChainMapPair) -> ChainMapPair:
    return ChainMapPair(pair.dims, pair.partial, {k: -c for k, c in pair.cone_map.items()}, pair.ell)


def zero_cone_map(pair: ChainMapPair) -> ChainMapPair:
    return ChainMapPair(pair.dims, pair.partial, {}, pair.ell)


def as_fraction_rows(M: RationalMatrix) -> list[list[str]]:
    return [[str(Fraction(a)) for a in r] for r in M.entries]


def _unit_upper(rng, n: int) -> RationalMatrix:
    rows = [[1 if i == j else (rng.randint(-2, 2) if j > i else 0) for j in range(n)] for i in range(n)]
    perm = list(range(n))
    rng.shuffle(perm)
    return RationalMatrix.from_rows([rows[p] for p in perm], cols=n)


def random_chain_map_pair(rng, max_top: int = 3, max_betti: int = 2) -> ChainMapPair:
    """Random valid pair: a split complex conjugated by random integer changes
    of basis, plus a cone map drawn from the exact solution space of the
    anticommutation constraints.  ``rng`` is a :class:`random.Random`."""
    from conemorse.linalg_q import inverse

    top = rng.randint(1, max_top)
    ell = rng.randint(0, top)
    h = [rng.randint(0, max_betti) for _ in range(top + 1)]
    p = [rng.randint(0, 1) for _ in range(top)]
    dims = tuple(h[k] + (p[k] if k < top else 0) + (p[k - 1] if k > 0 else 0) for k in range(top + 1))
    # standard basis order in degree k: harmonic, sources of d_k, targets of d_{k-1}
    split = {}
    for k in range(top):
        D = [[0] * dims[k] for _ in range(dims[k + 1])]
        if p[k]:
            src = h[k]
            tgt = h[k + 1] + (p[k + 1] if k + 1 < top else 0)
            D[tgt][src] = 1
        split[k] = RationalMatrix.from_rows(D, cols=dims[k])
    G = {k: _unit_upper(rng, dims[k]) for k in range(top + 1)}
    partial = {k: G[k + 1] @ split[k] @ inverse(G[k]) for k in range(top)}
    pair0 = ChainMapPair(dims, partial, {}, ell)

    # unknown cone maps C_k: dims[k] -> dims[k+ell], vectorised row-major
    slots = {}
    offset = 0
    for k in range(top + 1 - ell):
        slots[k] = offset
        offset += dims[k + ell] * dims[k]
    if offset == 0:
        return pair0
    sign = (-1) ** ell
    equations = []
    for k in range(top + 1 - ell):
        # (partial_{k+ell} C_k - sign C_{k+1} partial_k)[a, b] = 0
        dk_ell = pair0.d(k + ell)
        dk = pair0.d(k)
        for a in range(pair0.dim(k + ell + 1)):
            for b in range(dims[k]):
                row = [0] * offset
                for r in range(dims[k + ell]):
                    coef = dk_ell[a, r]
                    if coef:
                        row[slots[k] + r * dims[k] + b] += coef
                if k + 1 in slots:
                    for s in range(dims[k + 1]):
                        coef = dk[s, b]
                        if coef:
                            row[slots[k + 1] + a * dims[k + 1] + s] -= sign * coef
                equations.append(row)
    if equations:
        sols = kernel_basis(RationalMatrix.from_rows(equations, cols=offset))
    else:
        sols = kernel_basis(RationalMatrix.zeros(0, offset))
    x = [Fraction(0)] * offset
    for v in sols:
        c = rng.randint(-2, 2)
        x = [xi + c * vi for xi, vi in zip(x, v)]
    cone_map = {}
    for k, start in slots.items():
        r, c = dims[k + ell], dims[k]
        cone_map[k] = RationalMatrix.from_rows(
            [x[start + i * c: start + (i + 1) * c] for i in range(r)], cols=c
        )
    pair = ChainMapPair(dims, partial, cone_map, ell)
    pair.check()
    return pair
