"""Deformed mapping-cone operators on a periodic grid and their low spectrum.

The deformed differential is assembled by conjugation,
``d_ST = rho^{-1} d^omega rho`` with ``rho = diag(e^{Tf}, S^{-1} e^{Tf})``,
so it squares to zero and has the cohomology of the undeformed cone for every
``(S, T)``.  The function ``f`` is carried to a k-cell by its value at the
cell's base vertex.

All spectral work happens in orthonormal coordinates ``x -> sqrt(M) x``,
where the mass adjoint is the plain transpose.  The Laplacian in degree k is
``Q^T Q`` with ``Q = [d_k ; d_{k-1}^T]``; eigenpairs are taken from the SVD of
``Q`` so the exponentially small cluster keeps its relative accuracy.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from conemorse.complex_core import MorseEqualityReport
from conemorse.dec_grid import (
    Cochain,
    GridOperator,
    PeriodicGrid,
    cup_with,
    d_op,
    is_closed,
    mass_inner,
    NotClosedError,
    pointwise_norm,
    sample_zero_form,
)

ZERO_FLOOR = 1e-12
ZERO_EIGENVALUE = 1e-8
RANK_RTOL = 1e-8
RANK_ATOL = 1e-14
LEAKAGE_TOL = 1e-6
LINEAR_EXPONENT_CAP = 300.0


class SpectralError(RuntimeError):
    """Eigensolver failure or a violated spectral invariant."""


class OverflowRisk(ArithmeticError):
    pass


class ClusterLeakage(SpectralError):
    pass


class BumpTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class DeformParams:
    T: float
    log_S: float = 0.0
    c0: float | None = None

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        if math.isnan(self.log_S) or self.log_S == -math.inf:
            raise ValueError("S must be positive")

    @classmethod
    def fixed(cls, T: float, S: float) -> "DeformParams":
        if S <= 0:
            raise ValueError("S must be positive")
        return cls(T, math.log(S))

    @classmethod
    def scheduled(cls, T: float, c0: float) -> "DeformParams":
        """``S = exp(c0 T)``."""
        return cls(T, c0 * T, c0)

    @classmethod
    def decoupled(cls, T: float) -> "DeformParams":
        """The ``S -> inf`` limit, where the omega term drops out."""
        return cls(T, math.inf)

    @property
    def S(self) -> float:
        return math.exp(self.log_S) if math.isfinite(self.log_S) else math.inf

    @property
    def on_schedule(self) -> bool:
        return self.c0 is not None and math.isclose(self.log_S, self.c0 * self.T)


def torus_cos(grid: PeriodicGrid) -> Cochain:
    """``f = sum_a cos(2 pi x_a)``, the standard perfect-on-cohomology Morse function."""
    return sample_zero_form(grid, lambda *xs: sum(np.cos(2 * np.pi * x) for x in xs))


def default_c0(f: Cochain) -> float:
    return 1.0 + 2.0 * float(np.abs(f.values).max())


# -- conjugation -------------------------------------------------------------

@dataclass(frozen=True)
class ScalingMap:
    """Block-diagonal ``rho`` in cone degree k, stored as log-magnitudes."""

    degree: int
    log_first: np.ndarray
    log_second: np.ndarray

    @property
    def log_diagonal(self) -> np.ndarray:
        return np.concatenate([self.log_first, self.log_second])

    def diagonal(self) -> np.ndarray:
        ld = self.log_diagonal
        if ld.size and np.abs(ld).max() > LINEAR_EXPONENT_CAP + 700:
            raise OverflowRisk("scaling factors overflow double precision; use log mode")
        return np.exp(ld)

    def inverse_diagonal(self) -> np.ndarray:
        return np.exp(-self.log_diagonal)

    def matrix(self) -> sp.dia_matrix:
        return sp.diags(self.diagonal())

    def inverse(self) -> sp.dia_matrix:
        return sp.diags(self.inverse_diagonal())


def _dim(grid: PeriodicGrid, k: int) -> int:
    return grid.n_cells(k)


def scaling_map(grid: PeriodicGrid, f: Cochain, params: DeformParams, k: int, ell: int,
                mode: str = "linear") -> ScalingMap:
    """``rho_ST`` on ``X^k + X^{k-ell+1}``; k-cells read f at their base vertex."""
    if mode not in ("linear", "log"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "linear" and params.T * float(np.abs(f.values).max()) > LINEAR_EXPONENT_CAP:
        raise OverflowRisk(
            f"T * max|f| = {params.T * np.abs(f.values).max():.3g} > {LINEAR_EXPONENT_CAP}; use log mode"
        )

    def logs(j):
        if not 0 <= j <= grid.m:
            return np.zeros(0)
        return params.T * f.values[grid.base_vertex_indices(j)]

    return ScalingMap(k, logs(k), logs(k - ell + 1) - params.log_S)


# -- cone operator -----------------------------------------------------------

def _zeros(r: int, c: int) -> sp.csr_matrix:
    return sp.csr_matrix((r, c))


@dataclass
class ConeOperator:
    grid: PeriodicGrid
    f: Cochain
    omega: Cochain
    params: DeformParams
    blocks: dict[int, sp.csr_matrix]
    mode: str
    _dense: dict = field(default_factory=dict, repr=False)

    @property
    def ell(self) -> int:
        return self.omega.degree

    @property
    def degrees(self) -> range:
        m = self.grid.m
        return range(-1, max(m, m + self.ell - 1) + 1)

    def first_dim(self, k: int) -> int:
        return _dim(self.grid, k)

    def second_dim(self, k: int) -> int:
        return _dim(self.grid, k - self.ell + 1)

    def dim(self, k: int) -> int:
        return self.first_dim(k) + self.second_dim(k)

    def sqrt_mass(self, k: int) -> np.ndarray:
        parts = []
        for j in (k, k - self.ell + 1):
            if 0 <= j <= self.grid.m:
                parts.append(np.sqrt(mass_inner(self.grid, j).diagonal()))
        return np.concatenate(parts) if parts else np.zeros(0)

    def matrix(self, k: int) -> sp.csr_matrix:
        """Block matrix of ``d_ST`` from cone degree k to k+1 (cochain values)."""
        if k in self.blocks:
            return self.blocks[k]
        return _zeros(self.dim(k + 1), self.dim(k))

    def orthonormal(self, k: int) -> np.ndarray:
        """Dense ``sqrt(M_{k+1}) d_ST sqrt(M_k)^{-1}``."""
        if k not in self._dense:
            M = self.matrix(k)
            left = sp.diags(self.sqrt_mass(k + 1))
            right = sp.diags(1.0 / self.sqrt_mass(k)) if self.dim(k) else _zeros(0, 0)
            self._dense[k] = np.asarray((left @ M @ right).todense()) if M.shape[0] and M.shape[1] else np.zeros(M.shape)
        return self._dense[k]

    def apply(self, k: int, x: np.ndarray) -> np.ndarray:
        return self.matrix(k) @ x

    def nilpotency_defect(self) -> float:
        """max_k ||d_{k+1} d_k|| / (||d_{k+1}|| ||d_k||) in orthonormal coordinates."""
        worst = 0.0
        for k in self.degrees:
            a, b = self.orthonormal(k), self.orthonormal(k + 1)
            if not (a.size and b.size):
                continue
            scale = np.linalg.norm(a) * np.linalg.norm(b)
            if scale:
                worst = max(worst, float(np.linalg.norm(b @ a) / scale))
        return worst


def undeformed_blocks(grid: PeriodicGrid, omega: Cochain) -> dict[int, sp.csr_matrix]:
    """Blocks ``[[d, omega cup], [0, (-1)^(ell-1) d]]`` for every cone degree."""
    m, ell = grid.m, omega.degree
    sign = (-1) ** (ell - 1)

    def d(j):
        if 0 <= j < m:
            return d_op(grid, j).matrix
        return _zeros(_dim(grid, j + 1), _dim(grid, j))

    blocks = {}
    for k in range(-1, max(m, m + ell - 1) + 1):
        j = k - ell + 1
        if 0 <= j <= m - ell:
            W = cup_with(grid, omega, j, check=False).matrix
        else:
            W = _zeros(_dim(grid, k + 1), _dim(grid, j))
        top = sp.hstack([d(k), W], format="csr")
        bottom = sp.hstack([_zeros(_dim(grid, j + 1), _dim(grid, k)), sign * d(j)], format="csr")
        blocks[k] = sp.vstack([top, bottom], format="csr")
    return blocks


def cone_operator(grid: PeriodicGrid, f: Cochain, omega: Cochain, params: DeformParams,
                  mode: str = "auto", nilpotency_tol: float = 1e-10) -> ConeOperator:
    """Assemble ``d_ST = rho^{-1} d^omega rho`` in every cone degree.

    ``mode="linear"`` multiplies by explicit diagonal matrices and refuses
    ``T max|f| > 300``; ``mode="log"`` scales each entry by
    ``exp(log rho_col - log rho_row)``; ``"auto"`` picks linear when safe.
    """
    if f.degree != 0:
        raise ValueError("f must be a 0-cochain")
    if not is_closed(omega, tol=1e-12):
        raise NotClosedError("not closed: d(omega) != 0")
    if math.isinf(params.log_S):
        # S = inf: the omega coupling vanishes and both summands carry e^{Tf}
        omega = Cochain(grid, omega.degree, np.zeros_like(omega.values))
        scale_params = DeformParams(params.T, 0.0)
    else:
        scale_params = params
    if mode == "auto":
        mode = "linear" if params.T * float(np.abs(f.values).max()) <= LINEAR_EXPONENT_CAP and scale_params.log_S <= 700 else "log"
    base = undeformed_blocks(grid, omega)
    blocks = {}
    for k, B in base.items():
        if mode == "linear":
            rho_in = scaling_map(grid, f, scale_params, k, omega.degree, mode="linear")
            rho_out = scaling_map(grid, f, scale_params, k + 1, omega.degree, mode="linear")
            blocks[k] = (rho_out.inverse() @ B @ rho_in.matrix()).tocsr()
        elif mode == "log":
            rho_in = scaling_map(grid, f, scale_params, k, omega.degree, mode="log").log_diagonal
            rho_out = scaling_map(grid, f, scale_params, k + 1, omega.degree, mode="log").log_diagonal
            C = B.tocoo()
            vals = C.data * np.exp(rho_in[C.col] - rho_out[C.row])
            blocks[k] = sp.csr_matrix((vals, (C.row, C.col)), shape=B.shape)
        else:
            raise ValueError(f"unknown mode {mode!r}")
    cone = ConeOperator(grid, f, omega, params, blocks, mode)
    defect = cone.nilpotency_defect()
    if defect > nilpotency_tol:
        raise SpectralError(f"(d_ST)^2 relative defect {defect:.3e} exceeds {nilpotency_tol}")
    return cone


# -- Laplacian and spectrum --------------------------------------------------

@dataclass(frozen=True)
class DiracLaplacian:
    """``D_ST^2`` in cone degree k.

    ``factor`` is ``Q = [d_k ; d_{k-1}^T]`` in orthonormal coordinates and
    ``matrix = Q^T Q`` is the symmetric form of the Laplacian there.
    """

    degree: int
    factor: np.ndarray
    matrix: np.ndarray
    sqrt_mass: np.ndarray
    first_dim: int

    @property
    def operator(self) -> np.ndarray:
        """The Laplacian acting on cochain values (self-adjoint for the mass)."""
        s = self.sqrt_mass
        return (self.matrix / s[:, None]) * s[None, :]

    def symmetry_defect(self) -> float:
        A = self.operator
        Mw = self.sqrt_mass**2
        lhs = Mw[:, None] * A
        nrm = np.linalg.norm(lhs)
        return float(np.linalg.norm(lhs - lhs.T) / nrm) if nrm else 0.0


def dirac_laplacian(cone: ConeOperator, k: int) -> DiracLaplacian:
    dk = cone.orthonormal(k)
    dprev = cone.orthonormal(k - 1)
    Q = np.vstack([dk, dprev.T]) if cone.dim(k) else np.zeros((0, 0))
    return DiracLaplacian(k, Q, Q.T @ Q, cone.sqrt_mass(k), cone.first_dim(k))


@dataclass
class SpectralResult:
    degree: int
    eigenvalues: np.ndarray
    vectors: np.ndarray  # orthonormal coordinates, columns
    sqrt_mass: np.ndarray
    first_dim: int
    low_count: int
    gap_ratio: float
    threshold: float = 1.0

    @property
    def eigenvectors(self) -> np.ndarray:
        """Eigenvectors as cochain values, orthonormal for the block mass."""
        return self.vectors / self.sqrt_mass[:, None]

    @property
    def low_vectors(self) -> np.ndarray:
        return self.vectors[:, : self.low_count]

    def zero_count(self, cutoff: float = ZERO_EIGENVALUE) -> int:
        return int(np.count_nonzero(self.eigenvalues <= cutoff))


@dataclass(frozen=True)
class ClusterSplit:
    low_count: int
    gap_ratio: float
    mode: str


def _ratio(eigs: np.ndarray, n_low: int) -> float:
    if n_low == 0 or n_low == len(eigs):
        return math.inf
    return float(eigs[n_low] / max(eigs[n_low - 1], ZERO_FLOOR))


def cluster_split(eigenvalues, threshold: float = 1.0, mode: str = "threshold") -> ClusterSplit:
    """Split a sorted spectrum into a low cluster and the rest.

    ``threshold`` mode counts eigenvalues ``<= threshold``; ``gap`` mode cuts
    at the largest ratio between consecutive eigenvalues (small ones floored
    at 1e-12).  ``gap_ratio`` is the first high eigenvalue over the last low
    one, or ``inf`` when one side is empty.
    """
    eigs = np.asarray(getattr(eigenvalues, "eigenvalues", eigenvalues), dtype=float)
    if eigs.size and np.any(np.diff(eigs) < 0):
        raise ValueError("eigenvalues must be sorted ascending")
    if mode == "threshold":
        n_low = int(np.count_nonzero(eigs <= threshold))
    elif mode == "gap":
        if eigs.size < 2:
            n_low = int(eigs.size)
        else:
            floored = np.maximum(eigs, ZERO_FLOOR)
            n_low = int(np.argmax(floored[1:] / floored[:-1])) + 1
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return ClusterSplit(n_low, _ratio(eigs, n_low), mode)


def spectrum(lap: DiracLaplacian | np.ndarray, count: int | None = None, threshold: float = 1.0,
             method: str = "auto", check: bool = True) -> SpectralResult:
    """Full dense eigendecomposition of a Laplacian.

    A bare symmetric array is diagonalised with LAPACK ``eigh``.  For a
    :class:`DiracLaplacian` the default uses the SVD of its factor, whose
    squared singular values are the eigenvalues.  ``count`` keeps only the
    lowest eigenpairs.
    """
    if isinstance(lap, np.ndarray):
        lap = DiracLaplacian(0, np.zeros((0, lap.shape[0])), lap, np.ones(lap.shape[0]), lap.shape[0])
        if method == "auto":
            method = "eigh"
    if method == "auto":
        method = "svd"
    n = lap.matrix.shape[0]
    try:
        if n == 0:
            vals, vecs = np.zeros(0), np.zeros((0, 0))
        elif method == "svd":
            _, s, vt = np.linalg.svd(lap.factor, full_matrices=True)
            vals = np.zeros(n)
            vals[: len(s)] = s**2
            order = np.argsort(vals, kind="stable")
            vals, vecs = vals[order], vt.T[:, order]
        elif method == "eigh":
            vals, vecs = np.linalg.eigh(lap.matrix)
        else:
            raise ValueError(f"unknown method {method!r}")
    except np.linalg.LinAlgError as exc:
        fro = np.linalg.norm(lap.matrix)
        raise SpectralError(
            f"eigensolver did not converge in degree {lap.degree}: size {n}, "
            f"Frobenius norm {fro:.3e}, max |entry| {np.abs(lap.matrix).max():.3e} ({exc})"
        ) from exc
    if check and n:
        _check_spectrum(lap, vals, vecs)
    if count is not None:
        vals, vecs = vals[:count], vecs[:, :count]
    split = cluster_split(vals, threshold)
    return SpectralResult(lap.degree, vals, vecs, lap.sqrt_mass, lap.first_dim, split.low_count,
                          split.gap_ratio, threshold)


def _check_spectrum(lap: DiracLaplacian, vals: np.ndarray, vecs: np.ndarray) -> None:
    if vals.min() < -1e-10 * max(1.0, float(vals.max())):
        raise SpectralError(f"negative eigenvalue {vals.min():.3e} in degree {lap.degree}")
    gram = vecs.T @ vecs
    orth = float(np.abs(gram - np.eye(len(vals))).max())
    if orth > 1e-8:
        raise SpectralError(f"eigenvectors not orthonormal ({orth:.3e}) in degree {lap.degree}")
    resid = np.linalg.norm(lap.matrix @ vecs - vecs * vals, axis=0)
    bad = resid > 1e-7 * np.maximum(1.0, vals)
    if np.any(bad):
        i = int(np.argmax(resid / np.maximum(1.0, vals)))
        raise SpectralError(f"eigenpair residual {resid[i]:.3e} for eigenvalue {vals[i]:.3e} in degree {lap.degree}")


# -- instanton complex -------------------------------------------------------

@dataclass(frozen=True)
class InstantonComplex:
    dims: dict[int, int]
    ranks: dict[int, int]
    cohomology: dict[int, int]
    leakage: dict[int, float]
    singular_values: dict[int, np.ndarray]
    split: dict[int, bool]


def _summand_basis(vectors: np.ndarray, first_dim: int, tol: float = 1e-6):
    """Orthonormal bases of the first/second-summand parts of a subspace,
    or None when the subspace does not split along the summands."""
    if vectors.shape[1] == 0:
        return np.zeros((first_dim, 0)), np.zeros((vectors.shape[0] - first_dim, 0))
    out = []
    total = 0
    for part in (vectors[:first_dim], vectors[first_dim:]):
        if part.shape[0] == 0:
            out.append(np.zeros((0, 0)))
            continue
        u, s, _ = np.linalg.svd(part, full_matrices=False)
        full = s > 1 - tol
        if np.any((s > tol) & ~full):
            return None
        out.append(u[:, full])
        total += int(full.sum())
    if total != vectors.shape[1]:
        return None
    return out[0], out[1]


def _numerical_rank(sv: np.ndarray, floor: float) -> int:
    if sv.size == 0:
        return 0
    cutoff = max(RANK_RTOL * float(sv.max()), floor)
    return int(np.count_nonzero(sv > cutoff))


def instanton_complex(cone: ConeOperator, spectra: dict[int, SpectralResult]) -> InstantonComplex:
    """Restrict ``d_ST`` to the low clusters and read off ranks and cohomology.

    When the clusters split along the two summands (which they do once
    ``S^{-1}`` is negligible against the spectral gap), the off-diagonal
    block is multiplied by S before taking singular values.  This is a
    block-diagonal change of basis on the cluster, so ranks are unchanged,
    and it keeps the cone coupling far above round-off.

    Singular values count toward the rank when they exceed both 1e-8 times
    the largest one and ``1e-14 * max(1, a(omega))``.
    """
    dims = {k: spectra[k].low_count if k in spectra else 0 for k in cone.degrees}
    ranks, leak, svals, split_used = {}, {}, {}, {}
    for k in cone.degrees:
        if k not in spectra or k + 1 not in spectra or dims[k] == 0 or dims[k + 1] == 0:
            ranks[k] = 0
            leak[k] = 0.0
            svals[k] = np.zeros(0)
            split_used[k] = False
            continue
        d = cone.orthonormal(k)
        Vk = spectra[k].low_vectors
        Vn = spectra[k + 1].low_vectors
        image = d @ Vk
        scale = math.sqrt(max(float(spectra[k].eigenvalues[-1]), ZERO_FLOOR))
        rank_floor = RANK_ATOL * max(1.0, a_omega(cone.omega))
        outside = image - Vn @ (Vn.T @ image)
        leak[k] = float(np.linalg.norm(outside, 2) / scale)
        if leak[k] > LEAKAGE_TOL:
            raise ClusterLeakage(
                f"cluster leakage {leak[k]:.3e} in degree {k}: T too small or grid too coarse"
            )
        a0 = cone.first_dim(k)
        a1 = cone.first_dim(k + 1)
        src = _summand_basis(Vk, a0)
        dst = _summand_basis(Vn, a1)
        if src is not None and dst is not None:
            (Ha0, Hb0), (Ha1, Hb1) = src, dst
            tl = Ha1.T @ d[:a1, :a0] @ Ha0
            S = cone.params.S if math.isfinite(cone.params.log_S) else 1.0
            tr = S * (Ha1.T @ d[:a1, a0:] @ Hb0) if Ha1.size and Hb0.size else np.zeros((Ha1.shape[1], Hb0.shape[1]))
            br = Hb1.T @ d[a1:, a0:] @ Hb0 if Hb1.size and Hb0.size else np.zeros((Hb1.shape[1], Hb0.shape[1]))
            restricted = np.block([[tl, tr], [np.zeros((br.shape[0], tl.shape[1])), br]])
            split_used[k] = True
        else:
            restricted = Vn.T @ image
            split_used[k] = False
        sv = np.linalg.svd(restricted, compute_uv=False)
        svals[k] = sv
        ranks[k] = _numerical_rank(sv, rank_floor)
    cohom = {k: dims[k] - ranks.get(k, 0) - ranks.get(k - 1, 0) for k in cone.degrees}
    return InstantonComplex(dims, ranks, cohom, leak, svals, split_used)


def spectral_morse_equalities(inst: InstantonComplex, mu: dict[int, int], ell: int) -> MorseEqualityReport:
    """The Morse equalities evaluated with the spectral ranks ``R_k`` and the
    instanton cohomology in place of their combinatorial counterparts."""
    degs = tuple(sorted(inst.dims))
    shifted = {j: mu.get(j, 0) + mu.get(j - ell + 1, 0) for j in degs}

    def alt(vals, k):
        return sum((-1) ** (k - j) * vals.get(j, 0) for j in degs if j <= k)

    return MorseEqualityReport(degs, tuple(inst.ranks[k] for k in degs),
                               tuple(alt(inst.cohomology, k) for k in degs), tuple(alt(shifted, k) for k in degs))


# -- model cochains near critical points -------------------------------------

@dataclass(frozen=True)
class CriticalSite:
    name: str
    vertex: tuple[int, ...]
    index: int
    unstable_axes: tuple[int, ...]
    curvatures: tuple[float, ...]  # second differences of f along each axis
    value: float


def find_critical_sites(grid: PeriodicGrid, f: Cochain) -> list[CriticalSite]:
    """Vertices that are strict axis-wise extrema of the sampled f.

    Along each axis the vertex must be a strict local min or max of its two
    neighbours; the index counts the axes where it is a max.  This suits
    functions whose Hessian is diagonal in the grid axes, like
    :func:`torus_cos`.
    """
    n, h = grid.n, grid.h
    vals = f.values
    sites = []
    for i in range(grid.n_vertices):
        v = grid.vertex(i)
        curv, unstable, ok = [], [], True
        for a in range(grid.m):
            up = list(v); up[a] = (up[a] + 1) % n
            dn = list(v); dn[a] = (dn[a] - 1) % n
            fu, fd = vals[grid.vertex_index(up)], vals[grid.vertex_index(dn)]
            if fu > vals[i] and fd > vals[i]:
                pass
            elif fu < vals[i] and fd < vals[i]:
                unstable.append(a)
            else:
                ok = False
                break
            curv.append((fu - 2 * vals[i] + fd) / h**2)
        if ok:
            k = len(unstable)
            sites.append(CriticalSite(f"p{k}@" + ",".join(map(str, v)), v, k, tuple(unstable), tuple(curv), float(vals[i])))
    sites.sort(key=lambda s: (s.index, s.vertex))
    return sites


def _bump(r: np.ndarray, eps: float) -> np.ndarray:
    """1 on r <= eps/2, 0 on r >= eps, smooth raised cosine between."""
    t = np.clip((r - eps / 2) / (eps / 2), 0.0, 1.0)
    return 0.5 * (1 + np.cos(np.pi * t))


def gaussian_model_cochain(grid: PeriodicGrid, site: CriticalSite, T: float, eps: float = 0.2) -> Cochain:
    """Normalised ``bump * exp(-T |x|^2 / 2) dx_1 ^ ... ^ dx_k`` around a critical site.

    ``x`` are Morse coordinates ``x_a = sqrt|f_aa| (y_a - p_a)`` built from the
    grid second differences ``f_aa``, and the k unstable axes carry the form.
    The cochain is sampled at each cell's base vertex, matching the
    convention used by the conjugation.
    """
    if 2 * eps > 0.5:
        raise BumpTooLarge(f"epsilon too large: bump diameter {2 * eps} exceeds half the torus")
    k = site.index
    nv = grid.n_vertices
    p = np.array(site.vertex) * grid.h
    delta = (grid.vertex_coords - p + 0.5) % 1.0 - 0.5
    r = np.linalg.norm(delta, axis=1)
    morse_sq = (delta**2 * np.abs(np.array(site.curvatures))[None, :]).sum(axis=1)
    profile = _bump(r, eps) * np.exp(-0.5 * T * morse_sq)
    vals = np.zeros(grid.n_cells(k))
    b = grid.directions(k).index(site.unstable_axes)
    vals[b * nv:(b + 1) * nv] = profile * grid.h**k
    c = Cochain(grid, k, vals)
    return Cochain(grid, k, vals / c.norm())


def block_vector(cone: ConeOperator, xi: Cochain, slot: str = "first") -> tuple[int, np.ndarray]:
    """Place a cochain in one summand of the cone; returns (cone degree, values)."""
    if slot == "first":
        k = xi.degree
        return k, np.concatenate([xi.values, np.zeros(cone.second_dim(k))])
    if slot == "second":
        k = xi.degree + cone.ell - 1
        return k, np.concatenate([np.zeros(cone.first_dim(k)), xi.values])
    raise ValueError("slot must be 'first' or 'second'")


def projection_defect(result: SpectralResult, x: np.ndarray) -> float:
    """``||P x - x||`` for the mass-orthogonal projector onto the low cluster."""
    y = result.sqrt_mass * x
    V = result.low_vectors
    return float(np.linalg.norm(y - V @ (V.T @ y)))


def a_omega(omega: Cochain) -> float:
    """``2^m * max`` pointwise norm of omega."""
    return float(2**omega.grid.m * pointwise_norm(omega).max())


# -- parameter scans ---------------------------------------------------------

@dataclass
class ScanPoint:
    params: DeformParams
    spectra: dict[int, SpectralResult]
    instanton: InstantonComplex | None
    defects: dict[tuple[str, str], float]
    gap_splits: dict[int, ClusterSplit]
    error: str | None = None

    @property
    def T(self) -> float:
        return self.params.T


def run_point(grid: PeriodicGrid, f: Cochain, omega: Cochain, params: DeformParams,
              threshold: float = 1.0, sites: Sequence[CriticalSite] = (), eps: float = 0.2,
              keep_vectors: bool = False) -> ScanPoint:
    cone = cone_operator(grid, f, omega, params)
    spectra = {k: spectrum(dirac_laplacian(cone, k), threshold=threshold) for k in cone.degrees if cone.dim(k)}
    gaps = {k: cluster_split(s.eigenvalues, mode="gap") for k, s in spectra.items()}
    error = None
    try:
        inst = instanton_complex(cone, spectra)
    except ClusterLeakage as exc:
        inst, error = None, str(exc)
    defects = {}
    for site in sites:
        xi = gaussian_model_cochain(grid, site, params.T, eps)
        for slot in ("first", "second"):
            k, x = block_vector(cone, xi, slot)
            if k in spectra:
                defects[(site.name, slot)] = projection_defect(spectra[k], x)
    if not keep_vectors:
        for s in spectra.values():
            s.vectors = s.vectors[:, : s.low_count]
    return ScanPoint(params, spectra, inst, defects, gaps, error)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("CONEMORSE_THREADS", "1")))
    except ValueError:
        return 1


def scan(grid: PeriodicGrid, f: Cochain, omega: Cochain, T_values: Sequence[float], c0: float | None = None,
         threshold: float = 1.0, eps: float = 0.2, threads: int | None = None) -> list[ScanPoint]:
    """Evaluate every T on the schedule ``S = exp(c0 T)``.

    Points are independent; with several threads they run concurrently and
    are returned in the order of ``T_values`` regardless of completion order.
    """
    if not len(T_values):
        raise ValueError("need at least one T")
    c0 = default_c0(f) if c0 is None else c0
    sites = find_critical_sites(grid, f)
    params = [DeformParams.scheduled(T, c0) for T in T_values]
    threads = thread_count() if threads is None else threads
    job = lambda p: run_point(grid, f, omega, p, threshold, sites, eps)  # noqa: E731
    if threads <= 1:
        return [job(p) for p in params]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = dict(zip(range(len(params)), pool.map(job, params)))
    return [results[i] for i in range(len(params))]
