import math
from dataclasses import replace

import numpy as np
import pytest

from conemorse.complex_core import cohomology_dims, mapping_cone
from conemorse.dec_grid import Cochain, PeriodicGrid, cup_with, d_op, sample_form, sample_zero_form
from conemorse.morse_model import builtin, validate
from conemorse.witten_spectral import (
    BumpTooLarge,
    ClusterLeakage,
    DeformParams,
    DiracLaplacian,
    OverflowRisk,
    SpectralError,
    a_omega,
    block_vector,
    cluster_split,
    cone_operator,
    default_c0,
    dirac_laplacian,
    find_critical_sites,
    gaussian_model_cochain,
    instanton_complex,
    projection_defect,
    run_point,
    scaling_map,
    scan,
    spectral_morse_equalities,
    spectrum,
    torus_cos,
    undeformed_blocks,
)


def jacobi_eigenvalues(A: np.ndarray, sweeps: int = 30) -> np.ndarray:
    """Cyclic Jacobi rotations; an oracle that shares no code with LAPACK."""
    A = A.astype(float).copy()
    n = len(A)
    for _ in range(sweeps):
        off = np.sqrt(np.sum(A**2) - np.sum(np.diag(A) ** 2))
        if off < 1e-14 * np.linalg.norm(A):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(A[p, q]) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                Ap, Aq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * Ap - s * Aq, s * Ap + c * Aq
                Ap, Aq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * Ap - s * Aq, s * Ap + c * Aq
    return np.sort(np.diag(A))


@pytest.fixture(scope="module")
def t2():
    g = PeriodicGrid(2, 16)
    return g, torus_cos(g), sample_form(g, 1, {(0,): 1.0})


@pytest.fixture(scope="module")
def t2_scan(t2):
    g, f, dx = t2
    return scan(g, f, dx, [4.0, 6.0, 8.0, 10.0], c0=5.0)


# -- parameters and conjugation ---------------------------------------------

def test_schedule():
    p = DeformParams.scheduled(3.0, 5.0)
    assert p.S == pytest.approx(math.exp(15.0)) and p.on_schedule
    assert not DeformParams.fixed(3.0, 2.0).on_schedule
    with pytest.raises(ValueError):
        DeformParams.fixed(1.0, 0.0)
    with pytest.raises(ValueError):
        DeformParams(-1.0)


def test_default_c0(t2):
    assert default_c0(t2[1]) == 5.0


def test_scaling_identity_and_constant():
    g = PeriodicGrid(2, 4)
    f = sample_zero_form(g, lambda x, y: 0 * x + 1.0)
    rho = scaling_map(g, f, DeformParams.fixed(0.0, 1.0), 1, 1)
    assert np.array_equal(rho.diagonal(), np.ones(g.n_cells(1) + g.n_cells(1)))
    rho = scaling_map(g, f, DeformParams.fixed(2.0, 1.0), 1, 1)
    assert np.allclose(rho.diagonal(), math.exp(2.0), rtol=1e-15)


def test_scaling_inverse():
    rng = np.random.default_rng(0)
    g = PeriodicGrid(2, 6)
    f = Cochain(g, 0, rng.standard_normal(g.n_cells(0)))
    for _ in range(5):
        p = DeformParams.fixed(rng.uniform(0, 5), rng.uniform(0.1, 10))
        rho = scaling_map(g, f, p, 1, 1)
        assert np.abs((rho.matrix() @ rho.inverse()).diagonal() - 1).max() < 1e-13


def test_scaling_overflow_guard(t2):
    g, f, _ = t2
    with pytest.raises(OverflowRisk):
        scaling_map(g, f, DeformParams(200.0), 0, 1, mode="linear")
    scaling_map(g, f, DeformParams(200.0), 0, 1, mode="log")


def test_undeformed_cone_operator(t2):
    g, f, dx = t2
    cone = cone_operator(g, f, dx, DeformParams.fixed(0.0, 1.0))
    base = undeformed_blocks(g, dx)
    for k in cone.degrees:
        assert np.array_equal(cone.matrix(k).toarray(), base[k].toarray())


def test_zero_omega_is_conjugated_witten_pair():
    g = PeriodicGrid(2, 8)
    f = torus_cos(g)
    zero = sample_form(g, 1, {(0,): 0.0})
    T = 1.5
    cone = cone_operator(g, f, zero, DeformParams.scheduled(T, 5.0))
    d0 = d_op(g, 0).toarray()
    witten = np.diag(np.exp(-T * f.values[g.base_vertex_indices(1)])) @ d0 @ np.diag(np.exp(T * f.values))
    M = cone.matrix(0).toarray()
    n0, n1 = g.n_cells(0), g.n_cells(1)
    assert np.allclose(M[:n1, :n0], witten, rtol=1e-13)
    assert not M[:n1, n0:].any() and not M[n1:, :n0].any()
    # with ell = 1 the second summand carries the same conjugated d
    M1 = cone.matrix(1).toarray()
    n2 = g.n_cells(2)
    assert np.allclose(M1[n2:, n1:], M1[:n2, :n1], rtol=1e-13)


def test_linear_and_log_assembly_agree():
    g = PeriodicGrid(2, 8)
    f, dx = torus_cos(g), sample_form(g, 1, {(0,): 1.0})
    p = DeformParams.scheduled(3.0, 5.0)
    a = cone_operator(g, f, dx, p, mode="linear")
    b = cone_operator(g, f, dx, p, mode="log")
    for k in a.degrees:
        A, B = a.matrix(k).toarray(), b.matrix(k).toarray()
        if A.size:
            assert np.abs(A - B).max() <= 1e-13 * np.abs(A).max()


def test_nilpotency_on_random_cochains(t2):
    g, f, dx = t2
    rng = np.random.default_rng(5)
    for T in (0.0, 4.0, 8.0, 12.0):
        cone = cone_operator(g, f, dx, DeformParams.scheduled(T, 5.0))
        for k in (-1, 0):
            X = rng.standard_normal((cone.dim(k), 100))
            if not X.size:
                continue
            a, b = cone.orthonormal(k), cone.orthonormal(k + 1)
            ratio = (np.linalg.norm(b @ (a @ X), axis=0) / np.linalg.norm(X, axis=0)).max()
            if T <= 8.0:
                assert ratio <= 1e-10
            # round-off grows like ||d||^2 * eps; at T = 12 compare with that scale
            assert ratio <= 1e-10 * np.linalg.norm(a, 2) * np.linalg.norm(b, 2)
        assert cone.nilpotency_defect() <= 1e-10


def test_decoupled_limit_block_diagonal():
    g = PeriodicGrid(2, 8)
    f, dx = torus_cos(g), sample_form(g, 1, {(0,): 1.0})
    cone = cone_operator(g, f, dx, DeformParams.decoupled(2.0))
    n0, n1 = g.n_cells(0), g.n_cells(1)
    assert not cone.matrix(0).toarray()[:n1, n0:].any()


def test_not_closed_propagates():
    g = PeriodicGrid(2, 6)
    bad = Cochain(g, 1, np.random.default_rng(0).standard_normal(g.n_cells(1)))
    with pytest.raises(ValueError, match="not closed"):
        cone_operator(g, torus_cos(g), bad, DeformParams(1.0))


def test_cohomology_invariance_by_conjugation(t2):
    """Exact kernel dimensions come from the undeformed complex: rho is invertible
    and diagonal, so ranks of d_ST equal those of d^omega for every (S, T)."""
    g, f, dx = t2
    base = undeformed_blocks(g, dx)
    ranks = {k: np.linalg.matrix_rank(base[k].toarray()) if base[k].shape[0] * base[k].shape[1] else 0 for k in base}
    dims = {k: base[k].shape[1] for k in base}
    kernel = {k: dims[k] - ranks[k] - ranks.get(k - 1, 0) for k in base}
    combinatorial = cohomology_dims(mapping_cone(validate(builtin("t2_cos_dx"))))
    assert {k: kernel[k] for k in range(3)} == {k: combinatorial[k] for k in range(3)}


def test_tiny_coupling_counts_as_zero_below_cutoff(t2):
    """With S = e^18 the coupling block is ~e^-18 in size, so the cone's low
    eigenvalues fall below the 1e-8 zero cutoff and the count doubles."""
    g, f, dx = t2
    cone = cone_operator(g, f, dx, DeformParams.fixed(6.0, math.exp(18.0)))
    counts = [spectrum(dirac_laplacian(cone, k)).zero_count() for k in range(3)]
    assert counts == [2, 4, 2]
    undeformed = cone_operator(g, f, dx, DeformParams.fixed(0.0, 1.0))
    assert [spectrum(dirac_laplacian(undeformed, k)).zero_count() for k in range(3)] == [1, 2, 1]


# -- Laplacian and eigensolver ----------------------------------------------

def test_undeformed_laplacian_kernels():
    g = PeriodicGrid(2, 6)
    cone = cone_operator(g, torus_cos(g), sample_form(g, 1, {(0,): 0.0}), DeformParams.fixed(0.0, 1.0))
    assert [spectrum(dirac_laplacian(cone, k)).zero_count() for k in range(3)] == [2, 4, 2]


def test_symmetry_and_psd():
    g = PeriodicGrid(2, 8)
    rng = np.random.default_rng(8)
    f, dx = torus_cos(g), sample_form(g, 1, {(0,): 1.0, (1,): 0.5})
    for _ in range(3):
        cone = cone_operator(g, f, dx, DeformParams.fixed(rng.uniform(0, 4), rng.uniform(0.5, 50)))
        for k in range(3):
            lap = dirac_laplacian(cone, k)
            assert lap.symmetry_defect() <= 1e-10
            assert spectrum(lap).eigenvalues.min() >= -1e-10


def test_circle_witten_laplacian():
    g = PeriodicGrid(1, 64)
    f = sample_zero_form(g, lambda x: np.cos(2 * np.pi * x))
    zero = sample_form(g, 0, 0.0)  # ell = 0: cone degree -1 is the scalar 0-forms alone
    seconds = []
    for T in (1.0, 2.0, 4.0, 8.0):
        cone = cone_operator(g, f, zero, DeformParams.fixed(T, 1.0))
        ev = spectrum(dirac_laplacian(cone, -1)).eigenvalues
        assert ev[0] <= 1e-8
        seconds.append(ev[1])
    assert all(b > a for a, b in zip(seconds, seconds[1:]))


def test_diagonal_spectrum():
    res = spectrum(np.diag([0.0, 5.0]))
    assert res.eigenvalues.tolist() == [0.0, 5.0]


def test_circulant_spectrum():
    g = PeriodicGrid(1, 4)
    cone = cone_operator(g, sample_zero_form(g, lambda x: 0 * x), sample_form(g, 0, 0.0), DeformParams(0.0))
    ev = spectrum(dirac_laplacian(cone, -1)).eigenvalues
    expect = np.sort([2 / g.h**2 * (1 - math.cos(2 * math.pi * j / 4)) for j in range(4)])
    assert np.allclose(ev, expect, atol=1e-10)


def test_random_psd_against_jacobi():
    rng = np.random.default_rng(9)
    B = rng.standard_normal((50, 50))
    A = B @ B.T
    assert np.allclose(spectrum(A).eigenvalues, jacobi_eigenvalues(A), rtol=0, atol=1e-8 * np.abs(A).max())


def test_spectrum_checks_residuals():
    Q = np.array([[1.0, 0.0], [0.0, 2.0]])
    lap = DiracLaplacian(0, Q, np.array([[1.0, 0.3], [0.3, 4.0]]), np.ones(2), 2)
    with pytest.raises(SpectralError):
        spectrum(lap)


def test_cluster_split_synthetic():
    split = cluster_split(np.array([1e-9, 1e-8, 4.0, 5.0]), threshold=1.0)
    assert split.low_count == 2 and split.gap_ratio == pytest.approx(4e8)
    assert cluster_split(np.array([2.0, 3.0])).gap_ratio == math.inf
    assert cluster_split(np.array([0.1, 0.2])).low_count == 2
    gap = cluster_split(np.array([1e-6, 1e-5, 2.0, 3.0]), mode="gap")
    assert gap.low_count == 2
    with pytest.raises(ValueError):
        cluster_split(np.array([3.0, 1.0]))


# -- instanton complex on the torus -----------------------------------------

def test_low_clusters_match_critical_points(t2_scan):
    mu = builtin("t2_cos_dx").mu
    for point in t2_scan:
        counts = [point.spectra[k].low_count for k in range(3)]
        assert counts == [mu.get(k, 0) + mu.get(k, 0) for k in range(3)]  # ell = 1
        assert min(point.spectra[k].gap_ratio for k in range(3)) >= 10


def test_gap_ratio_nondecreasing(t2_scan):
    for k in range(3):
        ratios = [p.spectra[k].gap_ratio for p in t2_scan]
        assert all(b >= a for a, b in zip(ratios, ratios[1:]))


def test_instanton_cohomology_matches_combinatorics(t2_scan):
    combinatorial = cohomology_dims(mapping_cone(validate(builtin("t2_cos_dx"))))
    for p in t2_scan:
        assert {k: p.instanton.cohomology[k] for k in range(3)} == {k: combinatorial[k] for k in range(3)}
        assert spectral_morse_equalities(p.instanton, builtin("t2_cos_dx").mu, 1).passed


def test_zero_omega_instanton_is_doubled():
    g = PeriodicGrid(2, 12)
    p = run_point(g, torus_cos(g), sample_form(g, 1, {(0,): 0.0}), DeformParams.scheduled(6.0, 5.0))
    assert [p.instanton.cohomology[k] for k in range(3)] == [2, 4, 2]


def test_cluster_leakage_detected():
    g = PeriodicGrid(2, 8)
    cone = cone_operator(g, torus_cos(g), sample_form(g, 1, {(0,): 1.0}), DeformParams.fixed(0.0, 1.0))
    spectra = {k: spectrum(dirac_laplacian(cone, k)) for k in range(3)}
    # keep a nonharmonic eigenvector in degree 0 while dropping its partner in degree 1
    first_high = spectra[0].low_count
    spectra[0] = replace(spectra[0], low_count=first_high + 1)
    with pytest.raises(ClusterLeakage, match="cluster leakage"):
        instanton_complex(cone, spectra)


# -- model cochains and defects ---------------------------------------------

def test_critical_sites(t2):
    g, f, _ = t2
    sites = find_critical_sites(g, f)
    assert [(s.vertex, s.index) for s in sites] == [((8, 8), 0), ((0, 8), 1), ((8, 0), 1), ((0, 0), 2)]


def test_index_zero_model_is_normalised(t2):
    g, f, _ = t2
    site = find_critical_sites(g, f)[0]
    for T in (1.0, 7.0):
        xi = gaussian_model_cochain(g, site, T)
        assert xi.degree == 0 and xi.norm() == pytest.approx(1.0, abs=1e-8)


def test_circle_maximum_model():
    g = PeriodicGrid(1, 32)
    f = sample_zero_form(g, lambda x: np.cos(2 * np.pi * x))
    top = [s for s in find_critical_sites(g, f) if s.index == 1][0]
    xi = gaussian_model_cochain(g, top, 6.0)
    assert xi.degree == 1 and top.vertex == (0,)
    assert int(np.argmax(xi.values)) == 0
    assert np.allclose(xi.values[1:], xi.values[1:][::-1])


def test_distinct_models_are_orthogonal(t2):
    g, f, _ = t2
    a, b = [s for s in find_critical_sites(g, f) if s.index == 1]
    xa, xb = gaussian_model_cochain(g, a, 5.0), gaussian_model_cochain(g, b, 5.0)
    assert float(xa.values @ xb.values) == 0.0


def test_bump_too_large(t2):
    g, f, _ = t2
    with pytest.raises(BumpTooLarge, match="too large"):
        gaussian_model_cochain(g, find_critical_sites(g, f)[0], 4.0, eps=0.3)


def test_projection_defect_extremes():
    g = PeriodicGrid(2, 8)
    cone = cone_operator(g, torus_cos(g), sample_form(g, 1, {(0,): 1.0}), DeformParams.scheduled(3.0, 5.0))
    res = spectrum(dirac_laplacian(cone, 1))
    low = res.eigenvectors[:, 0]
    high = res.eigenvectors[:, -7]
    assert projection_defect(res, low) <= 1e-8
    assert projection_defect(res, high) == pytest.approx(1.0, abs=1e-8)


def test_projection_defect_decreases(t2_scan):
    names = {name for p in t2_scan for name, _ in p.defects}
    assert len(names) == 4
    for key in t2_scan[0].defects:
        values = [p.defects[key] for p in t2_scan]
        assert all(b < a for a, b in zip(values, values[1:]))


def test_block_vector_slots(t2):
    g, f, dx = t2
    cone = cone_operator(g, f, dx, DeformParams(1.0))
    xi = gaussian_model_cochain(g, find_critical_sites(g, f)[1], 1.0)
    k, x = block_vector(cone, xi, "second")
    assert k == 1 and not x[: g.n_cells(1)].any()


# -- a(omega) -----------------------------------------------------------------

def test_a_omega_values():
    g = PeriodicGrid(2, 8)
    assert a_omega(sample_form(g, 1, {(0,): 1.0})) == pytest.approx(4.0)
    assert a_omega(sample_form(g, 2, {(0, 1): 3.0})) == pytest.approx(12.0)


@pytest.mark.parametrize("coeffs,deg", [({(0,): 1.0}, 1), ({(0,): 0.0}, 1), ({(0, 1): 1.0}, 2)])
def test_a_omega_bounds_cup(coeffs, deg):
    g = PeriodicGrid(2, 8)
    w = sample_form(g, deg, coeffs)
    rng = np.random.default_rng(10)
    bound = a_omega(w)
    for k in range(0, 3 - deg):
        C = cup_with(g, w, k)
        for _ in range(100):
            b = Cochain(g, k, rng.standard_normal(g.n_cells(k)))
            assert C(b).norm() <= bound * b.norm() + 1e-12


# -- scans ---------------------------------------------------------------------

def test_parallel_scan_matches_serial():
    g = PeriodicGrid(2, 8)
    f, dx = torus_cos(g), sample_form(g, 1, {(0,): 1.0})
    serial = scan(g, f, dx, [2.0, 3.0, 4.0], threads=1)
    parallel = scan(g, f, dx, [2.0, 3.0, 4.0], threads=3)
    for a, b in zip(serial, parallel):
        assert a.T == b.T
        for k in a.spectra:
            assert np.array_equal(a.spectra[k].eigenvalues, b.spectra[k].eigenvalues)
        assert a.defects == b.defects
