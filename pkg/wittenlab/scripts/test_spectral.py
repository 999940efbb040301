"""
Tests for the eigensolver backends, coexact and full Hodge spectra, primitives and comparisons.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from errors import DomainError, GapHypothesisError, NotExactError, SolverConvergenceError, SpectrumRequestError
from models.types import BoundaryCondition, FactorKind, FactorSpec, Gauge, GapConfig, MassScheme, SolverMethod
from services import spectral
from services.complex import product_grid, tag_domain
from services.eigensolvers import BlockLanczosSolver, DenseEighSolver, DenseSVDSolver, get_eigensolver
from services.meshes import icosphere, random_planar_complex
from services.witten_ops import geometry_from_complex, weight_from_vertices
from fixtures import bundle_for, flat_torus, run_all, smooth_phi, unit_cycle


def cycle_eigenvalues(n, k):
    theta = 2 * np.pi * np.arange(1, n) / n
    return np.sort(2 - 2 * np.cos(theta))[:k]


def test_cycle_graph_laplacian():
    result = spectral.coexact_spectrum(bundle_for(unit_cycle(12)), 0, 5)
    assert np.allclose(result.coexact, cycle_eigenvalues(12, 5), rtol=1e-12)
    assert max(result.coexact_residuals) < 1e-12
    assert result.metadata["kernel_dimension"] == 1


def test_consistent_mass_on_cycle():
    n = 12
    bundle = bundle_for(unit_cycle(n), scheme=MassScheme.CONSISTENT)
    result = spectral.coexact_spectrum(bundle, 0, 4)
    theta = 2 * np.pi * np.array([1, 1, 2, 2]) / n
    expected = 6 * (1 - np.cos(theta)) / (2 + np.cos(theta))
    assert np.allclose(result.coexact, expected, rtol=1e-10)
    assert result.method == SolverMethod.DENSE_EIGH


def test_lanczos_matches_dense():
    complex = flat_torus(12)
    bundle = bundle_for(complex, smooth_phi(complex))
    for p in range(2):
        dense = spectral.coexact_spectrum(bundle, p, 6)
        lanczos = spectral.coexact_spectrum(bundle, p, 6, method="block-lanczos")
        assert lanczos.method == SolverMethod.BLOCK_LANCZOS
        assert np.allclose(lanczos.coexact, dense.coexact, rtol=1e-8)


def test_lanczos_on_a_simplicial_mesh():
    complex = icosphere(2)
    bundle = bundle_for(complex, smooth_phi(complex))
    dense = spectral.coexact_spectrum(bundle, 1, 5)
    lanczos = spectral.coexact_spectrum(bundle, 1, 5, method="block-lanczos")
    assert np.allclose(lanczos.coexact, dense.coexact, rtol=1e-8)


def test_full_spectrum_pairs_exact_with_coexact():
    complex = icosphere(1)
    bundle = bundle_for(complex, smooth_phi(complex))
    result = spectral.full_hodge_spectrum(bundle, 1, 5)
    below = spectral.coexact_spectrum(bundle, 0, 5)
    assert result.harmonic_dimension == 0
    assert np.allclose(result.exact, below.coexact, rtol=1e-9)
    assert result.metadata["pairing_deviation"] < 1e-8
    assert len(result.all_eigenvalues()) == 10


def test_harmonic_dimension_on_torus():
    complex = flat_torus(6)
    bundle = bundle_for(complex, smooth_phi(complex))
    assert [spectral.harmonic_dimension(bundle, p) for p in range(3)] == [1, 2, 1]


def test_measured_harmonic_dimension_follows_the_gauge_coboundary():
    bundle = bundle_for(unit_cycle(8))
    assert spectral.measured_harmonic_dimension(bundle, 0) == 1
    cut = bundle.coboundaries[0].tolil()
    cut[[0, 3], :] = 0.0
    broken = bundle.model_copy(update={"coboundaries": [cut.tocsr()] + bundle.coboundaries[1:]})
    # two cut edges split the cycle into two arcs
    assert spectral.measured_harmonic_dimension(broken, 0) == 2
    assert spectral.harmonic_dimension(broken, 0) == 1


def test_measured_harmonic_dimension_on_random_fields():
    complex = flat_torus(6)
    rng = np.random.default_rng(3)
    for _ in range(3):
        bundle = bundle_for(complex, rng.normal(scale=0.5, size=complex.counts[0]))
        assert [spectral.measured_harmonic_dimension(bundle, p) for p in range(3)] == [1, 2, 1]


def test_residuals_respect_the_tolerance():
    complex = flat_torus(12)
    bundle = bundle_for(complex, smooth_phi(complex))
    for method in ("dense-svd", "block-lanczos"):
        result = spectral.coexact_spectrum(bundle, 1, 6, tol=1e-8, method=method)
        assert max(result.coexact_residuals) <= 1e-8
        A, M = spectral._pencil(bundle, 1).stiffness(), bundle.masses[1]
        x = result.coexact_vectors
        direct = np.linalg.norm(A @ x - (M @ x) * np.array(result.coexact), axis=0) / np.linalg.norm(M @ x, axis=0)
        assert np.allclose(direct, result.coexact_residuals, rtol=1e-6, atol=1e-15)


def test_unreachable_tolerance_raises():
    complex = flat_torus(8)
    bundle = bundle_for(complex, smooth_phi(complex))
    for method in ("dense-svd", "block-lanczos"):
        with pytest.raises(SolverConvergenceError) as info:
            spectral.coexact_spectrum(bundle, 0, 3, tol=1e-30, method=method)
        assert info.value.best_residual > 1e-30


def test_circle_matches_fourier_modes():
    complex = product_grid([FactorSpec(kind=FactorKind.CIRCLE, cells=512, length=2 * np.pi)])
    result = spectral.coexact_spectrum(bundle_for(complex), 0, 6)
    assert np.allclose(result.coexact, [1, 1, 4, 4, 9, 9], rtol=5e-3)


def test_interval_matches_hermite_levels():
    complex = product_grid([FactorSpec(kind=FactorKind.INTERVAL, cells=2000, length=10.0)])
    phi = 0.5 * (complex.vertices[:, 0] - 5.0) ** 2
    result = spectral.coexact_spectrum(bundle_for(complex, phi), 0, 3, tol=1e-8, dense_threshold=2100)
    assert np.allclose(result.coexact, [2.0, 4.0, 6.0], atol=1e-2)


def test_interval_domain_matches_neumann_and_dirichlet():
    complex = product_grid([FactorSpec(kind=FactorKind.CIRCLE, cells=400, length=2 * np.pi)])
    middle = tag_domain(complex, lambda c: np.abs(c[:, 0] - np.pi) < np.pi / 2)
    geometry, flat = geometry_from_complex(complex), weight_from_vertices(complex)
    # U is an arc of length pi: both conditions give i^2
    for bc in (BoundaryCondition.ABSOLUTE, BoundaryCondition.RELATIVE):
        result = spectral.domain_spectrum(complex, middle, bc, geometry, flat, 0, 3)
        assert np.allclose(result.coexact, [1.0, 4.0, 9.0], rtol=5e-3)


def test_minmax_oracle_matches_solver():
    rng = np.random.default_rng(11)
    complex = random_planar_complex(25, rng)
    bundle = bundle_for(complex, rng.normal(scale=0.5, size=complex.counts[0]))
    for p in range(2):
        result = spectral.coexact_spectrum(bundle, p, 4)
        brute = [spectral.minmax_bruteforce(bundle, p, i) for i in range(1, 5)]
        assert np.allclose(brute, result.coexact, rtol=1e-9)


def test_too_many_eigenvalues():
    bundle = bundle_for(unit_cycle(5))
    with pytest.raises(SpectrumRequestError):
        spectral.coexact_spectrum(bundle, 0, 5)
    with pytest.raises(SpectrumRequestError):
        spectral.minmax_bruteforce(bundle, 0, 5)


def test_min_norm_primitive():
    complex = flat_torus(6)
    bundle = bundle_for(complex, smooth_phi(complex))
    rng = np.random.default_rng(2)
    theta = rng.normal(size=complex.counts[0])
    omega = bundle.coboundaries[0] @ theta
    primitive = spectral.min_norm_primitive(bundle, 0, omega)
    assert np.allclose(bundle.coboundaries[0] @ primitive, omega, atol=1e-9)
    # least norm: M-orthogonal to the constants
    assert abs(np.ones(complex.counts[0]) @ (bundle.masses[0] @ primitive)) < 1e-8


def test_primitive_transports_between_gauges():
    complex = flat_torus(6)
    phi = smooth_phi(complex)
    weighted = bundle_for(complex, phi)
    twisted = bundle_for(complex, phi, gauge=Gauge.TWISTED)
    rng = np.random.default_rng(3)
    omega = weighted.coboundaries[0] @ rng.normal(size=complex.counts[0])
    theta = spectral.min_norm_primitive(weighted, 0, omega)
    theta_twisted = spectral.min_norm_primitive(twisted, 0, omega / twisted.conjugation[1])
    assert np.allclose(theta_twisted, theta / twisted.conjugation[0], atol=1e-8)


def test_primitive_of_a_non_exact_cochain():
    complex = flat_torus(6)
    bundle = bundle_for(complex)
    with pytest.raises(NotExactError):
        spectral.min_norm_primitive(bundle, 1, np.ones(complex.counts[2]))


def test_harmonic_representative():
    complex = flat_torus(6)
    bundle = bundle_for(complex, smooth_phi(complex))
    rng = np.random.default_rng(4)
    loop = np.zeros(complex.counts[1])
    loop[:complex.counts[0]] = 1.0  # every edge of the first direction
    z = loop + bundle.coboundaries[0] @ rng.normal(size=complex.counts[0])
    h = spectral.harmonic_representative(bundle, 1, z)
    assert np.abs(bundle.coboundaries[1] @ h).max() < 1e-9
    coclosed = bundle.coboundaries[0].T @ (bundle.masses[1] @ h)
    assert np.abs(coclosed).max() < 1e-8


def test_domain_spectrum_conditions():
    complex = icosphere(2)
    cap = tag_domain(complex, lambda c: c[:, 2] > 0.5)
    geometry, flat = geometry_from_complex(complex), weight_from_vertices(complex)
    absolute = spectral.domain_spectrum(complex, cap, BoundaryCondition.ABSOLUTE, geometry, flat, 0, 3)
    relative = spectral.domain_spectrum(complex, cap, BoundaryCondition.RELATIVE, geometry, flat, 0, 3)
    assert relative.coexact[0] > absolute.coexact[0]
    weight = weight_from_vertices(complex, smooth_phi(complex))
    with pytest.raises(DomainError):
        spectral.domain_spectrum(complex, cap, BoundaryCondition.DIRICHLET, geometry, weight, 0, 3)
    dirichlet = spectral.domain_spectrum(complex, cap, BoundaryCondition.DIRICHLET, geometry, flat, 0, 3)
    assert dirichlet.harmonic_dimension == 0


def test_compare_spectra_drops_cut_clusters():
    assert spectral.compare_spectra([1.0, 2.0, 2.0], [1.0, 2.0]) == 0.0
    assert spectral.compare_spectra([1.0, 2.0, 4.0], [1.0, 2.02, 4.0]) == pytest.approx(0.01)


def test_spectral_distance():
    complex = flat_torus(8)
    bundle = bundle_for(complex, smooth_phi(complex))
    result = spectral.coexact_spectrum(bundle, 0, 6)
    lam = result.coexact
    gaps = np.diff(lam)
    n = int(np.argmax(gaps > 1e-3 * lam[1:])) + 1
    cfg = GapConfig(n=n, eta=0.5 * gaps[n - 1], m_bound=2 * lam[n])
    assert spectral.spectral_distance(result, result, cfg) < 1e-7
    with pytest.raises(GapHypothesisError):
        spectral.spectral_distance(result, result, GapConfig(n=n, eta=10 * gaps[n - 1], m_bound=2 * lam[n]))


def test_eigensolver_factory():
    bundle = bundle_for(unit_cycle(8))
    pencil = spectral._pencil(bundle, 0)
    assert isinstance(get_eigensolver(pencil), DenseSVDSolver)
    assert isinstance(get_eigensolver(pencil, dense_threshold=0), BlockLanczosSolver)
    consistent = spectral._pencil(bundle_for(unit_cycle(8), scheme=MassScheme.CONSISTENT), 0)
    assert isinstance(get_eigensolver(consistent), DenseEighSolver)
    with pytest.raises(SpectrumRequestError):
        get_eigensolver(pencil, method="bogus")


if __name__ == "__main__":
    sys.exit(run_all(dict(globals())))
