"""
Tests for the collapse family, its smoothing sequence and punctures.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from errors import DomainError, ManifestError
from models.types import DeformationKind, DeformationParams
from services import deform, spectral
from services.complex import tag_domain
from services.meshes import icosphere
from services.witten_ops import build_bundle, geometry_from_complex, weight_from_vertices
from fixtures import flat_torus, run_all, smooth_phi


def sphere_band(subdivisions: int = 1):
    complex = icosphere(subdivisions)
    domain = tag_domain(complex, lambda c: np.abs(c[:, 2]) < 0.4)
    geometry = geometry_from_complex(complex)
    weight = weight_from_vertices(complex, smooth_phi(complex, 0.3))
    return complex, domain, geometry, weight


def test_complement_masses_scale_with_eps():
    complex, domain, geometry, weight = sphere_band()
    eps, alpha = 0.1, 1.5
    before = build_bundle(complex, geometry, weight)
    g, w = deform.collapse_family(geometry, weight, domain, eps, alpha)
    after = build_bundle(complex, g, w)
    for p in range(3):
        outside = domain.outside[p]
        ratio = after.masses[p].diagonal()[outside] / before.masses[p].diagonal()[outside]
        assert np.allclose(ratio, eps ** deform.complement_mass_exponent(2, p, alpha), rtol=1e-10)
        inside = domain.inside[p] & ~domain.interface[p]
        assert np.allclose(after.masses[p].diagonal()[inside], before.masses[p].diagonal()[inside])


def test_collapse_drives_the_vanishing_class_down():
    complex, domain, geometry, weight = sphere_band()
    values = []
    for eps in (0.1, 0.03, 0.01):
        g, w = deform.collapse_family(geometry, weight, domain, eps, alpha=2.0)
        values.append(spectral.coexact_spectrum(build_bundle(complex, g, w), 1, 2, tol=1e-6).coexact)
    first = [v[0] for v in values]
    assert first[0] / first[1] > 5 and first[1] / first[2] > 5
    # the second eigenvalue stays away from zero
    assert values[-1][1] > 100 * first[-1]


def test_epsilon_range():
    complex, domain, geometry, weight = sphere_band()
    with pytest.raises(ManifestError):
        deform.collapse_family(geometry, weight, domain, 0.0)
    with pytest.raises(ManifestError):
        deform.collapse_family(geometry, weight, domain, 1.5)


def test_domain_distance_vanishes_on_u():
    complex, domain, _, _ = sphere_band()
    d = deform.domain_distance(complex, domain)
    assert np.all(d[domain.inside[0]] == 0.0)
    assert d.max() == pytest.approx(1.0)


def test_smoothing_factor_decreases_in_j():
    complex, domain, _, _ = sphere_band()
    eps = 0.05
    f1 = deform.smoothing_factor(complex, domain, eps, 1)
    f4 = deform.smoothing_factor(complex, domain, eps, 4)
    for p in range(3):
        assert np.all(f4[p] <= f1[p] + 1e-15)
        assert np.all((f1[p] >= eps) & (f1[p] <= 1.0))
        interior = domain.inside[p]
        assert np.allclose(f4[p][interior], 1.0)


def test_smoothing_reaches_the_collapse_family():
    complex, domain, geometry, weight = sphere_band()
    eps = 0.05
    collapse = deform.collapse_family(geometry, weight, domain, eps, 1.0)
    smooth = deform.smoothing_sequence(complex, geometry, weight, domain, eps, 10 ** 6, 1.0)
    for p in range(3):
        assert np.allclose(smooth[0].u[p], collapse[0].u[p])


def test_decreases_toward():
    assert deform.decreases_toward([3.0, 2.5, 2.5, 2.1], 2.0)
    assert deform.decreases_toward([2.0 + 1e-12, 2.0], 2.0)
    assert not deform.decreases_toward([2.5, 2.6, 2.2], 2.0)
    assert not deform.decreases_toward([2.5, 2.2, 1.9], 2.0)


def test_torus_band_smoothing_is_monotone_in_j():
    complex = flat_torus(12)
    domain = tag_domain(complex, lambda c: np.abs(c[:, 1] - np.pi) < 1.0)
    factors = [deform.smoothing_factor(complex, domain, 0.01, j) for j in range(1, 7)]
    for p in range(3):
        stacked = np.array([f[p] for f in factors])
        assert np.all(np.diff(stacked, axis=0) <= 1e-15)
        assert np.all(stacked >= 0.01)


def test_apply_deformation_dispatch():
    complex, domain, geometry, weight = sphere_band()
    params = DeformationParams(kind=DeformationKind.COLLAPSE, epsilon=0.2, alpha=1.0)
    g, _ = deform.apply_deformation(complex, geometry, weight, domain, params)
    assert np.allclose(g.u[2][domain.outside[2]], np.log(0.2))
    with pytest.raises(ManifestError):
        deform.apply_deformation(complex, geometry, weight, domain,
                                 DeformationParams(kind=DeformationKind.SMOOTH_COLLAPSE, epsilon=0.2))


def test_puncture_flattens_phi_near_the_center():
    complex = flat_torus(12)
    weight = weight_from_vertices(complex, smooth_phi(complex))
    eps = 0.6
    domain, flattened = deform.puncture_family(complex, weight, 0, eps)
    dist = complex.vertex_distances(0)
    phi, new = weight.vertex_values, flattened.vertex_values
    assert np.allclose(new[dist <= eps], phi[0])
    assert np.allclose(new[dist >= 2 * eps], phi[dist >= 2 * eps])
    assert not domain.inside[0][0]


def test_puncture_cannot_swallow_the_complex():
    complex = flat_torus(4)
    weight = weight_from_vertices(complex)
    with pytest.raises(DomainError):
        deform.puncture_family(complex, weight, 0, 100.0)


if __name__ == "__main__":
    sys.exit(run_all(dict(globals())))
