"""
Tests for simplicial meshes, tensor grids and domain tagging.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from errors import ComplexError, DomainError, ManifestError
from models.types import FactorKind, FactorSpec
from services.complex import boundary_matrix, build_simplicial, product_grid, subcomplex, tag_domain
from services.meshes import icosphere, random_planar_complex, torus_mesh
from fixtures import flat_torus, run_all, tetrahedron_surface


def test_tetrahedron_counts():
    complex = tetrahedron_surface()
    assert complex.dimension == 2
    assert complex.counts == [4, 6, 4]


def test_icosphere_counts():
    complex = icosphere(1)
    assert complex.counts == [42, 120, 80]


def test_boundary_of_boundary_vanishes():
    rng = np.random.default_rng(3)
    for complex in (icosphere(1), torus_mesh(5, 4), random_planar_complex(30, rng), flat_torus(5)):
        for p in range(1, complex.dimension):
            product = boundary_matrix(complex, p) @ boundary_matrix(complex, p + 1)
            assert abs(product).sum() == 0


def test_product_grid_counts():
    complex = product_grid([
        FactorSpec(kind=FactorKind.CIRCLE, cells=5, length=5.0),
        FactorSpec(kind=FactorKind.INTERVAL, cells=3, length=1.5),
    ])
    # vertices 5*4, edges 5*4 + 5*3, squares 5*3
    assert complex.counts == [20, 35, 15]
    assert np.allclose(complex.volumes[2], 0.5)


def test_three_factor_boundary_of_boundary():
    complex = product_grid([{"kind": "circle", "cells": 3, "length": 1.0}] * 2
                           + [{"kind": "interval", "cells": 2, "length": 1.0}])
    for p in range(1, 3):
        assert abs(complex.boundaries[p] @ complex.boundaries[p + 1]).sum() == 0


def test_degenerate_simplex_rejected():
    with pytest.raises(ComplexError):
        build_simplicial([[0, 0], [1, 0], [0, 1]], [[0, 0, 1]])


def test_mixed_simplex_sizes_rejected():
    with pytest.raises(ComplexError):
        build_simplicial([[0, 0], [1, 0], [0, 1]], [[0, 1, 2], [0, 1]])


def test_short_circle_factor_rejected():
    with pytest.raises(ComplexError):
        product_grid([FactorSpec(kind=FactorKind.CIRCLE, cells=2, length=1.0)])


def test_boundary_degree_out_of_range():
    complex = tetrahedron_surface()
    assert boundary_matrix(complex, 2).shape == (6, 4)
    with pytest.raises(ComplexError):
        boundary_matrix(complex, 0)
    with pytest.raises(ComplexError):
        boundary_matrix(complex, 3)


def test_periodic_barycenters_use_circular_mean():
    complex = product_grid([FactorSpec(kind=FactorKind.CIRCLE, cells=4, length=4.0)])
    centers = complex.top_barycenters()[:, 0]
    assert np.allclose(np.sort(centers), [0.5, 1.5, 2.5, 3.5])


def test_band_domain_on_sphere():
    complex = icosphere(1)
    domain = tag_domain(complex, lambda c: np.abs(c[:, 2]) < 0.4)
    n = complex.dimension
    for p in range(n + 1):
        assert not np.any(domain.inside[p] & domain.outside[p])
        assert np.all(domain.inside[p] | domain.outside[p])
        assert np.all(domain.interface[p] <= domain.inside[p])
    assert domain.interface[0].sum() > 0
    assert domain.components == 1


def test_domain_from_index_list():
    complex = tetrahedron_surface()
    domain = tag_domain(complex, [0, 1])
    assert domain.top_mask.tolist() == [True, True, False, False]


def test_empty_and_full_domains_rejected():
    complex = tetrahedron_surface()
    with pytest.raises(DomainError):
        tag_domain(complex, np.zeros(4, dtype=bool))
    with pytest.raises(DomainError):
        tag_domain(complex, np.ones(4, dtype=bool))


def test_subcomplex_maps_to_parent():
    complex = icosphere(1)
    domain = tag_domain(complex, lambda c: c[:, 2] > 0.2)
    sub = subcomplex(complex, domain)
    for p in range(3):
        assert np.array_equal(sub.parent_cells[p], np.flatnonzero(domain.inside[p]))
        assert sub.counts[p] == int(domain.inside[p].sum())
    assert abs(sub.boundaries[1] @ sub.boundaries[2]).sum() == 0


def test_generator_parameters_are_checked():
    with pytest.raises(ManifestError):
        torus_mesh(2, 4)


if __name__ == "__main__":
    sys.exit(run_all(dict(globals())))
