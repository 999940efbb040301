"""
Tests for the continuum circle/interval models and the three twisted-Laplacian assemblies.
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from errors import ManifestError, SpectrumRequestError
from models.types import BoundaryCondition
from services import model1d
from fixtures import run_all


def test_flat_circle_matches_fourier():
    spectrum = model1d.circle_witten_spectrum(model1d.circle_grid(128), 7)
    assert np.allclose(spectrum.functions, [0, 1, 1, 4, 4, 9, 9], atol=1e-6)
    assert np.allclose(spectrum.one_forms, [0, 1, 1, 4, 4, 9, 9], atol=1e-6)


def test_harmonic_oscillator_matches_hermite():
    grid = model1d.interval_grid(2000, -8.0, 8.0, "x**2/2")
    values = model1d.interval_witten_spectrum(grid, BoundaryCondition.ABSOLUTE, 4)
    assert np.allclose(values, [0.0, 2.0, 4.0, 6.0], atol=1e-2)


def test_flat_interval_conditions():
    grid = model1d.interval_grid(200, 0.0, np.pi)
    relative = model1d.interval_witten_spectrum(grid, BoundaryCondition.RELATIVE, 3)
    absolute = model1d.interval_witten_spectrum(grid, BoundaryCondition.ABSOLUTE, 4)
    assert np.allclose(relative, [1.0, 4.0, 9.0], rtol=1e-4)
    assert np.allclose(absolute, [0.0, 1.0, 4.0, 9.0], rtol=1e-4, atol=1e-8)


def test_ground_state_is_e_minus_phi():
    spectrum = model1d.circle_witten_spectrum(model1d.circle_grid(128, expression="cos(x)"), 4)
    assert abs(spectrum.functions[0]) < 1e-5
    assert spectrum.ground_state_angle < 1e-4


def test_circle_duality():
    plus = model1d.circle_witten_spectrum(model1d.circle_grid(256, expression="cos(x) + 0.3*sin(2*x)"), 6)
    minus = model1d.circle_witten_spectrum(model1d.circle_grid(256, expression="-(cos(x) + 0.3*sin(2*x))"), 6)
    assert np.allclose(plus.functions, minus.functions, atol=1e-6)
    # functions for phi carry the same spectrum as 1-forms for -phi
    assert np.allclose(plus.functions, minus.one_forms, atol=1e-6)


def test_three_forms_agree_for_gradient_twist():
    for p in (0, 1):
        diffs = []
        for nodes in (64, 128):
            grid = model1d.circle_grid(nodes)
            twist = model1d.twist_from_potential(grid, "cos(x) + 0.2*sin(3*x)")
            report = model1d.assemble_three_forms(grid, twist, p)
            diffs.append(max(report.diff_direct_lie, report.diff_direct_curvature))
        assert diffs[1] < diffs[0] / 4


def test_coefficient_one_misses_phi_second_derivative():
    grid = model1d.circle_grid(128)
    twist = model1d.twist_from_potential(grid, "cos(x)")
    report = model1d.assemble_three_forms(grid, twist, 1, hess_coefficient=1.0)
    mismatch = (report.direct - report.curvature) @ np.ones(grid.nodes)
    assert np.allclose(mismatch, -np.cos(grid.x), atol=1e-4)


def test_two_dimensional_gradient_twist():
    diffs = []
    for nodes in (16, 32):
        grid = model1d.product_grid_2d(nodes, nodes)
        twist = model1d.twist_from_potential(grid, "sin(x)*cos(y)")
        report = model1d.assemble_three_forms(grid, twist, 1)
        diffs.append(report.diff_direct_curvature)
        assert np.abs(model1d.twisted_square_on_constant(grid, twist)).max() < 1e-9
    assert diffs[1] < diffs[0] / 4


def test_twisted_square_is_the_curl():
    errors = []
    for nodes in (16, 32):
        grid = model1d.product_grid_2d(nodes, nodes)
        twist = model1d.twist_from_components(grid, ["sin(y)", "0"])
        square = model1d.twisted_square_on_constant(grid, twist)
        assert np.allclose(twist.exact_curl, -np.cos(np.meshgrid(grid.x.x, grid.y.x, indexing="ij")[1]).ravel())
        errors.append(np.abs(square - twist.exact_curl).max())
    assert errors[1] < errors[0] / 4


def test_invalid_requests():
    interval = model1d.interval_grid(40, 0.0, 1.0)
    with pytest.raises(SpectrumRequestError):
        model1d.interval_witten_spectrum(interval, BoundaryCondition.DIRICHLET, 2)
    with pytest.raises(SpectrumRequestError):
        model1d.circle_witten_spectrum(interval, 2)
    with pytest.raises(ManifestError):
        model1d.assemble_three_forms(interval, model1d.twist_from_potential(model1d.circle_grid(8), "x"), 0)


if __name__ == "__main__":
    sys.exit(run_all(dict(globals())))
