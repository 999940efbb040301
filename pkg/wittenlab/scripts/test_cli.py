"""
End-to-end tests: manifests through the experiment runner and the command line.
"""
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from main import main
from models.schemas import ExperimentManifest
from services import export
from services.experiment_runner import (
    ExperimentService,
    build_complex,
    build_domain,
    build_fields,
    experiment_service,
    mesh_file,
)
from services.meshes import icosphere
from fixtures import run_all


def write_manifest(directory: Path, data: dict) -> Path:
    path = directory / f"{data['experiment']}.json"
    path.write_text(json.dumps(data))
    return path


def assertion(summary, name):
    return next(a for a in summary.assertions if a.name == name)


SPECTRUM = {
    "experiment": "spectrum",
    "complex": {"generator": "icosphere", "params": {"subdivisions": 1}},
    "fields": {"phi": "0.3*z", "u": "0.1*x"},
    "solver": {"k": 4, "degrees": [0, 1, 2]},
    "options": {"expected_harmonic": [1, 0, 1], "random_fields": 2, "perturb": {"phi": 0.01, "u": 0.01}},
}


def test_service_is_a_singleton():
    assert ExperimentService() is ExperimentService()
    assert "collapse" in ExperimentService().experiments
    assert experiment_service is ExperimentService()


def test_spectrum_deviation_is_relative_below_one():
    assert ExperimentService._deviation(np.array([0.011]), np.array([0.01])) == pytest.approx(0.1)
    assert ExperimentService._deviation(np.array([1e-13, 2.0]), np.array([0.0, 2.0])) == pytest.approx(1e-13)


def test_spectrum_command(tmp_path):
    manifest = write_manifest(tmp_path, SPECTRUM)
    out = tmp_path / "run"
    assert main(["spectrum", "--manifest", str(manifest), "--out", str(out), "--seed", "7"]) == 0
    rows = export.read_results_csv(out / "results.csv")
    assert {r["kind"] for r in rows} == {"harmonic", "exact", "coexact"}
    summary = json.loads((out / "summary.json").read_text())
    assert summary["success"] and summary["seed"] == 7
    assert summary["metrics"]["betti"] == [1, 0, 1]


def test_rerun_is_byte_identical(tmp_path):
    manifest = write_manifest(tmp_path, SPECTRUM)
    for name in ("a", "b"):
        main(["spectrum", "--manifest", str(manifest), "--out", str(tmp_path / name)])
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_wrong_subcommand_fails(tmp_path):
    manifest = write_manifest(tmp_path, SPECTRUM)
    assert main(["collapse", "--manifest", str(manifest), "--out", str(tmp_path / "run")]) == 1


def test_failed_experiment_writes_error(tmp_path):
    data = dict(SPECTRUM, solver={"k": 4, "degrees": [5]})
    out = tmp_path / "run"
    assert main(["spectrum", "--manifest", str(write_manifest(tmp_path, data)), "--out", str(out)]) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert not summary["success"] and "outside 0..2" in summary["error"]


def test_kunneth_product(tmp_path):
    manifest = ExperimentManifest(
        experiment="kunneth",
        solver={"k": 6},
        options={"cells": 8, "phi1": "0.5*sin(x)", "phi2": "0.4*cos(x) + 0.1*exp(sin(x))"},
    )
    result = ExperimentService().run(manifest, out_dir=tmp_path)
    assert result["success"], result["summary"].assertions


def test_collapse_sphere_band(tmp_path):
    manifest = ExperimentManifest(
        experiment="collapse",
        complex={"generator": "icosphere", "params": {"subdivisions": 1}},
        fields={"phi": "0.2*x", "alpha": 2.0},
        domain={"predicate": "abs(z) < 0.4"},
        solver={"k": 2, "degrees": [1], "tol": 1e-6},
        sweep={"epsilons": [0.1, 0.03, 0.01]},
    )
    summary = ExperimentService().run(manifest, out_dir=tmp_path)["summary"]
    assert summary.metrics["d_1"] == 1
    assert assertion(summary, "vanishing_p1_i1").passed
    assert summary.metrics["dirichlet_reference"] > 0
    assert (tmp_path / "plotdata" / "collapse_p1.csv").exists()


def test_collapse_smoothing_on_torus_band(tmp_path):
    circle = {"kind": "circle", "cells": 8, "length": 2 * np.pi}
    manifest = ExperimentManifest(
        experiment="collapse",
        complex={"product": [circle, circle]},
        fields={"phi": "0", "alpha": 2.0},
        domain={"predicate": "abs(y - pi) < 1"},
        solver={"k": 2, "degrees": [0], "tol": 1e-6},
        sweep={"epsilons": [0.1, 0.01], "js": [1, 2, 3]},
    )
    result = ExperimentService().run(manifest, out_dir=tmp_path)
    assert result["error"] is None
    names = [a.name for a in result["summary"].assertions]
    assert "smoothing_decreases_p0_i1" in names
    rows = (tmp_path / "plotdata" / "smoothing_p0.csv").read_text().splitlines()
    assert rows[0] == "j,index,eigenvalue,collapse_value"
    assert len(rows) == 1 + 3 * (result["summary"].metrics["d_0"] + 2)


def test_puncture_error_falls_with_the_radius(tmp_path):
    circle = {"kind": "circle", "cells": 24, "length": 2 * np.pi}
    manifest = ExperimentManifest(
        experiment="puncture",
        complex={"product": [circle, circle]},
        fields={"phi": "0.5*cos(x)*cos(y)"},
        solver={"k": 3, "degrees": [0]},
        sweep={"radii": [4, 2, 1]},
        options={"center": 0, "radius_unit": 2 * np.pi / 24, "final_tol": 1.0, "gap_n": 2},
    )
    result = ExperimentService().run(manifest, out_dir=tmp_path)
    summary = result["summary"]
    assert result["error"] is None
    assert assertion(summary, "puncture_error_decreasing_p0").passed
    rows = (tmp_path / "plotdata" / "puncture_p0.csv").read_text().splitlines()
    assert rows[0] == "radius,relative_error" and len(rows) == 4
    assert len(summary.metrics["spectral_distance_p0"]) == 3


def test_three_forms(tmp_path):
    manifest = ExperimentManifest(
        experiment="three-forms",
        fields={"phi": "cos(x)"},
        solver={"degrees": [0, 1]},
        sweep={"refinements": [32, 64]},
    )
    result = ExperimentService().run(manifest, out_dir=tmp_path)
    assert result["success"], result["summary"].assertions
    assert assertion(result["summary"], "coefficient_one_stagnates_p1").passed


def test_conformal_sweep(tmp_path):
    manifest = ExperimentManifest(
        experiment="conformal-sweep",
        complex={"generator": "icosphere", "params": {"subdivisions": 1}},
        fields={"phi": "0.2*z", "alpha": 0.0},
        solver={"degrees": [0, 1], "tol": 1e-6},
        sweep={"samples": 3},
    )
    summary = ExperimentService().run(manifest, out_dir=tmp_path)["summary"]
    assert summary.success
    assert summary.metrics["window_upper_alpha"] == [0.0, 1.0]
    assert len(summary.metrics["floors"]) == 2


def test_circle_duality(tmp_path):
    manifest = ExperimentManifest(
        experiment="duality",
        fields={"phi": "cos(x)"},
        options={"circle_grids": [64, 128]},
    )
    assert ExperimentService().run(manifest, out_dir=tmp_path)["success"]


def test_oracle(tmp_path):
    manifest = ExperimentManifest(
        experiment="oracle",
        solver={"k": 3},
        options={"random_complexes": 3, "continuum": False, "rtol": 1e-8},
    )
    assert ExperimentService().run(manifest, out_dir=tmp_path)["success"]


def test_duality_with_unknown_coordinate_reports_failure(tmp_path):
    manifest = ExperimentManifest(
        experiment="duality",
        fields={"phi": "cos(x) + 0.3*sin(y)"},
        options={"circle_grids": [64]},
    )
    result = ExperimentService().run(manifest, out_dir=tmp_path)
    assert not result["success"] and "y" in result["error"]
    assert json.loads((tmp_path / "summary.json").read_text())["error"]


def test_out_of_range_epsilon_reports_failure(tmp_path):
    manifest = ExperimentManifest(
        experiment="collapse",
        complex={"generator": "icosphere", "params": {"subdivisions": 1}},
        domain={"predicate": "abs(z) < 0.4"},
        solver={"k": 2, "degrees": [1]},
        sweep={"epsilons": [1.5]},
    )
    result = ExperimentService().run(manifest, out_dir=tmp_path)
    assert not result["success"] and "epsilon" in result["error"]
    assert json.loads((tmp_path / "summary.json").read_text())["error"]


def test_mesh_file_supplies_phi_and_domain(tmp_path, capsys):
    complex = icosphere(1)
    phi = 0.3 * complex.vertices[:, 2]
    band = np.flatnonzero(np.abs(complex.top_barycenters()[:, 2]) < 0.4)
    export.save_mesh(complex, tmp_path / "sphere.json", phi=phi, domain=band)
    manifest = export.load_manifest(write_manifest(tmp_path, {
        "experiment": "collapse",
        "complex": {"mesh": "sphere.json"},
        "fields": {"alpha": 2.0},
    }))

    loaded = build_complex(manifest.complex)
    _, weight = build_fields(loaded, manifest.fields, mesh_file(manifest.complex).phi)
    assert np.allclose(weight.vertex_values, phi)
    assert np.array_equal(np.flatnonzero(build_domain(manifest, loaded).top_mask), band)

    assert main(["cohomology", "--manifest", str(tmp_path / "collapse.json")]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["1"][3] == 1


def test_mesh_and_cohomology_commands(tmp_path, capsys):
    mesh = tmp_path / "torus.json"
    assert main(["mesh", "torus", "--params", '{"nu": 6, "nv": 4}', "--out", str(mesh), "--coboundaries"]) == 0
    assert (tmp_path / "torus_d0.mtx").exists()
    manifest = write_manifest(tmp_path, {
        "experiment": "spectrum",
        "complex": {"mesh": "torus.json"},
        "domain": {"predicate": "x > 0"},
    })
    assert main(["cohomology", "--manifest", str(manifest)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["betti"] == [1, 2, 1]


if __name__ == "__main__":
    sys.exit(run_all(dict(globals())))
