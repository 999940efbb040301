"""
Tests for field expressions, manifests, meshes and result files.
"""
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from errors import ManifestError
from models.schemas import ExperimentSummary
from models.types import SpectrumResult
from services import export, fields
from services.meshes import icosphere
from fixtures import run_all


def test_parse_field_accepts_known_functions():
    expr = fields.parse_field("sin(x) + exp(-y**2) + abs(z)")
    coords = np.array([[0.0, 0.0, -1.0], [np.pi / 2, 1.0, 2.0]])
    assert np.allclose(fields.sample(expr, coords), [2.0, 1.0 + np.exp(-1.0) + 2.0])


def test_parse_field_rejects_unknown_names():
    with pytest.raises(ManifestError):
        fields.parse_field("t + 1")
    with pytest.raises(ManifestError):
        fields.parse_field("__import__('os').getcwd()")


def test_sample_field_defaults_to_zero():
    assert np.array_equal(fields.sample_field(None, np.zeros((4, 2))), np.zeros(4))


def test_constant_field_broadcasts():
    assert np.allclose(fields.sample_field("2", np.zeros((3, 1))), 2.0)


def test_missing_coordinate_is_reported():
    with pytest.raises(ManifestError):
        fields.sample_field("z", np.zeros((3, 2)))


def test_higher_coordinate_in_1d_field_is_a_manifest_error():
    coords = np.linspace(0.0, 2 * np.pi, 8)[:, None]
    with pytest.raises(ManifestError):
        fields.sample_field("cos(x) + 0.3*sin(y)", coords)
    assert fields.sample_field("cos(x) + 0.5*sin(2*x)", coords).shape == (8,)


def test_predicate():
    select = fields.predicate("abs(z) < 0.3")
    coords = np.array([[0, 0, 0.1], [0, 0, 0.5], [0, 0, -0.2]])
    assert select(coords).tolist() == [True, False, True]
    with pytest.raises(ManifestError):
        fields.predicate("x + 1")


def test_random_field_is_periodic_and_bounded():
    rng = np.random.default_rng(0)
    coords = np.array([[0.0], [1.0], [2 * np.pi]])
    values = fields.random_field(coords, rng, amplitude=0.5, periods=np.array([2 * np.pi]))
    assert np.abs(values).max() <= 0.5 + 1e-12
    assert values[0] == pytest.approx(values[2])


def test_results_csv(tmp_path):
    result = SpectrumResult(degree=1, harmonic_dimension=2, coexact=[0.5, 1.25], coexact_residuals=[1e-14, 2e-14],
                            exact=[0.75], exact_residuals=[3e-15])
    path = export.write_results_csv(tmp_path / "results.csv", export.spectrum_rows(result))
    lines = path.read_text().splitlines()
    assert lines[0] == export.RESULTS_HEADER
    assert lines[1] == ",".join(export.RESULTS_COLUMNS)
    rows = export.read_results_csv(path)
    assert [r["kind"] for r in rows] == ["harmonic", "harmonic", "exact", "coexact", "coexact"]
    assert rows[-1]["eigenvalue"] == "1.250000000000e+00"


def test_results_csv_rejects_foreign_files(tmp_path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ManifestError):
        export.read_results_csv(path)


def test_summary_and_plotdata(tmp_path):
    summary = ExperimentSummary(experiment="spectrum", statement="s", success=True, seed=1, metrics={"betti": [1, 0, 1]})
    export.write_summary(tmp_path / "summary.json", summary)
    assert json.loads((tmp_path / "summary.json").read_text())["metrics"]["betti"] == [1, 0, 1]
    path = export.write_plotdata(tmp_path, "trajectory", ["epsilon", "value"], [(0.1, 2.0)])
    assert path.read_text().splitlines() == ["epsilon,value", "1.000000000000e-01,2.000000000000e+00"]


def test_mesh_file(tmp_path):
    complex = icosphere(1)
    path = export.save_mesh(complex, tmp_path / "sphere.json")
    loaded = export.load_mesh(path)
    assert loaded.counts == complex.counts
    with pytest.raises(ManifestError):
        export.load_mesh(tmp_path / "missing.json")


STRIP = {
    "dimension": 2,
    "vertices": [[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1]],
    "cells": [[4, 1, 5], [0, 1, 2], [0, 2, 3], [1, 5, 2]],
    "phi": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
    "domain": [0],
}


def test_mesh_file_with_phi_and_domain(tmp_path):
    path = tmp_path / "strip.json"
    path.write_text(json.dumps(STRIP))
    mesh = export.read_mesh_file(path)
    complex = export.load_mesh(path)
    assert mesh.phi == STRIP["phi"]
    # file cell [4, 1, 5] is top cell (1, 4, 5), last in sorted order
    assert export.mesh_domain(complex, mesh).tolist() == [3]

    saved = export.save_mesh(complex, tmp_path / "copy.json", phi=mesh.phi, domain=[3])
    data = json.loads(saved.read_text())
    assert set(data) == {"dimension", "vertices", "cells", "phi", "domain"}
    assert data["cells"][3] == [1, 4, 5]


def test_mesh_file_accepts_simplices_key(tmp_path):
    path = tmp_path / "old.json"
    legacy = {k: v for k, v in STRIP.items() if k in ("dimension", "vertices")}
    legacy["simplices"] = STRIP["cells"]
    path.write_text(json.dumps(legacy))
    assert export.load_mesh(path).n_top == 4


def test_mesh_file_rejects_bad_phi_and_domain(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(dict(STRIP, phi=[0.0, 1.0])))
    with pytest.raises(ManifestError):
        export.read_mesh_file(path)
    path.write_text(json.dumps(dict(STRIP, domain=[9])))
    with pytest.raises(ManifestError):
        export.read_mesh_file(path)


def test_manifest_product_complex(tmp_path):
    factors = [{"kind": "circle", "cells": 8, "length": 6.283185307179586}] * 2
    path = tmp_path / "spectrum.json"
    path.write_text(json.dumps({"experiment": "spectrum", "complex": {"product": factors}}))
    assert len(export.load_manifest(path).complex.product) == 2
    path.write_text(json.dumps({"experiment": "spectrum", "complex": {"factors": factors}}))
    assert len(export.load_manifest(path).complex.product) == 2


def test_manifest_resolves_relative_mesh(tmp_path):
    export.save_mesh(icosphere(0), tmp_path / "meshes" / "ico.json")
    manifest_path = tmp_path / "spectrum.json"
    manifest_path.write_text(json.dumps({
        "experiment": "spectrum",
        "complex": {"mesh": "meshes/ico.json"},
        "fields": {"phi": "0.2*z"},
    }))
    manifest = export.load_manifest(manifest_path)
    assert Path(manifest.complex.mesh) == tmp_path / "meshes" / "ico.json"


def test_manifest_validation(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"experiment": "spectrum", "complex": {"generator": "cycle", "mesh": "x.json"}}))
    with pytest.raises(ManifestError):
        export.load_manifest(path)
    path.write_text(json.dumps({"experiment": "spectrum", "fields": {"phi": "q**2"}}))
    with pytest.raises(ManifestError):
        export.load_manifest(path)


def test_matrix_market_export(tmp_path):
    complex = icosphere(0)
    path = export.export_matrix(tmp_path / "d0.mtx", complex.boundaries[1].T.tocsr(), comment="D_0")
    assert path.read_text().startswith("%%MatrixMarket")


if __name__ == "__main__":
    sys.exit(run_all(dict(globals())))
