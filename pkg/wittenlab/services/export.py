"""
Export Service - results CSV, summary JSON, plot data, meshes and matrices.

CSV layout is versioned in its first line; numbers are written with a fixed
format so reruns with the same seed are byte-identical.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.io
from pydantic import ValidationError

from errors import ManifestError
from models.schemas import ExperimentManifest, ExperimentSummary, MeshFile
from models.types import SimplicialComplex, SpectrumKind, SpectrumResult
from services.complex import build_simplicial

logger = logging.getLogger(__name__)

RESULTS_HEADER = "# wittenlab-results v1"
RESULTS_COLUMNS = ["degree", "kind", "index", "eigenvalue", "residual"]
NUMBER_FORMAT = "%.12e"

ResultRow = Tuple[int, str, int, float, float]
PathLike = Union[str, Path]


def spectrum_rows(result: SpectrumResult) -> List[ResultRow]:
    """Rows for one degree: harmonic zeros, exact part, coexact part"""
    rows: List[ResultRow] = [
        (result.degree, SpectrumKind.HARMONIC.value, i + 1, 0.0, 0.0)
        for i in range(result.harmonic_dimension)
    ]
    for kind, values, residuals in (
        (SpectrumKind.EXACT, result.exact, result.exact_residuals),
        (SpectrumKind.COEXACT, result.coexact, result.coexact_residuals),
    ):
        padded = list(residuals) + [float("nan")] * (len(values) - len(residuals))
        rows.extend((result.degree, kind.value, i + 1, v, r) for i, (v, r) in enumerate(zip(values, padded)))
    return rows


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return NUMBER_FORMAT % value
    return str(value)


def write_results_csv(path: PathLike, rows: Iterable[ResultRow]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        f.write(RESULTS_HEADER + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RESULTS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def read_results_csv(path: PathLike) -> List[dict]:
    with open(path) as f:
        header = f.readline().strip()
        if header != RESULTS_HEADER:
            raise ManifestError(f"{path} is not a results file (header {header!r})")
        return list(csv.DictReader(f))


def write_plotdata(directory: PathLike, name: str, columns: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(directory) / "plotdata" / f"{name}.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def write_summary(path: PathLike, summary: ExperimentSummary) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(summary.model_dump(mode="json"), f, indent=2, sort_keys=True, allow_nan=True)
        f.write("\n")
    return path


def write_eigencochains(path: PathLike, result: SpectrumResult) -> Path:
    """Optional binary sidecar with the eigencochains of one degree"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {k: v for k, v in (("coexact", result.coexact_vectors), ("exact", result.exact_vectors)) if v is not None}
    np.savez(path, **arrays)
    return path


# ============ Manifests & Meshes ============

def load_manifest(path: PathLike) -> ExperimentManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"Manifest not found: {path}")
    try:
        data = json.loads(path.read_text())
        return ExperimentManifest(**data, base_dir=path.parent)
    except (json.JSONDecodeError, ValidationError, TypeError) as e:
        raise ManifestError(f"Invalid manifest {path}: {e}")


def read_mesh_file(path: PathLike) -> MeshFile:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"Mesh file not found: {path}")
    try:
        mesh = MeshFile(**json.loads(path.read_text()))
    except (json.JSONDecodeError, ValidationError, TypeError) as e:
        raise ManifestError(f"Invalid mesh file {path}: {e}")
    logger.info(f"[MESH] loaded {path.name}: {len(mesh.vertices)} vertices, {len(mesh.cells)} top cells")
    return mesh


def load_mesh(path: PathLike) -> SimplicialComplex:
    mesh = read_mesh_file(path)
    return build_simplicial(mesh.vertices, mesh.cells)


def mesh_domain(complex: SimplicialComplex, mesh: MeshFile) -> Optional[np.ndarray]:
    """Top-cell indices of the complex for the cells a mesh file lists as its domain"""
    if mesh.domain is None:
        return None
    lookup = {tuple(s): i for i, s in enumerate(complex.simplices[complex.dimension].tolist())}
    return np.array([lookup[tuple(sorted(mesh.cells[c]))] for c in mesh.domain], dtype=np.int64)


def save_mesh(complex: SimplicialComplex, path: PathLike, phi: Optional[np.ndarray] = None,
              domain: Optional[Sequence[int]] = None) -> Path:
    """Write vertices and top cells; domain indexes the written cells"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mesh = MeshFile(
        dimension=complex.dimension,
        vertices=complex.vertices.tolist(),
        cells=complex.simplices[complex.dimension].tolist(),
        phi=None if phi is None else np.asarray(phi, dtype=float).tolist(),
        domain=None if domain is None else [int(c) for c in domain],
    )
    path.write_text(json.dumps(mesh.model_dump(exclude_none=True), separators=(",", ":")) + "\n")
    return path


def export_matrix(path: PathLike, matrix, comment: str = "") -> Path:
    """MatrixMarket coordinate text for external inspection"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), matrix, comment=comment)
    return path
