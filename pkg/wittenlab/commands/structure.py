"""
Utility subcommands: mesh generation and cohomology of a complex/domain pair.
"""
import argparse
import json
import logging
from pathlib import Path

from errors import ManifestError
from services import cohomology, export
from services.experiment_runner import GENERATORS, build_complex, build_domain, mesh_file
from services.witten_ops import coboundary

logger = logging.getLogger(__name__)


def mesh(args: argparse.Namespace) -> int:
    generator = GENERATORS.get(args.generator)
    if generator is None:
        raise ManifestError(f"Unknown generator '{args.generator}'; choose from {sorted(GENERATORS)}")
    params = json.loads(args.params) if args.params else {}
    complex = generator(**params)
    path = export.save_mesh(complex, args.out)
    if args.coboundaries:
        for p in range(complex.dimension):
            export.export_matrix(path.with_name(f"{path.stem}_d{p}.mtx"), coboundary(complex, p),
                                 comment=f"coboundary D_{p}")
    logger.info(f"Wrote {path} with cell counts {complex.counts}")
    return 0


def cohomology_command(args: argparse.Namespace) -> int:
    manifest = export.load_manifest(args.manifest)
    if manifest.complex is None:
        raise ManifestError("Manifest has no complex")
    complex = build_complex(manifest.complex)
    report = {
        "counts": complex.counts,
        "betti": cohomology.betti_numbers(complex),
        "euler_characteristic": cohomology.euler_characteristic(complex),
    }
    mesh = mesh_file(manifest.complex)
    if manifest.domain is not None or (mesh is not None and mesh.domain is not None):
        domain = build_domain(manifest, complex)
        report.update(cohomology.summarize(complex, domain).to_json())
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("mesh", help="Write a generated simplicial mesh to JSON")
    parser.add_argument("generator", help=f"One of {sorted(GENERATORS)}")
    parser.add_argument("--params", default=None, help="Generator parameters as JSON")
    parser.add_argument("--out", required=True, type=Path, help="Mesh JSON path")
    parser.add_argument("--coboundaries", action="store_true", help="Also write D_p in MatrixMarket format")
    parser.set_defaults(handler=mesh)

    parser = subparsers.add_parser("cohomology", help="Betti numbers and d_p for a manifest's complex and domain")
    parser.add_argument("--manifest", required=True, type=Path)
    parser.add_argument("--out", type=Path, default=None, help="Optional JSON report path")
    parser.set_defaults(handler=cohomology_command)
