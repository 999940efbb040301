"""
Shared arguments and the manifest-driven handler used by every experiment subcommand.
"""
import argparse
import logging
from pathlib import Path

from errors import ManifestError
from services import export
from services.experiment_runner import experiment_service

logger = logging.getLogger(__name__)


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, type=Path, help="Experiment manifest (JSON)")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (default: manifest 'output')")
    parser.add_argument("--seed", type=int, default=None, help="Random seed")
    parser.add_argument("--tol", type=float, default=None, help="Eigensolver tolerance")
    parser.add_argument("--dense-threshold", type=int, default=None,
                        help="Largest problem solved with dense factorizations")


def run_experiment(args: argparse.Namespace) -> int:
    """Load the manifest, run it, and map the outcome to an exit code"""
    manifest = export.load_manifest(args.manifest)
    if manifest.experiment != args.command:
        raise ManifestError(
            f"Manifest {args.manifest} describes '{manifest.experiment}', not '{args.command}'"
        )
    result = experiment_service.run(
        manifest,
        out_dir=args.out,
        seed=args.seed,
        tol=args.tol,
        dense_threshold=args.dense_threshold,
    )
    summary = result["summary"]
    for record in summary.assertions:
        mark = "PASS" if record.passed else "FAIL"
        logger.info(f"{mark} {record.name} value={record.value} threshold={record.threshold}")
    if not result["success"]:
        logger.error(f"{args.command} failed: {result.get('error') or 'assertions failed'}")
        return 1
    return 0


def add_experiment(subparsers, name: str, help: str) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(name, help=help)
    add_run_arguments(parser)
    parser.set_defaults(handler=run_experiment)
    return parser
