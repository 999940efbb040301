"""
wittenlab command line - Witten Laplacian spectra on discrete complexes.
"""
import argparse
import logging
import sys
from typing import List, Optional

from config import LOG_LEVEL
from commands import register_families, register_spectra, register_structure
from errors import WittenLabError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wittenlab",
        description="Spectra of weighted Witten Laplacians under collapse, puncture and conformal deformations",
    )
    parser.add_argument("--log-level", default=LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_spectra(subparsers)
    register_families(subparsers)
    register_structure(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format="[%(module)-12s] %(message)s",
    )
    try:
        return args.handler(args)
    except WittenLabError as e:
        logging.getLogger("wittenlab").error(f"{args.command}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
