"""
Spectrum subcommands on fixed complexes and fields.
"""
from commands.common import add_experiment


def register(subparsers) -> None:
    add_experiment(subparsers, "spectrum", "Harmonic, exact and coexact spectra per degree")
    add_experiment(subparsers, "duality", "phi -> -phi duality on circles and flat tori")
    add_experiment(subparsers, "kunneth", "Product spectra against sums of factor spectra")
    add_experiment(subparsers, "oracle", "Brute-force min-max and continuum oracles")
