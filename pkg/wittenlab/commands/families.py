"""
Subcommands that sweep a deformation family.
"""
from commands.common import add_experiment


def register(subparsers) -> None:
    add_experiment(subparsers, "collapse", "Collapse M minus U and track the small eigenvalues")
    add_experiment(subparsers, "puncture", "Shrink a puncture and measure spectral convergence")
    add_experiment(subparsers, "conformal-sweep", "Scaled first eigenvalues over a conformal class")
    add_experiment(subparsers, "three-forms", "Compare the three assemblies of the twisted Laplacian")
