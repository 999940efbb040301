# Services package
from .eigensolvers import BlockLanczosSolver, DenseEighSolver, DenseSVDSolver, Eigensolver, get_eigensolver
from .experiment_runner import ExperimentService

__all__ = [
    "Eigensolver",
    "DenseSVDSolver",
    "DenseEighSolver",
    "BlockLanczosSolver",
    "get_eigensolver",
    "ExperimentService"
]
