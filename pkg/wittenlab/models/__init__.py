# Models package
from .schemas import (
    MeshFile,
    ComplexSpec,
    FieldSpec,
    DomainSpec,
    SolverOptions,
    SweepSpec,
    ExperimentManifest,
    AssertionRecord,
    ExperimentSummary
)

__all__ = [
    "MeshFile",
    "ComplexSpec",
    "FieldSpec",
    "DomainSpec",
    "SolverOptions",
    "SweepSpec",
    "ExperimentManifest",
    "AssertionRecord",
    "ExperimentSummary"
]
