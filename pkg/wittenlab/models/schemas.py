"""
Pydantic models for manifests, mesh files and run summaries.
"""
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import AliasChoices, BaseModel, Field, field_validator, model_validator

from models.types import BoundaryCondition, FactorSpec, Gauge, MassScheme


# Mesh Schemas
class MeshFile(BaseModel):
    """Schema for a simplicial mesh on disk."""
    dimension: int = Field(..., ge=1)
    vertices: List[List[float]]
    cells: List[List[int]] = Field(..., validation_alias=AliasChoices("cells", "simplices"),
                                   description="Top simplices as vertex index lists")
    phi: Optional[List[float]] = Field(default=None, description="Weight per vertex")
    domain: Optional[List[int]] = Field(default=None, description="Indices into cells selecting U")

    @model_validator(mode="after")
    def check_sizes(self) -> "MeshFile":
        if any(len(s) != self.dimension + 1 for s in self.cells):
            raise ValueError(f"Every cell must list {self.dimension + 1} vertices")
        if self.phi is not None and len(self.phi) != len(self.vertices):
            raise ValueError(f"phi has {len(self.phi)} values for {len(self.vertices)} vertices")
        if self.domain is not None and any(not 0 <= c < len(self.cells) for c in self.domain):
            raise ValueError("domain lists a cell index out of range")
        return self


# Manifest Schemas
class ComplexSpec(BaseModel):
    """Where the complex comes from: a mesh file, a generator, or a product of 1D factors."""
    mesh: Optional[str] = Field(default=None, description="Path to a mesh JSON file")
    generator: Optional[str] = Field(default=None, description="icosphere | torus | cycle | triangle")
    params: Dict[str, Any] = Field(default_factory=dict, description="Generator parameters")
    product: Optional[List[FactorSpec]] = Field(default=None, validation_alias=AliasChoices("product", "factors"))

    @model_validator(mode="after")
    def exactly_one_source(self) -> "ComplexSpec":
        sources = [self.mesh is not None, self.generator is not None, self.product is not None]
        if sum(sources) != 1:
            raise ValueError("Give exactly one of mesh, generator or product")
        return self


class FieldSpec(BaseModel):
    """Weight and conformal factor as expressions over coordinates."""
    phi: Optional[str] = None
    phi_values: Optional[List[float]] = None
    u: Optional[str] = None
    alpha: float = Field(default=0.0, ge=0.0)

    @field_validator("phi", "u")
    @classmethod
    def parses(cls, value: Optional[str]) -> Optional[str]:
        if value is not None:
            from services.fields import parse_field
            parse_field(value)
        return value


class DomainSpec(BaseModel):
    """Top cells of U selected by a predicate on their barycenters."""
    predicate: str = Field(..., description="e.g. 'abs(z) < 0.3'")


class SolverOptions(BaseModel):
    """Eigensolver settings for one experiment."""
    k: int = Field(default=6, ge=1)
    degrees: List[int] = Field(default_factory=lambda: [0])
    tol: Optional[float] = Field(default=None, gt=0.0)
    dense_threshold: Optional[int] = Field(default=None, ge=1, description="Largest cochain space solved densely")
    scheme: MassScheme = MassScheme.LUMPED
    gauge: Gauge = Gauge.WEIGHTED
    boundary: BoundaryCondition = BoundaryCondition.ABSOLUTE


class SweepSpec(BaseModel):
    """Parameter lists swept by an experiment."""
    epsilons: List[float] = Field(default_factory=list)
    js: List[int] = Field(default_factory=list)
    refinements: List[int] = Field(default_factory=list)
    radii: List[float] = Field(default_factory=list)
    samples: int = Field(default=0, ge=0)

    @field_validator("epsilons", "radii")
    @classmethod
    def positive(cls, values: List[float]) -> List[float]:
        if any(v <= 0 for v in values):
            raise ValueError("Sweep values must be positive")
        return values


class ExperimentManifest(BaseModel):
    """A named experiment with its complex, fields, solver options and sweeps."""
    experiment: str
    complex: Optional[ComplexSpec] = None
    fields: FieldSpec = Field(default_factory=FieldSpec)
    domain: Optional[DomainSpec] = None
    solver: SolverOptions = Field(default_factory=SolverOptions)
    sweep: SweepSpec = Field(default_factory=SweepSpec)
    options: Dict[str, Any] = Field(default_factory=dict, description="Experiment-specific settings")
    output: Optional[str] = None
    base_dir: Optional[Path] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def check_files(self) -> "ExperimentManifest":
        if self.complex is not None and self.complex.mesh is not None:
            path = Path(self.complex.mesh)
            if not path.is_absolute() and self.base_dir is not None:
                path = self.base_dir / path
            if not path.exists():
                raise ValueError(f"Mesh file not found: {path}")
            self.complex.mesh = str(path)
        return self


# Result Schemas
class AssertionRecord(BaseModel):
    """One checked statement of an experiment."""
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: Optional[str] = None


class ExperimentSummary(BaseModel):
    """Summary written to summary.json."""
    experiment: str
    statement: str
    success: bool
    seed: int
    assertions: List[AssertionRecord] = []
    metrics: Dict[str, Any] = {}
    error: Optional[str] = None
