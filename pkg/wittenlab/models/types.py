# Domain types for cochain complexes, weighted geometry and Witten spectra

from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class ComplexKind(str, Enum):
    """How a cell complex was built"""
    SIMPLICIAL = "simplicial"
    TENSOR = "tensor"
    SUBCOMPLEX = "subcomplex"


class FactorKind(str, Enum):
    """One-dimensional factor of a tensor grid"""
    CIRCLE = "circle"      # cyclic, N cells and N vertices
    INTERVAL = "interval"  # path, N cells and N+1 vertices


class MassScheme(str, Enum):
    """Discrete Hodge star used for the weighted inner products"""
    LUMPED = "lumped"
    CONSISTENT = "consistent"


class Gauge(str, Enum):
    """Equivalent formulations of the Witten operator"""
    TWISTED = "twisted"    # d~ = e^{-phi} d e^{phi}, unweighted measure
    WEIGHTED = "weighted"  # plain d, measure e^{-2 phi} dv


class BoundaryCondition(str, Enum):
    """Boundary conditions for spectra on a domain"""
    ABSOLUTE = "absolute"
    RELATIVE = "relative"
    DIRICHLET = "dirichlet"


class SpectrumKind(str, Enum):
    """Part of the Hodge decomposition an eigenvalue belongs to"""
    HARMONIC = "harmonic"
    EXACT = "exact"
    COEXACT = "coexact"


class DeformationKind(str, Enum):
    """Families of metric/weight deformations"""
    COLLAPSE = "collapse"
    SMOOTH_COLLAPSE = "smooth-collapse"
    PUNCTURE = "puncture"


class SolverMethod(str, Enum):
    """Eigensolver backends"""
    DENSE_SVD = "dense-svd"
    DENSE_EIGH = "dense-eigh"
    BLOCK_LANCZOS = "block-lanczos"


# ============ Complex Models ============

class FactorSpec(BaseModel):
    """One factor of a product grid"""
    kind: FactorKind
    cells: int = Field(ge=1)
    length: Optional[float] = Field(default=None, gt=0.0)
    lengths: Optional[List[float]] = None

    def cell_lengths(self) -> np.ndarray:
        if self.lengths is not None:
            return np.asarray(self.lengths, dtype=float)
        total = self.length if self.length is not None else float(self.cells)
        return np.full(self.cells, total / self.cells)


class CellComplex(BaseModel):
    """
    Oriented cell complex with the metric data the mass matrices need.

    Index p of every per-degree list refers to p-cells. boundaries[0] is an
    empty (0 x n_0) matrix so that boundaries[p] is the boundary of p-cells.
    shares[p] holds, for each p-cell and top cell, the part of the top cell's
    volume attributed to the p-cell; averaging[p] maps vertex values to
    barycentric cell samples.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: ComplexKind
    dimension: int = Field(ge=1)
    vertices: np.ndarray
    boundaries: List[Any]
    volumes: List[np.ndarray]
    shares: List[Any]
    averaging: List[Any]
    periods: Optional[np.ndarray] = None
    parent_cells: Optional[List[np.ndarray]] = None

    @property
    def counts(self) -> List[int]:
        return [len(v) for v in self.volumes]

    @property
    def n_top(self) -> int:
        return self.counts[self.dimension]

    def vertex_distances(self, v: int) -> np.ndarray:
        """Embedded distance from vertex v to every vertex (periodic where a period is set)"""
        delta = self.vertices - self.vertices[v]
        if self.periods is not None:
            for axis, period in enumerate(self.periods):
                if period > 0:
                    delta[:, axis] = (delta[:, axis] + period / 2) % period - period / 2
        return np.linalg.norm(delta, axis=1)

    def top_barycenters(self) -> np.ndarray:
        """Barycenters of top cells; periodic axes use the circular mean"""
        A = self.averaging[self.dimension]
        centers = np.asarray(A @ self.vertices, dtype=float)
        if self.periods is not None:
            for axis, period in enumerate(self.periods):
                if period > 0:
                    angle = 2.0 * np.pi * self.vertices[:, axis] / period
                    mean = np.arctan2(A @ np.sin(angle), A @ np.cos(angle))
                    centers[:, axis] = (mean % (2.0 * np.pi)) * period / (2.0 * np.pi)
        return centers


class SimplicialComplex(CellComplex):
    """Simplicial mesh; simplices[p] rows are sorted vertex tuples in lexicographic order"""
    simplices: List[np.ndarray]


class TensorComplex(CellComplex):
    """Product of one-dimensional circles and intervals"""
    factors: List[FactorSpec]
    blocks: List[List[tuple]]  # per degree: factor-degree multi-indices in basis order


class DomainTag(BaseModel):
    """Full subcomplex U of top cells with derived interface and complement"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    top_mask: np.ndarray
    inside: List[np.ndarray]     # closure of U, interface included
    outside: List[np.ndarray]    # closure of the complement minus the interface
    interface: List[np.ndarray]
    components: int = 1

    @property
    def connected(self) -> bool:
        return self.components == 1


# ============ Geometry Models ============

class Geometry(BaseModel):
    """Unweighted volumes plus the per-cell conformal log-factor u"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    dimension: int
    volumes: List[np.ndarray]
    shares: List[Any]
    u: List[np.ndarray]

    def total_volume(self) -> float:
        n = self.dimension
        return float(np.sum(self.volumes[n] * np.exp(n * self.u[n])))


class WeightField(BaseModel):
    """Weight phi as vertex values plus per-cell samples"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    samples: List[np.ndarray]
    vertex_values: Optional[np.ndarray] = None

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(s))) for s in self.samples if s.size), default=0.0)


class OperatorBundle(BaseModel):
    """Per-degree coboundaries and masses in one gauge"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    complex: Optional[CellComplex] = None
    gauge: Gauge
    scheme: MassScheme
    incidence: List[Any]      # integer coboundaries, gauge-free
    coboundaries: List[Any]   # D_0 .. D_n, D_n is the empty map out of top cells
    masses: List[Any]         # M_0 .. M_n
    conjugation: List[np.ndarray]  # e^{phi} per degree in the twisted gauge, ones otherwise

    @property
    def dimension(self) -> int:
        return len(self.masses) - 1

    @property
    def counts(self) -> List[int]:
        return [M.shape[0] for M in self.masses]

    @property
    def lumped(self) -> bool:
        return self.scheme == MassScheme.LUMPED

    def stiffness(self, p: int):
        D = self.coboundaries[p]
        return (D.T @ self.masses[p + 1] @ D).tocsr()


# ============ Spectrum Models ============

class SpectrumResult(BaseModel):
    """Classified spectrum of one degree"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    degree: int
    harmonic_dimension: int = 0
    coexact: List[float] = []
    exact: List[float] = []
    coexact_residuals: List[float] = []
    exact_residuals: List[float] = []
    coexact_vectors: Optional[np.ndarray] = None
    exact_vectors: Optional[np.ndarray] = None
    mass: Optional[Any] = None
    tolerance: float = 1e-10
    method: SolverMethod = SolverMethod.DENSE_SVD
    metadata: Dict[str, Any] = {}

    def all_eigenvalues(self) -> np.ndarray:
        """Full Laplacian eigenvalues: harmonic zeros, exact and coexact parts merged"""
        values = [0.0] * self.harmonic_dimension + list(self.exact) + list(self.coexact)
        return np.sort(np.asarray(values, dtype=float))


class GapConfig(BaseModel):
    """Hypothesis for the N-spectral-gap distance"""
    n: int = Field(ge=1)
    eta: float = Field(gt=0.0)
    m_bound: float = Field(gt=0.0)


class DegreeCohomology(BaseModel):
    """Cohomology ranks in one degree"""
    betti_m: int = Field(ge=0)
    betti_u: int = Field(ge=0)
    restriction_rank: int = Field(ge=0)
    quotient_dimension: int = Field(ge=0)


class CohomologySummary(BaseModel):
    """Betti numbers of M and U, restriction ranks and d_p for every degree"""
    degrees: Dict[int, DegreeCohomology]

    def to_json(self) -> Dict[str, List[int]]:
        return {
            str(p): [c.betti_m, c.betti_u, c.restriction_rank, c.quotient_dimension]
            for p, c in sorted(self.degrees.items())
        }


# ============ Deformation Models ============

class DeformationParams(BaseModel):
    """Parameters of one member of a deformation family"""
    kind: DeformationKind
    epsilon: float = Field(gt=0.0, le=1.0)
    alpha: float = Field(default=0.0, ge=0.0)
    j: Optional[int] = Field(default=None, ge=1)
    center: Optional[int] = Field(default=None, ge=0)


# ============ Continuum Model Types ============

class Grid1D(BaseModel):
    """Uniform 1D grid carrying phi and its first two derivatives at the nodes"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: FactorKind
    nodes: int = Field(ge=3)
    length: float = Field(gt=0.0)
    x: np.ndarray
    phi: np.ndarray
    dphi: np.ndarray
    ddphi: np.ndarray
    expression: Optional[str] = None

    @property
    def spacing(self) -> float:
        cells = self.nodes if self.kind == FactorKind.CIRCLE else self.nodes - 1
        return self.length / cells


class ProductGrid2D(BaseModel):
    """Periodic tensor grid, first factor slowest in the flattened ordering"""
    x: Grid1D
    y: Grid1D

    @property
    def shape(self) -> tuple:
        return (self.x.nodes, self.y.nodes)


class TwistField(BaseModel):
    """Vector field X sampled at the nodes of a periodic 1D or 2D grid"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    dimension: int = Field(ge=1, le=2)
    components: List[np.ndarray]
    gradient: bool = False
    potential: Optional[np.ndarray] = None
    exact_curl: Optional[np.ndarray] = None


class CircleSpectrum(BaseModel):
    """Oracle spectra of the circle Witten Laplacian"""
    functions: List[float]
    functions_coarse: List[float]
    functions_fine: List[float]
    one_forms: List[float]
    ground_state_angle: float
    drift: float


class ThreeFormsReport(BaseModel):
    """The three assemblies of the twisted Laplacian and their discrepancies"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    degree: int
    direct: Any
    lie: Any
    curvature: Any
    diff_direct_lie: float
    diff_direct_curvature: float
    diff_lie_curvature: float
    hess_coefficient: float = 2.0
