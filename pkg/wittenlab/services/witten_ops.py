"""
Witten Operator Service - masses, coboundaries and gauges.

Two equivalent assemblies are provided:
  weighted gauge: plain coboundary D, masses weighted by e^{-2 phi}
  twisted gauge:  D~ = e^{-phi} D e^{phi}, unweighted masses
With lumped masses the two bundles are exactly diagonally conjugate.

Conformal factors enter the lumped mass through the dual volume, which
collects e^{n u} from each incident top cell, and through the cell's own
primal volume, which scales by e^{p u}. When u is constant on the star of a
cell this is the factor e^{(n-2p)u}.
"""
import itertools
import logging
from math import factorial
from typing import List, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from config import PHI_OVERFLOW_GUARD
from errors import ComplexError, FieldOverflowError, GeometryError, ManifestError
from models.types import (
    CellComplex,
    FactorKind,
    Gauge,
    Geometry,
    MassScheme,
    OperatorBundle,
    SimplicialComplex,
    TensorComplex,
    WeightField,
)
from services.complex import boundary_matrix

logger = logging.getLogger(__name__)

CellField = Union[np.ndarray, Sequence[np.ndarray]]


# ============ Geometry & Weights ============

def geometry_from_complex(complex: CellComplex) -> Geometry:
    """Geometry of the embedded complex with u = 0"""
    return Geometry(
        dimension=complex.dimension,
        volumes=complex.volumes,
        shares=complex.shares,
        u=[np.zeros(c) for c in complex.counts],
    )


def weight_from_vertices(complex: CellComplex, values: Optional[Sequence[float]] = None) -> WeightField:
    """Weight field from vertex values, sampled on cells by barycentric averaging"""
    if values is None:
        values = np.zeros(complex.counts[0])
    values = np.asarray(values, dtype=float)
    if values.shape != (complex.counts[0],):
        raise ComplexError(f"Weight has {values.shape} values for {complex.counts[0]} vertices")
    return WeightField(
        samples=[np.asarray(A @ values) for A in complex.averaging],
        vertex_values=values,
    )


def cell_samples(complex: CellComplex, field: CellField) -> List[np.ndarray]:
    """Per-degree cell values from vertex values or an explicit per-degree list"""
    if isinstance(field, np.ndarray) and field.ndim == 1 and len(field) == complex.counts[0]:
        return [np.asarray(A @ field) for A in complex.averaging]
    samples = [np.asarray(f, dtype=float) for f in field]
    if [len(s) for s in samples] != complex.counts:
        raise ComplexError("Per-cell field does not match the cell counts of the complex")
    return samples


def check_overflow(weight: WeightField) -> None:
    peak = weight.max_abs()
    if peak > PHI_OVERFLOW_GUARD:
        raise FieldOverflowError(
            f"|phi| reaches {peak:.1f} > {PHI_OVERFLOW_GUARD:.0f}; rescale the weight or use a larger epsilon"
        )


# ============ Mass Matrices ============

def _lumped_mass(geometry: Geometry, weight: WeightField, p: int) -> np.ndarray:
    n = geometry.dimension
    dual = geometry.shares[p] @ np.exp(n * geometry.u[n])
    vol = geometry.volumes[p]
    return np.asarray(dual) * np.exp(-2.0 * p * geometry.u[p] - 2.0 * weight.samples[p]) / vol ** 2


def _whitney_mass(complex: SimplicialComplex, p: int, top_weights: np.ndarray) -> sp.csr_matrix:
    """Galerkin mass of Whitney p-forms, each top simplex scaled by its weight"""
    n = complex.dimension
    tops = complex.simplices[n]
    pts = complex.vertices[tops]                       # (T, n+1, d)
    edges = pts[:, 1:] - pts[:, :1]                    # (T, n, d)
    grads = np.transpose(np.linalg.pinv(edges), (0, 2, 1))  # (T, n, d)
    grads = np.concatenate([-grads.sum(axis=1, keepdims=True), grads], axis=1)
    gram = np.einsum("tid,tjd->tij", grads, grads)
    vol = complex.volumes[n]
    lookup = {tuple(s): i for i, s in enumerate(complex.simplices[p])}

    local = list(itertools.combinations(range(n + 1), p + 1))
    glob = np.array([[lookup[tuple(f)] for f in tops[:, c]] for c in local])  # (faces, T)

    def bary_integral(a, b):
        return vol * (1.0 + (a == b)) / ((n + 1) * (n + 2))

    rows, cols, vals = [], [], []
    for i, si in enumerate(local):
        for j, sj in enumerate(local):
            entry = np.zeros(len(tops))
            for k in range(p + 1):
                for l in range(p + 1):
                    ri = [v for t, v in enumerate(si) if t != k]
                    cj = [v for t, v in enumerate(sj) if t != l]
                    minor = np.linalg.det(gram[:, ri][:, :, cj]) if ri else 1.0
                    entry += (-1) ** (k + l) * bary_integral(si[k], sj[l]) * minor
            rows.append(glob[i])
            cols.append(glob[j])
            vals.append(factorial(p) ** 2 * entry * top_weights)
    size = complex.counts[p]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


def _tensor_consistent_mass(complex: TensorComplex, p: int) -> sp.csr_matrix:
    blocks = []
    for a in complex.blocks[p]:
        mats = []
        for spec, ak in zip(complex.factors, a):
            h = spec.cell_lengths()
            if ak == 1:
                mats.append(sp.diags(1.0 / h))
                continue
            ne = len(h)
            nv = ne if spec.kind == FactorKind.CIRCLE else ne + 1
            head, tail = np.arange(ne), (np.arange(ne) + 1) % nv
            M = sp.csr_matrix(
                (np.r_[h / 3, h / 3, h / 6, h / 6], (np.r_[head, tail, head, tail], np.r_[head, tail, tail, head])),
                shape=(nv, nv),
            )
            mats.append(M)
        block = mats[0]
        for M in mats[1:]:
            block = sp.kron(block, M, format="csr")
        blocks.append(block)
    return sp.block_diag(blocks, format="csr")


def assemble_mass(
    complex: CellComplex,
    geometry: Geometry,
    weight: WeightField,
    p: int,
    scheme: MassScheme = MassScheme.LUMPED,
):
    """Weighted mass matrix M_p^phi on p-cochains"""
    n = complex.dimension
    if not 0 <= p <= n:
        raise ComplexError(f"Mass degree {p} outside 0..{n}")
    check_overflow(weight)

    if scheme == MassScheme.LUMPED:
        diag = _lumped_mass(geometry, weight, p)
        if not np.all(np.isfinite(diag)) or np.any(diag <= 0.0):
            raise GeometryError(f"Non-positive lumped mass entry in degree {p}; geometry is corrupt")
        return sp.diags(diag, format="csr")

    if isinstance(complex, SimplicialComplex):
        top_weights = np.exp(-2.0 * weight.samples[n] + (n - 2 * p) * geometry.u[n])
        M = _whitney_mass(complex, p, top_weights)
    elif isinstance(complex, TensorComplex):
        scale = np.sqrt(np.exp(-2.0 * weight.samples[p] + (n - 2 * p) * geometry.u[p]))
        S = sp.diags(scale)
        M = (S @ _tensor_consistent_mass(complex, p) @ S).tocsr()
    else:
        raise ComplexError("Consistent mass needs a simplicial mesh or a tensor grid")
    if np.any(M.diagonal() <= 0.0):
        raise GeometryError(f"Non-positive consistent mass diagonal in degree {p}")
    return M


# ============ Coboundaries & Bundles ============

def coboundary(complex: CellComplex, p: int) -> sp.csr_matrix:
    """D_p = transpose of the boundary of (p+1)-cells"""
    if not 0 <= p <= complex.dimension - 1:
        raise ComplexError(f"Coboundary degree {p} outside 0..{complex.dimension - 1}")
    return boundary_matrix(complex, p + 1).T.tocsr()


def twisted_coboundary(D: sp.spmatrix, weight: WeightField, p: int) -> sp.csr_matrix:
    """D~_p = diag(e^{-phi}) D_p diag(e^{phi}) on (p+1)- and p-cells"""
    check_overflow(weight)
    left = sp.diags(np.exp(-weight.samples[p + 1]))
    right = sp.diags(np.exp(weight.samples[p]))
    return (left @ D.astype(float) @ right).tocsr()


def up_stiffness(D: sp.spmatrix, M_next: sp.spmatrix) -> sp.csr_matrix:
    """A_p = D_p^T M_{p+1} D_p"""
    return (D.T @ M_next @ D).tocsr()


def build_bundle(
    complex: CellComplex,
    geometry: Geometry,
    weight: WeightField,
    gauge: Gauge = Gauge.WEIGHTED,
    scheme: MassScheme = MassScheme.LUMPED,
) -> OperatorBundle:
    """Assemble all coboundaries and masses of a complex in one gauge"""
    n = complex.dimension
    check_overflow(weight)
    incidence = [coboundary(complex, p) for p in range(n)]
    incidence.append(sp.csr_matrix((0, complex.counts[n]), dtype=np.int64))
    plain = [D.astype(float) for D in incidence]

    if gauge == Gauge.WEIGHTED:
        coboundaries = plain
        masses = [assemble_mass(complex, geometry, weight, p, scheme) for p in range(n + 1)]
        conjugation = [np.ones(c) for c in complex.counts]
    else:
        flat = WeightField(samples=[np.zeros(c) for c in complex.counts])
        coboundaries = [twisted_coboundary(plain[p], weight, p) for p in range(n)] + [plain[n]]
        masses = [assemble_mass(complex, geometry, flat, p, scheme) for p in range(n + 1)]
        conjugation = [np.exp(s) for s in weight.samples]

    return OperatorBundle(
        complex=complex,
        gauge=gauge,
        scheme=scheme,
        incidence=incidence,
        coboundaries=coboundaries,
        masses=masses,
        conjugation=conjugation,
    )


# ============ Conformal Class ============

def conformal_rescale(
    geometry: Geometry,
    weight: WeightField,
    u: CellField,
    alpha: float,
    complex: Optional[CellComplex] = None,
) -> tuple:
    """(g, phi) -> (e^{2u} g, phi - alpha u); u given per degree, or per vertex with the complex"""
    if isinstance(u, np.ndarray) and u.ndim == 1:
        if complex is None:
            raise ComplexError("Vertex-valued u needs the complex to be averaged onto cells")
        vertex_u = u
        samples = cell_samples(complex, u)
    else:
        vertex_u = None
        samples = [np.asarray(s, dtype=float) for s in u]
    if [len(s) for s in samples] != [len(s) for s in geometry.u]:
        raise ComplexError("Conformal factor does not match the geometry")

    new_geometry = Geometry(
        dimension=geometry.dimension,
        volumes=geometry.volumes,
        shares=geometry.shares,
        u=[g + s for g, s in zip(geometry.u, samples)],
    )
    vertex_values = weight.vertex_values
    if vertex_values is not None and vertex_u is not None:
        vertex_values = vertex_values - alpha * vertex_u
    elif vertex_values is not None:
        vertex_values = None
    new_weight = WeightField(
        samples=[w - alpha * s for w, s in zip(weight.samples, samples)],
        vertex_values=vertex_values,
    )
    return new_geometry, new_weight


def conformal_exponent(n: int, p: int, alpha: float) -> float:
    """The exponent r = n/(p - alpha) making the weighted r-norm a class invariant"""
    if p - alpha <= 0:
        raise ManifestError(f"No invariant exponent for n={n}, p={p}, alpha={alpha}: need p > alpha")
    r = n / (p - alpha)
    if r <= 1:
        raise ManifestError(f"Invariant exponent r={r} is not > 1")
    return r


def weighted_r_norm(cochain: np.ndarray, r: float, geometry: Geometry, weight: WeightField, p: int) -> float:
    """(sum |w/vol|^r e^{-r phi} dualvol)^{1/r}, pointwise norm and volume taken in the rescaled metric"""
    if r <= 1:
        raise ManifestError(f"r must be > 1, got {r}")
    n = geometry.dimension
    dual = np.asarray(geometry.shares[p].sum(axis=1)).ravel()
    u = geometry.u[p]
    density = np.abs(np.asarray(cochain, dtype=float) / geometry.volumes[p]) ** r
    log_factor = (n - r * p) * u - r * weight.samples[p]
    return float(np.sum(density * np.exp(log_factor) * dual) ** (1.0 / r))
