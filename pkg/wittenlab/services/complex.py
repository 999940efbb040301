"""
Complex Service - simplicial meshes, tensor grids and domain tagging.

Cells of degree p are indexed 0..n_p-1. Simplices are stored as sorted vertex
tuples in lexicographic order; omitting the k-th vertex contributes (-1)^k to
the boundary. Tensor grids are Kronecker products of 1D factors with the
first factor slowest.
"""
import itertools
import logging
from functools import reduce
from math import factorial
from typing import Callable, List, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from errors import ComplexError, DomainError, GeometryError
from models.types import (
    CellComplex,
    ComplexKind,
    DomainTag,
    FactorKind,
    FactorSpec,
    SimplicialComplex,
    TensorComplex,
)

logger = logging.getLogger(__name__)

TopSelection = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, Sequence[int]]


# ============ Simplicial Meshes ============

def build_simplicial(vertices: Sequence, top_simplices: Sequence[Sequence[int]]) -> SimplicialComplex:
    """
    Build a pure simplicial complex from vertex coordinates and top simplices.

    Every face is generated; volumes come from the embedded coordinates.
    """
    coords = np.asarray(vertices, dtype=float)
    if coords.ndim == 1:
        coords = coords.reshape(-1, 1)
    n_vertices = coords.shape[0]

    tops = [tuple(int(v) for v in s) for s in top_simplices]
    if not tops:
        raise ComplexError("No top simplices given")
    sizes = {len(s) for s in tops}
    if len(sizes) != 1:
        raise ComplexError(f"Top simplices of mixed sizes {sorted(sizes)}")
    n = sizes.pop() - 1
    if n < 1:
        raise ComplexError("Top simplices must have at least two vertices")
    if coords.shape[1] < n:
        raise ComplexError(f"{n}-simplices need coordinates in at least {n} dimensions")

    seen = set()
    for s in tops:
        if len(set(s)) != len(s):
            raise ComplexError(f"Degenerate simplex {s}")
        if min(s) < 0 or max(s) >= n_vertices:
            raise ComplexError(f"Vertex index out of range in {s}")
        key = tuple(sorted(s))
        if key in seen:
            raise ComplexError(f"Duplicate top simplex {key}")
        seen.add(key)

    top_array = np.array(sorted(seen), dtype=np.int64)
    if len(np.unique(top_array)) != n_vertices:
        raise ComplexError("Every vertex must belong to a top simplex")

    simplices: List[np.ndarray] = []
    lookup: List[dict] = []
    for p in range(n + 1):
        faces = set()
        for combo in itertools.combinations(range(n + 1), p + 1):
            faces.update(map(tuple, top_array[:, combo]))
        ordered = np.array(sorted(faces), dtype=np.int64).reshape(-1, p + 1)
        simplices.append(ordered)
        lookup.append({tuple(s): i for i, s in enumerate(ordered)})

    boundaries = [sp.csr_matrix((0, n_vertices), dtype=np.int64)]
    for p in range(1, n + 1):
        rows, cols, vals = [], [], []
        for k in range(p + 1):
            faces = np.delete(simplices[p], k, axis=1)
            rows.extend(lookup[p - 1][tuple(f)] for f in faces)
            cols.extend(range(len(faces)))
            vals.extend([(-1) ** k] * len(faces))
        shape = (len(simplices[p - 1]), len(simplices[p]))
        boundaries.append(sp.csr_matrix((vals, (rows, cols)), shape=shape, dtype=np.int64))

    volumes = [simplex_volumes(coords, s) for s in simplices]
    for p, vol in enumerate(volumes):
        if np.any(vol <= 0.0):
            raise GeometryError(f"Degenerate geometry: {int(np.sum(vol <= 0))} zero-volume {p}-simplices")

    n_top = len(top_array)
    shares, averaging = [], []
    for p in range(n + 1):
        rows, cols = [], []
        for combo in itertools.combinations(range(n + 1), p + 1):
            rows.extend(lookup[p][tuple(f)] for f in top_array[:, combo])
            cols.extend(range(n_top))
        weight = (p + 1) / (n + 1) * volumes[n][np.asarray(cols)]
        shares.append(sp.csr_matrix((weight, (rows, cols)), shape=(len(simplices[p]), n_top)))

        m = len(simplices[p])
        avg_rows = np.repeat(np.arange(m), p + 1)
        averaging.append(sp.csr_matrix(
            (np.full(m * (p + 1), 1.0 / (p + 1)), (avg_rows, simplices[p].ravel())),
            shape=(m, n_vertices),
        ))

    logger.debug(f"[COMPLEX] simplicial n={n} counts={[len(s) for s in simplices]}")
    return SimplicialComplex(
        kind=ComplexKind.SIMPLICIAL,
        dimension=n,
        vertices=coords,
        boundaries=boundaries,
        volumes=volumes,
        shares=shares,
        averaging=averaging,
        simplices=simplices,
    )


def simplex_volumes(coords: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    """p-dimensional volume of each simplex from its Gram determinant"""
    p = simplices.shape[1] - 1
    if p == 0:
        return np.ones(len(simplices))
    edges = coords[simplices[:, 1:]] - coords[simplices[:, :1]]
    gram = np.einsum("mid,mjd->mij", edges, edges)
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None)) / factorial(p)


def boundary_matrix(complex: CellComplex, p: int) -> sp.csr_matrix:
    """Integer boundary operator from p-cells to (p-1)-cells"""
    if not 1 <= p <= complex.dimension:
        raise ComplexError(f"Boundary degree {p} outside 1..{complex.dimension}")
    return complex.boundaries[p]


# ============ Tensor Grids ============

def _kron_all(mats) -> sp.csr_matrix:
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), mats).tocsr()


def _factor_data(spec: FactorSpec) -> dict:
    """Coboundary, volumes, shares, averaging and node coordinates of one 1D factor"""
    h = spec.cell_lengths()
    if len(h) != spec.cells:
        raise ComplexError(f"Factor lists {len(h)} lengths for {spec.cells} cells")
    if np.any(h <= 0):
        raise ComplexError("Factor lengths must be positive")
    if spec.kind == FactorKind.CIRCLE and spec.cells < 3:
        raise ComplexError(f"Circle factor needs at least 3 cells, got {spec.cells}")

    ne = spec.cells
    nv = ne if spec.kind == FactorKind.CIRCLE else ne + 1
    tail = (np.arange(ne) + 1) % nv
    head = np.arange(ne)
    edges = np.arange(ne)
    D = sp.csr_matrix(
        (np.r_[-np.ones(ne), np.ones(ne)], (np.r_[edges, edges], np.r_[head, tail])),
        shape=(ne, nv), dtype=np.int64,
    )
    half = sp.csr_matrix((np.r_[h, h] / 2, (np.r_[head, tail], np.r_[edges, edges])), shape=(nv, ne))
    avg = sp.csr_matrix((np.full(2 * ne, 0.5), (np.r_[edges, edges], np.r_[head, tail])), shape=(ne, nv))
    coords = np.concatenate([[0.0], np.cumsum(h)])[:nv]
    period = float(np.sum(h)) if spec.kind == FactorKind.CIRCLE else 0.0
    return {
        "D": D,
        "counts": (nv, ne),
        "volumes": (np.ones(nv), h),
        "shares": (half, sp.diags(h).tocsr()),
        "averaging": (sp.identity(nv, format="csr"), avg),
        "coords": coords,
        "period": period,
    }


def product_grid(factors: Sequence[Union[FactorSpec, dict]]) -> TensorComplex:
    """
    Tensor product of circles and intervals.

    The coboundary obeys the graded Leibniz rule: the k-th factor's
    coboundary picks up (-1)^(degree of the factors to its left).
    """
    specs = [f if isinstance(f, FactorSpec) else FactorSpec(**f) for f in factors]
    if not specs:
        raise ComplexError("Product grid needs at least one factor")
    data = [_factor_data(s) for s in specs]
    m = len(specs)

    blocks = [
        [a for a in itertools.product((0, 1), repeat=m) if sum(a) == q]
        for q in range(m + 1)
    ]

    def block_size(a):
        return int(np.prod([d["counts"][ak] for d, ak in zip(data, a)]))

    boundaries = [None] * (m + 1)
    n_vertices = block_size(blocks[0][0])
    boundaries[0] = sp.csr_matrix((0, n_vertices), dtype=np.int64)
    for q in range(m):
        grid = [[None] * len(blocks[q]) for _ in blocks[q + 1]]
        for i, b in enumerate(blocks[q + 1]):
            for j, a in enumerate(blocks[q]):
                diff = [bk - ak for ak, bk in zip(a, b)]
                if sorted(diff) != [0] * (m - 1) + [1]:
                    continue
                k = diff.index(1)
                sign = (-1) ** sum(a[:k])
                mats = [
                    d["D"] if l == k else sp.identity(d["counts"][a[l]], dtype=np.int64, format="csr")
                    for l, d in enumerate(data)
                ]
                grid[i][j] = sign * _kron_all(mats)
        D = sp.bmat(grid, format="csr", dtype=np.int64)
        boundaries[q + 1] = D.T.tocsr()

    volumes, shares, averaging = [], [], []
    for q in range(m + 1):
        volumes.append(np.concatenate([
            reduce(np.kron, [d["volumes"][ak] for d, ak in zip(data, a)]) for a in blocks[q]
        ]))
        shares.append(sp.vstack([
            _kron_all([d["shares"][ak] for d, ak in zip(data, a)]) for a in blocks[q]
        ], format="csr"))
        averaging.append(sp.vstack([
            _kron_all([d["averaging"][ak] for d, ak in zip(data, a)]) for a in blocks[q]
        ], format="csr"))

    axes = np.meshgrid(*[d["coords"] for d in data], indexing="ij")
    coords = np.stack([ax.ravel() for ax in axes], axis=1)

    logger.debug(f"[COMPLEX] tensor factors={[(s.kind.value, s.cells) for s in specs]}")
    return TensorComplex(
        kind=ComplexKind.TENSOR,
        dimension=m,
        vertices=coords,
        boundaries=boundaries,
        volumes=volumes,
        shares=shares,
        averaging=averaging,
        periods=np.array([d["period"] for d in data]),
        factors=specs,
        blocks=blocks,
    )


# ============ Domains ============

def _closure(complex: CellComplex, top_mask: np.ndarray) -> List[np.ndarray]:
    n = complex.dimension
    masks = [None] * (n + 1)
    masks[n] = top_mask.astype(bool)
    for p in range(n, 0, -1):
        incidence = abs(complex.boundaries[p])
        masks[p - 1] = (incidence @ masks[p].astype(float)) > 0
    return masks


def _selection_mask(complex: CellComplex, predicate: TopSelection) -> np.ndarray:
    if callable(predicate):
        mask = np.asarray(predicate(complex.top_barycenters()), dtype=bool)
    else:
        arr = np.asarray(predicate)
        if arr.dtype == bool:
            mask = arr
        else:
            mask = np.zeros(complex.n_top, dtype=bool)
            mask[arr.astype(np.int64)] = True
    if mask.shape != (complex.n_top,):
        raise DomainError(f"Selection has shape {mask.shape}, expected ({complex.n_top},)")
    return mask


def tag_domain(complex: CellComplex, predicate: TopSelection) -> DomainTag:
    """
    Select top cells and derive the full subcomplex U, its interface and the complement.

    predicate is a callable on top-cell barycenters, a boolean mask, or a list of top-cell indices.
    """
    mask = _selection_mask(complex, predicate)
    if not mask.any():
        raise DomainError("Domain selection is empty")
    if mask.all():
        raise DomainError("Domain selection covers the whole complex; no deformation possible")

    inside = _closure(complex, mask)
    other = _closure(complex, ~mask)
    interface = [a & b for a, b in zip(inside, other)]
    outside = [b & ~i for b, i in zip(other, interface)]

    verts = np.flatnonzero(inside[0])
    edges = inside[1]
    incidence = abs(complex.boundaries[1])[:, edges]
    adjacency = (incidence @ incidence.T)[verts][:, verts]
    components, _ = connected_components(adjacency, directed=False)

    logger.info(f"[DOMAIN] |U|={int(mask.sum())} top cells, {components} component(s), "
                f"interface vertices={int(interface[0].sum())}")
    return DomainTag(
        top_mask=mask,
        inside=inside,
        outside=outside,
        interface=interface,
        components=int(components),
    )


def subcomplex(complex: CellComplex, domain: DomainTag) -> CellComplex:
    """
    The full subcomplex U as a complex of its own.

    Shares only count top cells of U, so interface cells carry the volume of U alone.
    parent_cells[p] maps each p-cell of U to its index in the parent.
    """
    n = complex.dimension
    keep = [np.flatnonzero(mask) for mask in domain.inside]
    tops = keep[n]
    boundaries = [sp.csr_matrix((0, len(keep[0])), dtype=np.int64)]
    for p in range(1, n + 1):
        boundaries.append(complex.boundaries[p][keep[p - 1]][:, keep[p]].tocsr())
    return CellComplex(
        kind=ComplexKind.SUBCOMPLEX,
        dimension=n,
        vertices=complex.vertices[keep[0]],
        boundaries=boundaries,
        volumes=[complex.volumes[p][keep[p]] for p in range(n + 1)],
        shares=[complex.shares[p][keep[p]][:, tops].tocsr() for p in range(n + 1)],
        averaging=[complex.averaging[p][keep[p]][:, keep[0]].tocsr() for p in range(n + 1)],
        periods=complex.periods,
        parent_cells=keep,
    )
