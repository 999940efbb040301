"""
Cohomology Service - real ranks, Betti numbers and restriction maps.

Ranks of coboundaries use two exact combinatorial paths before falling back
to column-pivoted QR:
  graph rows    every row holds one or two unit entries of opposite sign
                (vertex-to-edge coboundaries); the kernel is spanned by
                component indicators of the components with no one-entry row
  two columns   every column holds at most two nonzeros (top-cell
                coboundaries); the kernel of the transpose follows from
                propagating ratios across the dual graph
"""
import logging
from typing import List, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components
from scipy.sparse.linalg import lsqr

from config import COHOMOLOGY_DENSE_LIMIT, RANK_PIVOT_RTOL
from errors import ComplexError
from models.types import CellComplex, CohomologySummary, DegreeCohomology, DomainTag
from services.complex import subcomplex

logger = logging.getLogger(__name__)


# ============ Matrix Kernels ============

def is_graph_incidence(D: sp.csr_matrix) -> bool:
    D = sp.csr_matrix(D)
    nnz = np.diff(D.indptr)
    if np.any(nnz > 2) or np.any(np.abs(D.data) != 1):
        return False
    sums = np.asarray(D.sum(axis=1)).ravel()
    return bool(np.all(sums[nnz == 2] == 0))


def _graph_kernel(D: sp.csr_matrix) -> np.ndarray:
    """Component indicators of the ungrounded components of the row graph"""
    D = sp.csr_matrix(D)
    n = D.shape[1]
    nnz = np.diff(D.indptr)
    cols = D.indices
    heads, tails = [], []
    for r in np.flatnonzero(nnz == 2):
        a, b = cols[D.indptr[r]:D.indptr[r + 1]]
        heads.append(a)
        tails.append(b)
    for r in np.flatnonzero(nnz == 1):
        heads.append(cols[D.indptr[r]])
        tails.append(n)  # ground node
    graph = sp.csr_matrix((np.ones(len(heads)), (heads, tails)), shape=(n + 1, n + 1))
    _, labels = connected_components(graph, directed=False)
    ground = labels[n]
    labels = labels[:n]
    free = [lab for lab in np.unique(labels) if lab != ground]
    basis = np.zeros((n, len(free)))
    for j, lab in enumerate(free):
        members = labels == lab
        basis[members, j] = 1.0 / np.sqrt(members.sum())
    return basis


def propagation_cokernel(D: sp.spmatrix) -> Optional[np.ndarray]:
    """Kernel of D^T when every column of D has at most two nonzeros, else None"""
    C = sp.csc_matrix(D)
    nnz = np.diff(C.indptr)
    if np.any(nnz > 2):
        return None
    m = C.shape[0]
    grounded = np.zeros(m, dtype=bool)
    heads, tails, ratios = [], [], []
    for c in range(C.shape[1]):
        lo, hi = C.indptr[c], C.indptr[c + 1]
        rows, vals = C.indices[lo:hi], C.data[lo:hi]
        if hi - lo == 1:
            grounded[rows[0]] = True
        elif hi - lo == 2:
            heads.extend([rows[0], rows[1]])
            tails.extend([rows[1], rows[0]])
            ratios.extend([-vals[0] / vals[1], -vals[1] / vals[0]])
    graph = sp.csr_matrix((np.ones(len(heads)), (heads, tails)), shape=(m, m))
    ratio = sp.csr_matrix((ratios, (heads, tails)), shape=(m, m)).todok()
    n_comp, labels = connected_components(graph, directed=False)

    DT = sp.csr_matrix(D.T)
    vectors = []
    for lab in range(n_comp):
        members = np.flatnonzero(labels == lab)
        if grounded[members].any():
            continue
        order, preds = breadth_first_order(graph, members[0], directed=False, return_predecessors=True)
        c = np.zeros(m)
        c[order[0]] = 1.0
        for node in order[1:]:
            parent = preds[node]
            c[node] = ratio[parent, node] * c[parent]
        if np.linalg.norm(DT @ c) <= 1e-9 * np.linalg.norm(c):
            vectors.append(c / np.linalg.norm(c))
    if not vectors:
        return np.zeros((m, 0))
    return np.stack(vectors, axis=1)


def _dense_guard(shape: tuple) -> None:
    if max(shape) > COHOMOLOGY_DENSE_LIMIT:
        raise ComplexError(
            f"Dense rank computation on a {shape[0]}x{shape[1]} matrix exceeds "
            f"COHOMOLOGY_DENSE_LIMIT={COHOMOLOGY_DENSE_LIMIT}"
        )


def qr_rank(A: np.ndarray, reference: Optional[float] = None) -> int:
    """Numerical rank from column-pivoted QR with threshold RANK_PIVOT_RTOL x largest pivot"""
    if A.size == 0:
        return 0
    R = la.qr(A, mode="r", pivoting=True)[0]
    pivots = np.abs(np.diag(R))
    scale = reference if reference is not None else (pivots[0] if len(pivots) else 0.0)
    if scale == 0.0:
        return 0
    return int(np.sum(pivots > RANK_PIVOT_RTOL * scale))


def matrix_rank(D: sp.spmatrix) -> int:
    """Real rank of an incidence-type sparse matrix"""
    if D.shape[0] == 0 or D.shape[1] == 0:
        return 0
    if is_graph_incidence(D):
        return D.shape[1] - _graph_kernel(D).shape[1]
    cokernel = propagation_cokernel(D)
    if cokernel is not None:
        return D.shape[0] - cokernel.shape[1]
    _dense_guard(D.shape)
    return qr_rank(D.toarray())


def kernel_basis(D: sp.spmatrix) -> np.ndarray:
    """Orthonormal basis of ker D (columns)"""
    if D.shape[0] == 0:
        return np.eye(D.shape[1])
    if is_graph_incidence(D):
        return _graph_kernel(D)
    _dense_guard(D.shape)
    return la.null_space(D.toarray())


def cokernel_basis(D: sp.spmatrix) -> np.ndarray:
    """Orthonormal basis of ker D^T (columns)"""
    if D.shape[1] == 0:
        return np.eye(D.shape[0])
    basis = propagation_cokernel(D)
    if basis is not None:
        return basis
    return kernel_basis(sp.csr_matrix(D.T))


# ============ Betti Numbers ============

def _coboundary(complex: CellComplex, p: int) -> sp.csr_matrix:
    if p < 0 or p >= complex.dimension:
        rows = complex.counts[p + 1] if 0 <= p + 1 <= complex.dimension else 0
        cols = complex.counts[p] if 0 <= p <= complex.dimension else 0
        return sp.csr_matrix((rows, cols), dtype=np.int64)
    return complex.boundaries[p + 1].T.tocsr()


def coboundary_rank(complex: CellComplex, p: int) -> int:
    return matrix_rank(_coboundary(complex, p))


def betti(complex: CellComplex, p: int) -> int:
    """b_p = dim ker D_p - rank D_{p-1}"""
    if not 0 <= p <= complex.dimension:
        raise ComplexError(f"Degree {p} outside 0..{complex.dimension}")
    return complex.counts[p] - coboundary_rank(complex, p) - coboundary_rank(complex, p - 1)


def betti_numbers(complex: CellComplex) -> List[int]:
    return [betti(complex, p) for p in range(complex.dimension + 1)]


def euler_characteristic(complex: CellComplex) -> int:
    return int(sum((-1) ** p * c for p, c in enumerate(complex.counts)))


def cocycle_basis(complex: CellComplex, p: int) -> np.ndarray:
    """
    Cocycles spanning H^p: ker D_p intersected with (im D_{p-1})^perp, Euclidean.

    The basis depends only on the incidence, not on the metric or weight.
    """
    n = complex.dimension
    if p == 0:
        return kernel_basis(_coboundary(complex, 0))
    if p == n:
        return cokernel_basis(_coboundary(complex, n - 1))
    stacked = sp.vstack([_coboundary(complex, p), _coboundary(complex, p - 1).T]).tocsr()
    _dense_guard(stacked.shape)
    return la.null_space(stacked.toarray())


# ============ Restriction Map ============

def _exact_residual(D: sp.csr_matrix, R: np.ndarray) -> np.ndarray:
    """Columns of R minus their least-squares projection onto range(D)"""
    if D.shape[1] == 0:
        return R
    if max(D.shape) <= COHOMOLOGY_DENSE_LIMIT:
        coeffs = la.lstsq(D.toarray(), R)[0]
        return R - D @ coeffs
    out = np.empty_like(R)
    for j in range(R.shape[1]):
        x = lsqr(D, R[:, j], atol=1e-14, btol=1e-14, iter_lim=20 * D.shape[1])[0]
        out[:, j] = R[:, j] - D @ x
    return out


def restriction_rank(
    complex: CellComplex,
    domain: DomainTag,
    p: int,
    representatives: Optional[np.ndarray] = None,
) -> int:
    """
    Rank of H^p(M) -> H^p(U) induced by restricting cochains.

    representatives may be any set of cocycles spanning H^p(M); the result
    does not depend on the choice.
    """
    sub = subcomplex(complex, domain)
    if betti(complex, p) == 0 or betti(sub, p) == 0:
        return 0
    H = cocycle_basis(complex, p) if representatives is None else np.asarray(representatives, dtype=float)
    R = H[domain.inside[p]]
    residual = _exact_residual(_coboundary(sub, p - 1).astype(float), R)
    scale = float(np.max(np.linalg.norm(R, axis=0))) if R.size else 0.0
    rank = qr_rank(residual, reference=scale)
    logger.debug(f"[COHOMOLOGY] restriction rank p={p}: {rank}")
    return rank


def quotient_dimension(complex: CellComplex, domain: DomainTag, p: int) -> int:
    """d_p = dim H^p(U/M) = b_p(U) - rank(H^p(M) -> H^p(U))"""
    return betti(subcomplex(complex, domain), p) - restriction_rank(complex, domain, p)


def summarize(complex: CellComplex, domain: DomainTag) -> CohomologySummary:
    sub = subcomplex(complex, domain)
    degrees = {}
    for p in range(complex.dimension + 1):
        b_m, b_u = betti(complex, p), betti(sub, p)
        rank = restriction_rank(complex, domain, p)
        degrees[p] = DegreeCohomology(
            betti_m=b_m, betti_u=b_u, restriction_rank=rank, quotient_dimension=b_u - rank
        )
    summary = CohomologySummary(degrees=degrees)
    logger.info(f"[COHOMOLOGY] {summary.to_json()}")
    return summary
