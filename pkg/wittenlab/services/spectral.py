"""
Spectral Service - coexact, exact and harmonic parts of Witten spectra.

Eigenvalues of the coexact part at degree p are the nonzero eigenvalues of
the pencil (D_p^T M_{p+1} D_p, M_p); the exact part at degree p is the
coexact part at p-1 transported by D_{p-1}. Every reported residual is
||A x - lam M x|| / ||M x|| and must not exceed the requested tolerance.
"""
import logging
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, minres, splu
from scipy.sparse.linalg import norm as sparse_norm

from config import (
    CLUSTER_GAP_RTOL,
    COHOMOLOGY_DENSE_LIMIT,
    DEFAULT_SEED,
    DENSE_THRESHOLD,
    EIGEN_ASSERT_TOL,
    MINMAX_LIMIT,
    RANK_PIVOT_RTOL,
    SOLVER_TOLERANCE,
)
from errors import (
    DomainError,
    GapHypothesisError,
    NotClosedError,
    NotExactError,
    SolverConvergenceError,
    SpectrumRequestError,
)
from models.types import (
    BoundaryCondition,
    CellComplex,
    DomainTag,
    GapConfig,
    Gauge,
    Geometry,
    MassScheme,
    OperatorBundle,
    SpectrumResult,
    WeightField,
)
from services.cohomology import matrix_rank
from services.complex import subcomplex
from services.eigensolvers import CoexactPencil, get_eigensolver, pencil_residuals
from services.witten_ops import build_bundle, up_stiffness

logger = logging.getLogger(__name__)


# ============ Helpers ============

def coexact_rank(bundle: OperatorBundle, p: int) -> int:
    """Rank of D_p: the number of coexact eigenvalues in degree p"""
    if p < 0 or p >= bundle.dimension:
        return 0
    return matrix_rank(bundle.incidence[p])


def harmonic_dimension(bundle: OperatorBundle, p: int) -> int:
    """dim ker of the degree-p Laplacian from integer incidence ranks"""
    return bundle.counts[p] - coexact_rank(bundle, p) - coexact_rank(bundle, p - 1)


def gauge_rank(bundle: OperatorBundle, p: int) -> Optional[int]:
    """
    Numerical rank of the mass-scaled gauge coboundary L_{p+1}^T D_p L_p^{-T},
    where M = L L^T, counted from singular values above RANK_PIVOT_RTOL x the largest.
    None when D_p is past COHOMOLOGY_DENSE_LIMIT.
    """
    if p < 0 or p >= bundle.dimension:
        return 0
    D = bundle.coboundaries[p]
    if D.shape[0] == 0 or D.shape[1] == 0:
        return 0
    if max(D.shape) > COHOMOLOGY_DENSE_LIMIT:
        return None
    M, W = bundle.masses[p], bundle.masses[p + 1]
    if bundle.lumped:
        G = np.sqrt(W.diagonal())[:, None] * D.toarray() / np.sqrt(M.diagonal())[None, :]
    else:
        L_m = la.cholesky(M.toarray(), lower=True)
        L_w = la.cholesky(W.toarray(), lower=True)
        G = la.solve_triangular(L_m, (L_w.T @ D.toarray()).T, lower=True).T
    s = la.svd(G, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_PIVOT_RTOL * s[0]))


def measured_harmonic_dimension(bundle: OperatorBundle, p: int) -> Optional[int]:
    """dim ker of the degree-p Laplacian in the bundle's own gauge and masses"""
    up, down = gauge_rank(bundle, p), gauge_rank(bundle, p - 1)
    if up is None or down is None:
        return None
    return bundle.counts[p] - up - down


def _mass_solve(M, b: np.ndarray) -> np.ndarray:
    if isinstance(M, sp.dia_matrix) or sp.triu(M, 1).nnz == 0:
        d = np.asarray(M.diagonal())
        return b / (d if b.ndim == 1 else d[:, None])
    return splu(sp.csc_matrix(M)).solve(b)


def _pencil(bundle: OperatorBundle, p: int) -> CoexactPencil:
    return CoexactPencil(
        degree=p,
        D=bundle.coboundaries[p],
        incidence=bundle.incidence[p],
        mass=bundle.masses[p],
        mass_next=bundle.masses[p + 1],
        conjugation=bundle.conjugation[p],
        conjugation_next=bundle.conjugation[p + 1],
        rank=coexact_rank(bundle, p),
        lumped=bundle.lumped,
    )


# ============ Spectra ============

def coexact_spectrum(
    bundle: OperatorBundle,
    p: int,
    k: int,
    tol: float = SOLVER_TOLERANCE,
    dense_threshold: int = DENSE_THRESHOLD,
    seed: int = DEFAULT_SEED,
    method: Optional[str] = None,
) -> SpectrumResult:
    """The k smallest coexact eigenvalues mu_{p,1..k} with eigencochains"""
    n = bundle.dimension
    if not 0 <= p <= n:
        raise SpectrumRequestError(f"Degree {p} outside 0..{n}")
    if k < 1:
        raise SpectrumRequestError(f"Need k >= 1, got {k}")
    rank = coexact_rank(bundle, p)
    if k > rank:
        raise SpectrumRequestError(f"Requested {k} coexact eigenvalues in degree {p}; only {rank} exist")

    pencil = _pencil(bundle, p)
    solver = get_eigensolver(pencil, method=method, dense_threshold=dense_threshold, tol=tol, seed=seed)
    values, vectors = solver.solve(pencil, k)
    order = np.argsort(values)
    values, vectors = values[order], vectors[:, order]

    residuals = pencil_residuals(pencil.stiffness(), bundle.masses[p], values, vectors)
    worst = float(residuals.max())
    if worst > tol:
        raise SolverConvergenceError(
            f"Coexact residual {worst:.2e} above tolerance {tol:.1e} in degree {p} ({solver.method.value})",
            best_residual=worst,
        )
    logger.info(f"[SPECTRUM] p={p} coexact[:3]={np.round(values[:3], 8).tolist()} via {solver.method.value}")
    return SpectrumResult(
        degree=p,
        harmonic_dimension=harmonic_dimension(bundle, p),
        coexact=values.tolist(),
        coexact_residuals=residuals.tolist(),
        coexact_vectors=vectors,
        mass=bundle.masses[p],
        tolerance=tol,
        method=solver.method,
        metadata={"kernel_dimension": pencil.kernel_dimension, "gauge": bundle.gauge.value},
    )


def _down_laplacian(bundle: OperatorBundle, p: int):
    """M_p D_{p-1} M_{p-1}^{-1} D_{p-1}^T M_p, explicit when masses are lumped"""
    D, M, M_low = bundle.coboundaries[p - 1], bundle.masses[p], bundle.masses[p - 1]
    if bundle.lumped:
        return (M @ D @ sp.diags(1.0 / M_low.diagonal()) @ D.T @ M).tocsr()
    lu = splu(sp.csc_matrix(M_low))

    def matvec(x):
        return M @ (D @ lu.solve(np.asarray(D.T @ (M @ x))))

    return LinearOperator(M.shape, matvec=matvec, rmatvec=matvec, dtype=float)


def full_hodge_spectrum(
    bundle: OperatorBundle,
    p: int,
    k: int,
    tol: float = SOLVER_TOLERANCE,
    dense_threshold: int = DENSE_THRESHOLD,
    seed: int = DEFAULT_SEED,
) -> SpectrumResult:
    """
    Harmonic dimension plus the lowest k exact and k coexact eigenvalues at degree p.

    The exact eigencochains D_{p-1} theta come from the coexact problem at
    p-1; their eigenvalues are recomputed as Rayleigh quotients of the down
    Laplacian at p so the pairing is checked, not assumed.
    """
    n = bundle.dimension
    if not 0 <= p <= n:
        raise SpectrumRequestError(f"Degree {p} outside 0..{n}")
    measured = measured_harmonic_dimension(bundle, p)
    result = SpectrumResult(degree=p, mass=bundle.masses[p], tolerance=tol,
                            harmonic_dimension=harmonic_dimension(bundle, p) if measured is None else measured)
    result.metadata["harmonic_measured"] = measured is not None

    rank_up = coexact_rank(bundle, p)
    if p < n and rank_up > 0:
        up = coexact_spectrum(bundle, p, min(k, rank_up), tol, dense_threshold, seed)
        result.coexact = up.coexact
        result.coexact_residuals = up.coexact_residuals
        result.coexact_vectors = up.coexact_vectors
        result.method = up.method

    rank_down = coexact_rank(bundle, p - 1)
    if p >= 1 and rank_down > 0:
        low = coexact_spectrum(bundle, p - 1, min(k, rank_down), tol, dense_threshold, seed)
        M = bundle.masses[p]
        omega = bundle.coboundaries[p - 1] @ low.coexact_vectors
        omega = omega / np.sqrt(np.einsum("ij,ij->j", omega, M @ omega))
        L = _down_laplacian(bundle, p)
        rayleigh = np.einsum("ij,ij->j", omega, L @ omega)
        paired = np.asarray(low.coexact)
        deviation = float(np.max(np.abs(rayleigh - paired) / paired))
        if deviation > max(EIGEN_ASSERT_TOL, 100 * tol):
            raise SolverConvergenceError(
                f"Exact part at p={p} deviates from coexact part at p={p - 1} by {deviation:.2e}",
                best_residual=deviation,
            )
        residuals = pencil_residuals(L, M, rayleigh, omega)
        if residuals.max() > tol:
            raise SolverConvergenceError(
                f"Exact residual {residuals.max():.2e} above tolerance {tol:.1e} at p={p}",
                best_residual=float(residuals.max()),
            )
        result.exact = rayleigh.tolist()
        result.exact_residuals = residuals.tolist()
        result.exact_vectors = omega
        result.metadata["pairing_deviation"] = deviation
        if not result.coexact:
            result.method = low.method

    result.metadata["gauge"] = bundle.gauge.value
    return result


def minmax_bruteforce(bundle: OperatorBundle, p: int, i: int) -> float:
    """
    mu_{p,i} as the i-th min-max value of the quotient ||omega||^2 / ||omega||_*^2
    over exact (p+1)-cochains, where ||omega||_* is the least mass norm of a primitive.
    """
    n_p = bundle.counts[p]
    n_next = bundle.counts[p + 1] if p < bundle.dimension else 0
    if n_p > MINMAX_LIMIT or n_next > MINMAX_LIMIT:
        raise SpectrumRequestError(f"Brute-force min-max limited to {MINMAX_LIMIT} unknowns per degree")
    rank = coexact_rank(bundle, p)
    if not 1 <= i <= rank:
        raise SpectrumRequestError(f"Index {i} outside 1..{rank} (dimension of exact (p+1)-cochains)")

    D = bundle.coboundaries[p].toarray()
    M = bundle.masses[p].toarray()
    W = bundle.masses[p + 1].toarray()
    E = la.svd(D, full_matrices=False)[0][:, :rank]
    primitive_gram = E.T @ D @ la.solve(M, D.T @ E, assume_a="pos")
    norm_form = la.inv(0.5 * (primitive_gram + primitive_gram.T))
    values = la.eigh(E.T @ W @ E, 0.5 * (norm_form + norm_form.T), eigvals_only=True)
    return float(values[i - 1])


# ============ Primitives & Representatives ============

def _normal_solve(S, b: np.ndarray, dense: bool) -> np.ndarray:
    if dense:
        S = S.toarray() if sp.issparse(S) else S
        return la.lstsq(S, b)[0]
    x, info = minres(S, b, rtol=1e-13, maxiter=20 * S.shape[0])
    if info > 0:
        logger.warning(f"[PRIMITIVE] minres stopped after {info} iterations")
    return x


def min_norm_primitive(bundle: OperatorBundle, p: int, omega: Sequence[float]) -> np.ndarray:
    """The primitive of an exact (p+1)-cochain with least M_p norm"""
    omega = np.asarray(omega, dtype=float)
    D, M = bundle.coboundaries[p], bundle.masses[p]
    if omega.shape != (D.shape[0],):
        raise SpectrumRequestError(f"Cochain of shape {omega.shape} is not a {p + 1}-cochain")
    scale = np.linalg.norm(omega)
    if scale == 0.0:
        return np.zeros(D.shape[1])

    dense = max(D.shape) <= DENSE_THRESHOLD
    if bundle.lumped:
        S = (D @ sp.diags(1.0 / M.diagonal()) @ D.T).tocsr()
    elif dense:
        S = D.toarray() @ la.solve(M.toarray(), D.T.toarray(), assume_a="pos")
    else:
        raise SpectrumRequestError("Sparse primitives need lumped masses")
    y = _normal_solve(S, omega, dense)
    theta = _mass_solve(M, np.asarray(D.T @ y))

    distance = float(np.linalg.norm(D @ theta - omega) / scale)
    if distance > EIGEN_ASSERT_TOL:
        raise NotExactError(distance=distance)
    return theta


def harmonic_representative(bundle: OperatorBundle, p: int, z: Sequence[float]) -> np.ndarray:
    """The cocycle of least M_p norm in the cohomology class of z"""
    z = np.asarray(z, dtype=float)
    if z.shape != (bundle.counts[p],):
        raise SpectrumRequestError(f"Cochain of shape {z.shape} is not a {p}-cochain")
    if p < bundle.dimension:
        D = bundle.coboundaries[p]
        closure = np.linalg.norm(D @ z)
        if closure > EIGEN_ASSERT_TOL * max(1.0, sparse_norm(D, 1) * np.linalg.norm(z)):
            raise NotClosedError(f"Cochain is not closed in degree {p}: |Dz| = {closure:.3e}")
    if p == 0:
        return z.copy()

    D, M = bundle.coboundaries[p - 1], bundle.masses[p]
    normal = up_stiffness(D, M)
    theta = _normal_solve(normal, np.asarray(D.T @ (M @ z)), max(D.shape) <= DENSE_THRESHOLD)
    return z - D @ theta


# ============ Domains ============

def restrict_bundle(bundle: OperatorBundle, keep: List[np.ndarray]) -> OperatorBundle:
    """Cochains supported on the kept cells of every degree"""
    idx = [np.flatnonzero(k) if k.dtype == bool else np.asarray(k) for k in keep]
    n = bundle.dimension

    def sub(A, rows, cols):
        return sp.csr_matrix(A)[rows][:, cols].tocsr()

    incidence = [sub(bundle.incidence[p], idx[p + 1], idx[p]) for p in range(n)]
    coboundaries = [sub(bundle.coboundaries[p], idx[p + 1], idx[p]) for p in range(n)]
    incidence.append(sp.csr_matrix((0, len(idx[n])), dtype=np.int64))
    coboundaries.append(sp.csr_matrix((0, len(idx[n]))))
    return OperatorBundle(
        complex=None,
        gauge=bundle.gauge,
        scheme=bundle.scheme,
        incidence=incidence,
        coboundaries=coboundaries,
        masses=[sub(bundle.masses[p], idx[p], idx[p]) for p in range(n + 1)],
        conjugation=[bundle.conjugation[p][idx[p]] for p in range(n + 1)],
    )


def domain_bundle(
    complex: CellComplex,
    domain: DomainTag,
    bc: BoundaryCondition,
    geometry: Geometry,
    weight: WeightField,
    gauge: Gauge = Gauge.WEIGHTED,
    scheme: MassScheme = MassScheme.LUMPED,
) -> OperatorBundle:
    bc = BoundaryCondition(bc)
    if bc == BoundaryCondition.DIRICHLET and weight.max_abs() > 0.0:
        raise DomainError("Dirichlet domain spectra are only defined for phi = 0")
    sub = subcomplex(complex, domain)
    keep = domain.inside
    geometry_u = Geometry(
        dimension=geometry.dimension,
        volumes=sub.volumes,
        shares=sub.shares,
        u=[u[k] for u, k in zip(geometry.u, keep)],
    )
    weight_u = WeightField(samples=[s[k] for s, k in zip(weight.samples, keep)])
    bundle = build_bundle(sub, geometry_u, weight_u, gauge, scheme)
    if bc == BoundaryCondition.ABSOLUTE:
        return bundle
    interior = [~f[k] for f, k in zip(domain.interface, keep)]
    return restrict_bundle(bundle, interior)


def domain_spectrum(
    complex: CellComplex,
    domain: DomainTag,
    bc: BoundaryCondition,
    geometry: Geometry,
    weight: WeightField,
    p: int,
    k: int,
    gauge: Gauge = Gauge.WEIGHTED,
    scheme: MassScheme = MassScheme.LUMPED,
    tol: float = SOLVER_TOLERANCE,
    dense_threshold: int = DENSE_THRESHOLD,
) -> SpectrumResult:
    """
    Spectrum of the full subcomplex U under a boundary condition.

    absolute   natural condition, every cochain of U
    relative   cochains vanishing on interface cells
    dirichlet  full Hodge spectrum with the relative constraint in all degrees, phi = 0
    """
    bc = BoundaryCondition(bc)
    bundle = domain_bundle(complex, domain, bc, geometry, weight, gauge, scheme)
    if bc == BoundaryCondition.DIRICHLET:
        result = full_hodge_spectrum(bundle, p, k, tol, dense_threshold)
    else:
        result = coexact_spectrum(bundle, p, k, tol, dense_threshold)
    result.metadata["boundary_condition"] = bc.value
    return result


# ============ Comparisons ============

def _clusters(values: np.ndarray, rtol: float) -> List[np.ndarray]:
    groups, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[i - 1] > rtol * max(abs(values[i]), 1e-300):
            groups.append(np.arange(start, i))
            start = i
    return groups


def compare_spectra(a: Sequence[float], b: Sequence[float], rtol: float = CLUSTER_GAP_RTOL) -> float:
    """
    Maximum relative deviation between two sorted spectra, matched as multisets.

    A trailing cluster that is cut by the shorter list is dropped, so a
    truncated multiplicity does not pair with the next eigenvalue.
    """
    a, b = np.sort(np.asarray(a, dtype=float)), np.sort(np.asarray(b, dtype=float))
    m = min(len(a), len(b))
    if len(a) != len(b):
        longer = a if len(a) > len(b) else b
        cut = [g for g in _clusters(longer, rtol) if g[0] < m <= g[-1]]
        if cut:
            m = int(cut[0][0])
    if m == 0:
        return 0.0
    scale = np.maximum(np.abs(a[:m]), 1e-300)
    return float(np.max(np.abs(a[:m] - b[:m]) / scale))


def extend_by_zero(result: SpectrumResult, cells: np.ndarray, size: int, mass=None) -> SpectrumResult:
    """Embed eigencochains of a subdomain into the cochains of the parent complex"""
    embedded = result.model_copy()
    for name in ("coexact_vectors", "exact_vectors"):
        X = getattr(result, name)
        if X is not None:
            full = np.zeros((size, X.shape[1]))
            full[cells] = X
            setattr(embedded, name, full)
    if mass is not None:
        embedded.mass = mass
    return embedded


def spectral_distance(result_a: SpectrumResult, result_b: SpectrumResult, cfg: GapConfig) -> float:
    """
    N-spectral-gap distance: max of the relative deviation of the first N
    eigenvalues and the sine of the largest principal angle between the two
    N-dimensional eigenspaces, in the mass metric of result_a.
    """
    N = cfg.n
    lam_a, lam_b = np.asarray(result_a.coexact), np.asarray(result_b.coexact)
    if len(lam_a) < N + 1 or len(lam_b) < N:
        raise SpectrumRequestError(f"Spectral distance needs {N + 1} eigenvalues, got {len(lam_a)} and {len(lam_b)}")
    if lam_a[N] - lam_a[N - 1] < cfg.eta:
        raise GapHypothesisError(
            "lambda_{N+1} - lambda_N >= eta", lhs=float(lam_a[N] - lam_a[N - 1]), rhs=cfg.eta
        )
    if lam_a[N] > cfg.m_bound:
        raise GapHypothesisError("lambda_{N+1} <= M", lhs=float(lam_a[N]), rhs=cfg.m_bound)

    deviation = float(np.max(np.abs(lam_b[:N] - lam_a[:N]) / lam_a[:N]))
    Xa, Xb = result_a.coexact_vectors, result_b.coexact_vectors
    if Xa is None or Xb is None:
        raise SpectrumRequestError("Spectral distance needs eigencochains")
    if Xa.shape[0] != Xb.shape[0]:
        raise SpectrumRequestError("Eigencochains live on different cochain spaces; extend them first")
    M = result_a.mass

    def orthonormal(X):
        G = X.T @ (M @ X)
        L = np.linalg.cholesky(0.5 * (G + G.T))
        return la.solve_triangular(L, X.T, lower=True).T

    Qa, Qb = orthonormal(Xa[:, :N]), orthonormal(Xb[:, :N])
    cosines = la.svdvals(Qa.T @ (M @ Qb))
    sine = float(np.sqrt(max(0.0, 1.0 - min(1.0, cosines.min()) ** 2)))
    return max(deviation, sine)
