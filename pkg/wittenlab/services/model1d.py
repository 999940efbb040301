"""
Continuum oracles on the circle, the interval and the flat 2-torus.

  circle_witten_spectrum    4th-order finite differences, Richardson over n and 2n
  interval_witten_spectrum  weighted finite volumes (absolute) or Dirichlet ends (relative)
  assemble_three_forms      the direct twisted Laplacian against the Lie-derivative and
                            curvature-type expressions on periodic grids
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import sympy

from errors import ManifestError, SolverConvergenceError, SpectrumRequestError
from models.types import (
    BoundaryCondition,
    CircleSpectrum,
    FactorKind,
    Grid1D,
    ProductGrid2D,
    ThreeFormsReport,
    TwistField,
)
from services.fields import derivative, parse_field, sample

logger = logging.getLogger(__name__)

RICHARDSON_DRIFT = 0.01


# ============ Grids ============

def circle_grid(nodes: int, length: float = 2.0 * np.pi, expression: Optional[str] = None) -> Grid1D:
    """Periodic grid x_i = i h, phi and its derivatives sampled symbolically"""
    x = np.arange(nodes) * (length / nodes)
    return _grid(FactorKind.CIRCLE, nodes, length, x, expression)


def interval_grid(cells: int, start: float, stop: float, expression: Optional[str] = None) -> Grid1D:
    x = np.linspace(start, stop, cells + 1)
    return _grid(FactorKind.INTERVAL, cells + 1, stop - start, x, expression)


def _grid(kind: FactorKind, nodes: int, length: float, x: np.ndarray, expression: Optional[str]) -> Grid1D:
    expr = parse_field(expression) if expression else sympy.Integer(0)
    return Grid1D(
        kind=kind,
        nodes=nodes,
        length=length,
        x=x,
        phi=sample(expr, x),
        dphi=sample(derivative(expr), x),
        ddphi=sample(derivative(expr, order=2), x),
        expression=expression,
    )


def refine(grid: Grid1D) -> Grid1D:
    """Same field on a grid with half the spacing"""
    if grid.kind == FactorKind.CIRCLE:
        return circle_grid(2 * grid.nodes, grid.length, grid.expression)
    return interval_grid(2 * (grid.nodes - 1), grid.x[0], grid.x[-1], grid.expression)


def periodic_derivative(nodes: int, h: float, order: int = 1) -> sp.csr_matrix:
    """4th-order central difference on a periodic grid"""
    if order == 1:
        offsets, weights = [-2, -1, 1, 2], np.array([1.0, -8.0, 8.0, -1.0]) / (12.0 * h)
    else:
        offsets, weights = [-2, -1, 0, 1, 2], np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
    rows, cols, vals = [], [], []
    idx = np.arange(nodes)
    for off, w in zip(offsets, weights):
        rows.append(idx)
        cols.append((idx + off) % nodes)
        vals.append(np.full(nodes, w))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nodes, nodes))


def _richardson(coarse: np.ndarray, fine: np.ndarray, order: int) -> Tuple[np.ndarray, float]:
    factor = 2.0 ** order
    extrapolated = (factor * fine - coarse) / (factor - 1.0)
    drift = float(np.max(np.abs(fine - coarse) / np.maximum(np.abs(fine), 1.0)))
    if drift > RICHARDSON_DRIFT:
        raise SolverConvergenceError(
            f"Richardson consistency check failed: drift {drift:.2%} between grids", best_residual=drift
        )
    return extrapolated, drift


# ============ Circle ============

def _circle_operators(grid: Grid1D) -> Tuple[np.ndarray, np.ndarray]:
    D2 = periodic_derivative(grid.nodes, grid.spacing, order=2).toarray()
    functions = -D2 + np.diag(grid.dphi ** 2 - grid.ddphi)
    one_forms = -D2 + np.diag(grid.dphi ** 2 + grid.ddphi)
    return functions, one_forms


def circle_witten_spectrum(grid: Grid1D, k: int) -> CircleSpectrum:
    """Lowest k eigenvalues on functions and on 1-forms, ground state included"""
    if grid.kind != FactorKind.CIRCLE:
        raise SpectrumRequestError("circle_witten_spectrum needs a circle grid")
    if not 1 <= k < grid.nodes // 4:
        raise SpectrumRequestError(f"k={k} must be below nodes/4 = {grid.nodes // 4}")
    fine_grid = refine(grid)

    levels = []
    for g in (grid, fine_grid):
        functions, one_forms = _circle_operators(g)
        f_vals, f_vecs = la.eigh(functions, subset_by_index=[0, k - 1])
        w_vals = la.eigh(one_forms, eigvals_only=True, subset_by_index=[0, k - 1])
        levels.append((f_vals, w_vals, f_vecs[:, 0]))

    functions, drift_f = _richardson(levels[0][0], levels[1][0], order=4)
    one_forms, drift_w = _richardson(levels[0][1], levels[1][1], order=4)
    ground = np.exp(-fine_grid.phi)
    cosine = abs(ground @ levels[1][2]) / (np.linalg.norm(ground) * np.linalg.norm(levels[1][2]))
    angle = float(np.arccos(min(1.0, cosine)))
    logger.info(f"[CIRCLE] n={grid.nodes} functions={np.round(functions[:5], 6).tolist()} angle={angle:.2e}")
    return CircleSpectrum(
        functions=functions.tolist(),
        functions_coarse=levels[0][0].tolist(),
        functions_fine=levels[1][0].tolist(),
        one_forms=one_forms.tolist(),
        ground_state_angle=angle,
        drift=max(drift_f, drift_w),
    )


# ============ Interval ============

def _interval_tridiagonal(grid: Grid1D, bc: BoundaryCondition) -> Tuple[np.ndarray, np.ndarray]:
    """
    Symmetrized finite-volume pencil for f -> -e^{2 phi} (e^{-2 phi} f')'.

    Node masses e^{-2 phi_i} h (halved at the ends), edge weights e^{-2 phi} at
    midpoints; scaling by the square root of the masses is done in log space.
    """
    h = grid.spacing
    phi = grid.phi
    mid = 0.5 * (grid.x[1:] + grid.x[:-1])
    phi_mid = sample(parse_field(grid.expression), mid) if grid.expression else np.zeros(len(mid))
    log_mass = -2.0 * phi + np.log(h)
    log_mass[[0, -1]] += np.log(0.5)
    log_edge = -2.0 * phi_mid - np.log(h)

    diag = np.zeros(grid.nodes)
    diag[:-1] += np.exp(log_edge - log_mass[:-1])
    diag[1:] += np.exp(log_edge - log_mass[1:])
    off = -np.exp(log_edge - 0.5 * (log_mass[:-1] + log_mass[1:]))
    if bc == BoundaryCondition.RELATIVE:
        return diag[1:-1], off[1:-1]
    return diag, off


def interval_witten_spectrum(grid: Grid1D, bc: BoundaryCondition, k: int) -> List[float]:
    """Lowest k function eigenvalues of the Witten Laplacian on an interval, Richardson-extrapolated"""
    bc = BoundaryCondition(bc)
    if grid.kind != FactorKind.INTERVAL:
        raise SpectrumRequestError("interval_witten_spectrum needs an interval grid")
    if bc == BoundaryCondition.DIRICHLET:
        raise SpectrumRequestError("Interval spectra support absolute and relative conditions")
    unknowns = grid.nodes - (2 if bc == BoundaryCondition.RELATIVE else 0)
    if not 1 <= k <= unknowns // 4:
        raise SpectrumRequestError(f"k={k} too large for {unknowns} unknowns")

    levels = []
    for g in (grid, refine(grid)):
        d, e = _interval_tridiagonal(g, bc)
        levels.append(la.eigh_tridiagonal(d, e, eigvals_only=True, select="i", select_range=(0, k - 1)))
    values, _ = _richardson(levels[0], levels[1], order=2)
    return values.tolist()


# ============ Three Forms ============

def twist_from_potential(grid, expression: str) -> TwistField:
    """Gradient twist X = grad phi; the direct assembly then conjugates by e^{phi}"""
    expr = parse_field(expression)
    coords, dim = _coordinates(grid)
    return TwistField(
        dimension=dim,
        components=[sample(derivative(expr, a), coords) for a in range(dim)],
        gradient=True,
        potential=sample(expr, coords),
    )


def twist_from_components(grid, expressions: Sequence[str]) -> TwistField:
    coords, dim = _coordinates(grid)
    if len(expressions) != dim:
        raise ManifestError(f"Twist on a {dim}D grid needs {dim} components, got {len(expressions)}")
    exprs = [parse_field(e) for e in expressions]
    curl = None
    if dim == 2:
        curl = sample(derivative(exprs[1], 0) - derivative(exprs[0], 1), coords)
    return TwistField(
        dimension=dim,
        components=[sample(e, coords) for e in exprs],
        gradient=False,
        exact_curl=curl,
    )


def _coordinates(grid) -> Tuple[np.ndarray, int]:
    if isinstance(grid, ProductGrid2D):
        X, Y = np.meshgrid(grid.x.x, grid.y.x, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()]), 2
    if grid.kind != FactorKind.CIRCLE:
        raise ManifestError("Three-form assembly needs periodic grids")
    return grid.x[:, None], 1


def _derivatives(grid) -> List[sp.csr_matrix]:
    if isinstance(grid, ProductGrid2D):
        Dx = periodic_derivative(grid.x.nodes, grid.x.spacing)
        Dy = periodic_derivative(grid.y.nodes, grid.y.spacing)
        return [
            sp.kron(Dx, sp.identity(grid.y.nodes), format="csr"),
            sp.kron(sp.identity(grid.x.nodes), Dy, format="csr"),
        ]
    return [periodic_derivative(grid.nodes, grid.spacing)]


def _exterior(partials: List[sp.csr_matrix]) -> List[sp.csr_matrix]:
    """d on 0-forms and, in 2D, on 1-forms (a dx + b dy -> (b_x - a_y) dx^dy)"""
    if len(partials) == 1:
        return [partials[0]]
    Dx, Dy = partials
    return [sp.vstack([Dx, Dy], format="csr"), sp.hstack([-Dy, Dx], format="csr")]


def _wedge(components: List[np.ndarray]) -> List[sp.csr_matrix]:
    """X-flat wedge on 0-forms and, in 2D, on 1-forms"""
    if len(components) == 1:
        return [sp.diags(components[0], format="csr")]
    X1, X2 = (sp.diags(c) for c in components)
    return [sp.vstack([X1, X2], format="csr"), sp.hstack([-X2, X1], format="csr")]


def _laplacian(ops: List[sp.csr_matrix], p: int, sizes: List[int]) -> sp.csr_matrix:
    L = sp.csr_matrix((sizes[p], sizes[p]))
    if p < len(ops):
        L = L + ops[p].T @ ops[p]
    if p >= 1:
        L = L + ops[p - 1] @ ops[p - 1].T
    return L.tocsr()


def _lie_derivative(partials, components, p: int) -> sp.csr_matrix:
    """L_X on p-forms from the coordinate formula"""
    dim = len(partials)
    transport = sum(sp.diags(components[j]) @ partials[j] for j in range(dim))
    grad_X = [[sp.diags(partials[i] @ components[j]) for j in range(dim)] for i in range(dim)]
    if p == 0:
        return transport.tocsr()
    if p == dim:
        divergence = sum(grad_X[j][j] for j in range(dim))
        return (transport + divergence).tocsr()
    # 1-forms in 2D: (L_X w)_i = X^j d_j w_i + w_j d_i X^j
    blocks = [[transport + grad_X[0][0], grad_X[0][1]], [grad_X[1][0], transport + grad_X[1][1]]]
    return sp.bmat(blocks, format="csr")


def _symmetric_gradient(partials, components, p: int) -> sp.csr_matrix:
    """(X-flat covariant derivative, symmetrized) extended to p-forms as a derivation"""
    dim = len(partials)
    N = partials[0].shape[0]
    S = [[0.5 * (partials[i] @ components[j] + partials[j] @ components[i]) for j in range(dim)] for i in range(dim)]
    if p == 0:
        return sp.csr_matrix((N, N))
    if p == dim:
        return sp.diags(sum(S[i][i] for i in range(dim)), format="csr")
    return sp.bmat([[sp.diags(S[i][j]) for j in range(dim)] for i in range(dim)], format="csr")


def _test_forms(grid, p: int) -> np.ndarray:
    coords, dim = _coordinates(grid)
    x = coords[:, 0]
    y = coords[:, 1] if dim == 2 else np.zeros_like(x)
    base = [np.exp(np.sin(x) + 0.5 * np.cos(y)), np.cos(x) * np.sin(2.0 * y) + np.sin(x + y) + 0.3]
    components = 1 if p in (0, dim) else dim
    return np.column_stack([np.concatenate([b * (1.0 + 0.25 * c) for c in range(components)]) for b in base])


def assemble_three_forms(grid, twist: TwistField, p: int, hess_coefficient: float = 2.0) -> ThreeFormsReport:
    """
    (a) D~^T D~ + D~ D~^T with D~ = D + X-flat wedge (e^{-phi} D e^{phi} for gradient twists)
    (b) Delta + |X|^2 + L_X + L_X^T
    (c) Delta + |X|^2 - div X + c S_p, S the symmetric gradient of X-flat as a derivation
    """
    coords, dim = _coordinates(grid)
    if twist.dimension != dim or any(len(c) != coords.shape[0] for c in twist.components):
        raise ManifestError("Twist field does not match the grid")
    if not 0 <= p <= dim:
        raise SpectrumRequestError(f"Degree {p} outside 0..{dim}")

    N = coords.shape[0]
    sizes = [N, 2 * N, N] if dim == 2 else [N, N]
    partials = _derivatives(grid)
    D = _exterior(partials)
    wedge = _wedge(twist.components)
    if twist.gradient:
        conj = [np.tile(np.exp(twist.potential), s // N) for s in sizes]
        twisted = [sp.diags(1.0 / conj[q + 1]) @ D[q] @ sp.diags(conj[q]) for q in range(dim)]
    else:
        twisted = [D[q] + wedge[q] for q in range(dim)]

    direct = _laplacian(twisted, p, sizes)
    hodge = _laplacian(D, p, sizes)
    norm_sq = sp.diags(np.tile(sum(c ** 2 for c in twist.components), sizes[p] // N))
    L = _lie_derivative(partials, twist.components, p)
    lie = (hodge + norm_sq + L + L.T).tocsr()
    divergence = sum(partials[j] @ twist.components[j] for j in range(dim))
    curvature = (
        hodge + norm_sq - sp.diags(np.tile(divergence, sizes[p] // N))
        + hess_coefficient * _symmetric_gradient(partials, twist.components, p)
    ).tocsr()

    F = _test_forms(grid, p)

    def diff(A, B):
        return float(np.max(np.abs((A - B) @ F)))

    report = ThreeFormsReport(
        degree=p,
        direct=direct,
        lie=lie,
        curvature=curvature,
        diff_direct_lie=diff(direct, lie),
        diff_direct_curvature=diff(direct, curvature),
        diff_lie_curvature=diff(lie, curvature),
        hess_coefficient=hess_coefficient,
    )
    logger.info(f"[THREE-FORMS] p={p} |a-b|={report.diff_direct_lie:.2e} |a-c|={report.diff_direct_curvature:.2e}")
    return report


def twisted_square_on_constant(grid, twist: TwistField) -> np.ndarray:
    """d~_X d~_X applied to the constant function; multiplication by dX-flat for general X"""
    _, dim = _coordinates(grid)
    if dim != 2:
        raise SpectrumRequestError("d~ o d~ is only nontrivial on 2D grids")
    partials = _derivatives(grid)
    D, wedge = _exterior(partials), _wedge(twist.components)
    N = partials[0].shape[0]
    if twist.gradient:
        conj = np.exp(twist.potential)
        first = sp.diags(1.0 / np.tile(conj, 2)) @ D[0] @ sp.diags(conj)
        second = sp.diags(1.0 / conj) @ D[1] @ sp.diags(np.tile(conj, 2))
    else:
        first, second = D[0] + wedge[0], D[1] + wedge[1]
    return second @ (first @ np.ones(N))


def product_grid_2d(nx: int, ny: int, lx: float = 2.0 * np.pi, ly: float = 2.0 * np.pi) -> ProductGrid2D:
    return ProductGrid2D(x=circle_grid(nx, lx), y=circle_grid(ny, ly))
