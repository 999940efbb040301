"""
Deformation Service - collapse, smoothed collapse and puncture families.

  collapse        (eps^2 g, phi - alpha ln eps) on the complement of U
  smooth collapse (f_j^2 g, phi - alpha ln f_j) with piecewise-linear ramps f_j
  puncture        M minus a metric ball, phi flattened to phi(x) near the ball
"""
import logging
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from errors import ComplexError, DomainError, ManifestError
from models.types import (
    CellComplex,
    DeformationKind,
    DeformationParams,
    DomainTag,
    Geometry,
    WeightField,
)
from services.complex import tag_domain
from services.witten_ops import check_overflow, conformal_rescale, weight_from_vertices

logger = logging.getLogger(__name__)


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon <= 1.0:
        raise ManifestError(f"epsilon must lie in (0, 1], got {epsilon}")


def complement_mass_exponent(n: int, p: int, alpha: float) -> float:
    """Power of eps multiplying the p-form mass on the collapsed complement"""
    return n + 2.0 * alpha - 2.0 * p


def collapse_family(
    geometry: Geometry,
    weight: WeightField,
    domain: DomainTag,
    epsilon: float,
    alpha: float = 0.0,
) -> Tuple[Geometry, WeightField]:
    """u = ln eps on complement cells off the interface, 0 on the closure of U"""
    _check_epsilon(epsilon)
    log_eps = np.log(epsilon)
    u = [np.where(outside, log_eps, 0.0) for outside in domain.outside]
    new_geometry, new_weight = conformal_rescale(geometry, weight, u, alpha)
    check_overflow(new_weight)
    logger.debug(f"[COLLAPSE] eps={epsilon:g} alpha={alpha:g}")
    return new_geometry, new_weight


def domain_distance(complex: CellComplex, domain: DomainTag) -> np.ndarray:
    """Edge-length graph distance from each vertex to U, normalized to [0, 1]"""
    B1 = sp.csc_matrix(complex.boundaries[1])
    heads = B1.indices[B1.data < 0]
    tails = B1.indices[B1.data > 0]
    lengths = complex.volumes[1]
    n0 = complex.counts[0]
    graph = sp.csr_matrix((np.r_[lengths, lengths], (np.r_[heads, tails], np.r_[tails, heads])), shape=(n0, n0))
    sources = np.flatnonzero(domain.inside[0])
    dist = dijkstra(graph, directed=False, indices=sources, min_only=True)
    peak = dist[np.isfinite(dist)].max()
    if peak <= 0.0:
        raise DomainError("Complement of U has no vertex away from U")
    return np.minimum(dist / peak, 1.0)


def smoothing_factor(complex: CellComplex, domain: DomainTag, epsilon: float, j: int) -> list:
    """f_j per degree: eps + (1 - eps) max(0, 1 - j d) on cell-averaged normalized distance"""
    _check_epsilon(epsilon)
    if j < 1:
        raise ManifestError(f"Smoothing index must be >= 1, got {j}")
    d = domain_distance(complex, domain)
    cell_d = [np.asarray(A @ d) for A in complex.averaging]
    return [epsilon + (1.0 - epsilon) * np.maximum(0.0, 1.0 - j * c) for c in cell_d]


def smoothing_sequence(
    complex: CellComplex,
    geometry: Geometry,
    weight: WeightField,
    domain: DomainTag,
    epsilon: float,
    j: int,
    alpha: float = 0.0,
) -> Tuple[Geometry, WeightField]:
    """(f_j^2 g, phi - alpha ln f_j); f_j decreases in j toward the collapse factor"""
    u = [np.log(f) for f in smoothing_factor(complex, domain, epsilon, j)]
    new_geometry, new_weight = conformal_rescale(geometry, weight, u, alpha)
    check_overflow(new_weight)
    return new_geometry, new_weight


def decreases_toward(series: Sequence[float], limit: float, slack: float = 1e-9) -> bool:
    """True when series is non-increasing and stays at or above limit, both up to a relative slack"""
    values = np.asarray(series, dtype=float)
    falling = np.all(values[1:] <= values[:-1] * (1.0 + slack))
    above = np.all(values >= limit * (1.0 - slack))
    return bool(falling and above)


def puncture_family(
    complex: CellComplex,
    weight: WeightField,
    center: int,
    epsilon: float,
) -> Tuple[DomainTag, WeightField]:
    """
    Domain M minus B(x, eps) and a weight equal to phi(x) on the ball, phi
    beyond 2 eps, and linear in the distance in between.

    The ball is snapped to whole cells: every top cell with a vertex inside
    the ball is removed.
    """
    if epsilon <= 0.0:
        raise ManifestError(f"Puncture radius must be positive, got {epsilon}")
    if not 0 <= center < complex.counts[0]:
        raise ComplexError(f"Center vertex {center} out of range")
    if weight.vertex_values is None:
        raise ComplexError("Puncture needs the weight as vertex values")

    dist = complex.vertex_distances(center)
    ball = dist < epsilon
    ball[center] = True
    star = np.asarray(abs(complex.averaging[complex.dimension]) @ ball.astype(float)).ravel() > 0
    try:
        domain = tag_domain(complex, ~star)
    except DomainError as e:
        raise DomainError(f"Ball of radius {epsilon:g} around vertex {center} swallows the complex: {e}")

    phi = weight.vertex_values
    t = np.clip((dist - epsilon) / epsilon, 0.0, 1.0)
    flattened = phi[center] + t * (phi - phi[center])
    logger.info(f"[PUNCTURE] eps={epsilon:g} removed {int(star.sum())} top cells, "
                f"|phi_eps - phi|_inf={np.max(np.abs(flattened - phi)):.3e}")
    return domain, weight_from_vertices(complex, flattened)


def apply_deformation(
    complex: CellComplex,
    geometry: Geometry,
    weight: WeightField,
    domain: DomainTag,
    params: DeformationParams,
) -> Tuple[Geometry, WeightField]:
    """Dispatch a collapse-type deformation from its parameters"""
    if params.kind == DeformationKind.COLLAPSE:
        return collapse_family(geometry, weight, domain, params.epsilon, params.alpha)
    elif params.kind == DeformationKind.SMOOTH_COLLAPSE:
        if params.j is None:
            raise ManifestError("smooth-collapse needs the smoothing index j")
        return smoothing_sequence(complex, geometry, weight, domain, params.epsilon, params.j, params.alpha)
    raise ManifestError(f"Deformation {params.kind.value} does not rescale the metric; use puncture_family")
