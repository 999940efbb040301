"""
Mesh generators for the standard test surfaces and graphs.
"""
import logging
from typing import Tuple

import numpy as np
from scipy.spatial import Delaunay

from errors import ManifestError
from models.types import SimplicialComplex
from services.complex import build_simplicial

logger = logging.getLogger(__name__)


def _icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=float)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    return verts / np.linalg.norm(verts, axis=1, keepdims=True), faces


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> SimplicialComplex:
    """Unit sphere from a subdivided icosahedron: 20 * 4^s triangles"""
    verts, faces = _icosahedron()
    verts = list(verts)
    for _ in range(subdivisions):
        midpoints = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoints:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoints[key] = len(verts) - 1
            return midpoints[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = np.array(refined)
    logger.debug(f"[MESH] icosphere s={subdivisions}: {len(faces)} triangles")
    return build_simplicial(radius * np.array(verts), faces)


def torus_mesh(nu: int, nv: int, major: float = 2.0, minor: float = 1.0) -> SimplicialComplex:
    """Triangulated torus of revolution, nu x nv quads split along one diagonal"""
    if nu < 3 or nv < 3:
        raise ManifestError("Torus mesh needs at least 3 divisions in each direction")
    u = 2.0 * np.pi * np.arange(nu) / nu
    v = 2.0 * np.pi * np.arange(nv) / nv
    U, V = np.meshgrid(u, v, indexing="ij")
    coords = np.column_stack([
        ((major + minor * np.cos(V)) * np.cos(U)).ravel(),
        ((major + minor * np.cos(V)) * np.sin(U)).ravel(),
        (minor * np.sin(V)).ravel(),
    ])

    def index(i, j):
        return (i % nu) * nv + (j % nv)

    triangles = []
    for i in range(nu):
        for j in range(nv):
            a, b, c, d = index(i, j), index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)
            triangles.extend([[a, b, c], [a, c, d]])
    return build_simplicial(coords, triangles)


def cycle_graph(n: int, radius: float = 1.0) -> SimplicialComplex:
    """Regular n-gon as a 1-dimensional complex"""
    if n < 3:
        raise ManifestError("A cycle needs at least 3 vertices")
    angle = 2.0 * np.pi * np.arange(n) / n
    coords = radius * np.column_stack([np.cos(angle), np.sin(angle)])
    return build_simplicial(coords, [[i, (i + 1) % n] for i in range(n)])


def triangle() -> SimplicialComplex:
    """A single filled triangle"""
    return build_simplicial([[0.0, 0.0], [1.0, 0.0], [0.3, 0.8]], [[0, 1, 2]])


def random_planar_complex(n_points: int, rng: np.random.Generator) -> SimplicialComplex:
    """Delaunay triangulation of jittered points in the unit square"""
    side = int(np.ceil(np.sqrt(n_points)))
    grid = np.stack(np.meshgrid(np.linspace(0, 1, side), np.linspace(0, 1, side)), -1).reshape(-1, 2)
    points = grid + rng.uniform(-0.2, 0.2, grid.shape) / side
    tri = Delaunay(points)
    e1 = points[tri.simplices[:, 1]] - points[tri.simplices[:, 0]]
    e2 = points[tri.simplices[:, 2]] - points[tri.simplices[:, 0]]
    areas = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    keep = tri.simplices[areas > 1e-8]
    used = np.unique(keep)
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return build_simplicial(points[used], remap[keep])
