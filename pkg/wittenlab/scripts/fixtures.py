"""
Small complexes and fields shared by the test scripts.
"""
import inspect
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np

from models.types import FactorKind, FactorSpec
from services.complex import build_simplicial, product_grid
from services.witten_ops import build_bundle, geometry_from_complex, weight_from_vertices


def tetrahedron_surface():
    """Boundary of a tetrahedron: a 2-sphere with 4 triangles"""
    vertices = [[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]
    return build_simplicial(vertices, [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]])


def unit_cycle(cells: int):
    """Circle of unit-length edges as a 1D tensor grid"""
    return product_grid([FactorSpec(kind=FactorKind.CIRCLE, cells=cells, length=float(cells))])


def flat_torus(cells: int = 8, length: float = 2 * np.pi):
    return product_grid([FactorSpec(kind=FactorKind.CIRCLE, cells=cells, length=length)] * 2)


def smooth_phi(complex, amplitude: float = 0.5):
    """A fixed smooth weight: a mix of sines in the vertex coordinates"""
    x = complex.vertices
    phi = np.sin(x[:, 0])
    if x.shape[1] > 1:
        phi = phi + 0.5 * np.cos(2 * x[:, 1])
    return amplitude * phi


def bundle_for(complex, phi=None, **kwargs):
    return build_bundle(complex, geometry_from_complex(complex), weight_from_vertices(complex, phi), **kwargs)


def run_all(namespace: dict) -> int:
    """Run every argument-free test_* function in a module, printing a mark per test"""
    failures = 0
    for name, fn in sorted(namespace.items()):
        if not name.startswith("test_") or not callable(fn):
            continue
        if inspect.signature(fn).parameters:
            print(f"⏭️  {name} (needs pytest fixtures)")
            continue
        try:
            fn()
            print(f"✅ {name}")
        except Exception as e:
            failures += 1
            print(f"❌ {name}: {e}")
    return failures
