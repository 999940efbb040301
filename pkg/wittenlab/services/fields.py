"""
Field Service - symbolic expressions over coordinates.

Manifest fields are sympy expressions in x, y, z restricted to arithmetic,
trigonometric, hyperbolic, exp, log and sqrt. Derivatives are symbolic.
"""
import logging
from typing import Callable, Dict, Optional, Sequence

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from errors import ManifestError

logger = logging.getLogger(__name__)

COORDINATES = sympy.symbols("x y z", real=True)

ALLOWED_FUNCTIONS: Dict[str, object] = {
    "sin": sympy.sin,
    "cos": sympy.cos,
    "tan": sympy.tan,
    "sinh": sympy.sinh,
    "cosh": sympy.cosh,
    "tanh": sympy.tanh,
    "exp": sympy.exp,
    "log": sympy.log,
    "sqrt": sympy.sqrt,
    "abs": sympy.Abs,
    "pi": sympy.pi,
}


def parse_field(expression: str) -> sympy.Expr:
    """Parse a field expression, rejecting unknown names"""
    local = {str(s): s for s in COORDINATES}
    local.update(ALLOWED_FUNCTIONS)
    constructors = {
        "__builtins__": {},
        "Integer": sympy.Integer,
        "Float": sympy.Float,
        "Rational": sympy.Rational,
        "Symbol": sympy.Symbol,
    }
    try:
        expr = parse_expr(expression, local_dict=local, global_dict=constructors,
                          transformations=standard_transformations)
    except Exception as e:
        raise ManifestError(f"Cannot parse field '{expression}': {e}")

    unknown = expr.free_symbols - set(COORDINATES)
    if unknown:
        raise ManifestError(f"Field '{expression}' uses unknown symbols {sorted(map(str, unknown))}")
    allowed = {f for f in ALLOWED_FUNCTIONS.values() if isinstance(f, sympy.FunctionClass)}
    for fn in expr.atoms(sympy.Function):
        if fn.func not in allowed:
            raise ManifestError(f"Function {fn.func} not allowed in field '{expression}'")
    return expr


def sample(expr: sympy.Expr, coords: np.ndarray) -> np.ndarray:
    """Evaluate an expression on rows of coordinates"""
    coords = np.asarray(coords, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    dim = coords.shape[1]
    missing = expr.free_symbols - set(COORDINATES[:dim])
    if missing:
        raise ManifestError(f"Expression {expr} uses {sorted(map(str, missing))}, not defined in {dim}D")
    try:
        fn = sympy.lambdify(COORDINATES[:dim], expr, modules="numpy")
        values = fn(*[coords[:, i] for i in range(dim)])
        return np.broadcast_to(np.asarray(values, dtype=float), (coords.shape[0],)).copy()
    except Exception as e:
        raise ManifestError(f"Cannot evaluate expression {expr} in {dim}D: {e}")


def sample_field(expression: Optional[str], coords: np.ndarray) -> np.ndarray:
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if expression is None:
        return np.zeros(n)
    return sample(parse_field(expression), coords.reshape(n, -1))


def predicate(expression: str) -> Callable[[np.ndarray], np.ndarray]:
    """Boolean selector on coordinate rows, e.g. "abs(z) < 0.3" """
    expr = parse_field(expression)
    if not isinstance(expr, sympy.logic.boolalg.Boolean):
        raise ManifestError(f"Domain predicate '{expression}' is not a comparison")

    def select(coords: np.ndarray) -> np.ndarray:
        return sample(expr, coords) > 0.5

    return select


def derivative(expr: sympy.Expr, axis: int = 0, order: int = 1) -> sympy.Expr:
    return sympy.diff(expr, COORDINATES[axis], order)


def gradient(expr: sympy.Expr, dimension: int) -> Sequence[sympy.Expr]:
    return [derivative(expr, axis) for axis in range(dimension)]


def random_field(coords: np.ndarray, rng: np.random.Generator, amplitude: float = 1.0, modes: int = 3,
                 periods: Optional[np.ndarray] = None) -> np.ndarray:
    """Smooth random vertex field: a few random plane waves, periodic where periods are given"""
    coords = np.asarray(coords, dtype=float)
    n, dim = coords.shape
    values = np.zeros(n)
    for _ in range(modes):
        if periods is not None:
            freq = rng.integers(-2, 3, size=dim) * 2.0 * np.pi / np.where(periods > 0, periods, 1.0)
        else:
            freq = rng.normal(size=dim)
        values += rng.normal() * np.cos(coords @ freq + rng.uniform(0.0, 2.0 * np.pi))
    peak = np.max(np.abs(values))
    return amplitude * values / peak if peak > 0 else values
