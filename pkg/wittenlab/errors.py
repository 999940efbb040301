"""
Exceptions raised by wittenlab services.

Services raise; the experiment runner turns them into failed summaries.
"""


class WittenLabError(Exception):
    """Base class for every error raised by the toolkit"""


class ComplexError(WittenLabError):
    """Malformed complex or out-of-range degree"""


class GeometryError(WittenLabError):
    """Non-positive volume or mass entry"""


class FieldOverflowError(WittenLabError):
    """Weight field outside the exponential overflow guard"""


class SolverConvergenceError(WittenLabError):
    """Iterative eigensolver ran out of budget"""

    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class SpectrumRequestError(WittenLabError):
    """Too many eigenvalues requested, or a dense oracle over its size cap"""


class NotExactError(WittenLabError):
    """Cochain is not in the range of the coboundary"""

    def __init__(self, distance: float):
        super().__init__(f"Cochain is not exact: relative distance to range = {distance:.3e}")
        self.distance = distance


class NotClosedError(WittenLabError):
    """Cochain is not a cocycle"""


class GapHypothesisError(WittenLabError):
    """N-spectral-gap hypothesis does not hold"""

    def __init__(self, inequality: str, lhs: float, rhs: float):
        super().__init__(f"Gap hypothesis violated: {inequality} ({lhs:.6e} vs {rhs:.6e})")
        self.inequality = inequality


class DomainError(WittenLabError):
    """Invalid domain selection or boundary condition request"""


class ManifestError(WittenLabError):
    """Unreadable manifest, mesh file or field expression, or a parameter out of range"""
