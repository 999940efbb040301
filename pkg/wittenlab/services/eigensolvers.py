"""
Eigensolver backends for the coexact pencil (D^T M_{p+1} D, M_p).

Abstract interface with three implementations:
  DenseSVDSolver      lumped masses; singular values of M_{p+1}^{1/2} D M_p^{-1/2}
  DenseEighSolver     consistent masses; generalized symmetric eigh past the kernel
  BlockLanczosSolver  Rayleigh-Ritz on a block Krylov space of the pseudo-inverse

Residuals are ||A x - lam M x|| / ||M x|| in the Euclidean norm; Lanczos
iterates until every wanted pair is within tolerance.
"""
import logging
from abc import ABC, abstractmethod
from typing import Any, Optional, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import splu

from config import (
    DEFAULT_SEED,
    DENSE_THRESHOLD,
    LANCZOS_BLOCK_SIZE,
    LANCZOS_MAX_BASIS,
    SOLVER_TOLERANCE,
)
from errors import ComplexError, SolverConvergenceError, SpectrumRequestError
from models.types import SolverMethod
from services.cohomology import cokernel_basis, kernel_basis, is_graph_incidence, propagation_cokernel
from services.witten_ops import up_stiffness

logger = logging.getLogger(__name__)


class CoexactPencil(BaseModel):
    """Everything a backend needs to solve one degree"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    degree: int
    D: Any                 # gauge coboundary D_p
    incidence: Any         # integer D_p
    mass: Any              # M_p
    mass_next: Any         # M_{p+1}
    conjugation: np.ndarray
    conjugation_next: np.ndarray
    rank: int
    lumped: bool

    @property
    def size(self) -> int:
        return self.D.shape[1]

    @property
    def kernel_dimension(self) -> int:
        return self.size - self.rank

    def stiffness(self) -> sp.csr_matrix:
        return up_stiffness(self.D, self.mass_next)


def _diag(M) -> np.ndarray:
    return np.asarray(M.diagonal(), dtype=float)


def pencil_residuals(A, M, values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """||A x - lam M x|| / ||M x|| for each eigenpair (columns of vectors)"""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return np.zeros(0)
    MX = M @ vectors
    R = A @ vectors - MX * values
    return np.linalg.norm(R, axis=0) / np.linalg.norm(MX, axis=0)


class Eigensolver(ABC):
    """Abstract base class for coexact eigensolvers."""

    method: SolverMethod

    @abstractmethod
    def solve(self, pencil: CoexactPencil, k: int) -> Tuple[np.ndarray, np.ndarray]:
        """Return the k smallest nonzero eigenvalues and M_p-orthonormal eigenvectors."""
        pass


class DenseSVDSolver(Eigensolver):
    """Singular values of the mass-scaled coboundary; eigenvalues are their squares."""

    method = SolverMethod.DENSE_SVD

    def solve(self, pencil: CoexactPencil, k: int) -> Tuple[np.ndarray, np.ndarray]:
        if not pencil.lumped:
            raise SpectrumRequestError("DenseSVDSolver needs diagonal masses")
        m = np.sqrt(_diag(pencil.mass))
        w = np.sqrt(_diag(pencil.mass_next))
        G = w[:, None] * pencil.D.toarray() / m[None, :]
        _, s, Vt = la.svd(G, full_matrices=False)
        order = np.arange(pencil.rank - 1, -1, -1)[:k]
        values = s[order] ** 2
        vectors = Vt[order].T / m[:, None]
        return values, vectors


class DenseEighSolver(Eigensolver):
    """Generalized symmetric eigenproblem; the first dim ker D_p eigenvalues are skipped."""

    method = SolverMethod.DENSE_EIGH

    def solve(self, pencil: CoexactPencil, k: int) -> Tuple[np.ndarray, np.ndarray]:
        A = pencil.stiffness().toarray()
        B = pencil.mass.toarray()
        z = pencil.kernel_dimension
        values, vectors = la.eigh(A, B, subset_by_index=[z, z + k - 1])
        return values, vectors


class BlockLanczosSolver(Eigensolver):
    """
    Block Rayleigh-Ritz on T = A^+ B, the pseudo-inverse restricted to the
    B-orthogonal complement of the kernel.

    Lumped pencils are solved on whichever side has a combinatorial kernel
    basis: the up side (D^T W D, B) when D_p is a graph incidence, the down
    side (D B^{-1} D^T, W^{-1}) when every column of D_p has two entries.
    Both solve a bordered mixed system factored once with SuperLU.
    """

    method = SolverMethod.BLOCK_LANCZOS

    def __init__(
        self,
        tol: float = SOLVER_TOLERANCE,
        seed: int = DEFAULT_SEED,
        block_size: int = LANCZOS_BLOCK_SIZE,
        max_basis: int = LANCZOS_MAX_BASIS,
    ):
        self.tol = tol
        self.seed = seed
        self.block_size = block_size
        self.max_basis = max_basis

    # ---- side selection ----

    def _side(self, pencil: CoexactPencil) -> str:
        if not pencil.lumped or is_graph_incidence(pencil.incidence):
            return "up"
        if propagation_cokernel(pencil.incidence) is not None:
            return "down"
        return "up"

    def _factor(self, pencil: CoexactPencil, side: str):
        """Returns (apply_T, B, Z) on the chosen side"""
        D = sp.csr_matrix(pencil.D)
        try:
            if side == "up":
                Z = kernel_basis(pencil.incidence) / pencil.conjugation[:, None]
            else:
                Z = cokernel_basis(pencil.incidence) * pencil.conjugation_next[:, None]
        except ComplexError as e:
            raise SpectrumRequestError(f"No kernel basis for degree {pencil.degree}: {e}")

        if side == "up":
            C, B = D, sp.csr_matrix(pencil.mass)
            W_inv = None if not pencil.lumped else 1.0 / _diag(pencil.mass_next)
        else:
            C = sp.csr_matrix(D.T)
            B = sp.diags(1.0 / _diag(pencil.mass_next), format="csr")
            W_inv = _diag(pencil.mass)

        BZ = B @ Z
        ZBZ = Z.T @ BZ
        L = np.linalg.cholesky(ZBZ) if Z.shape[1] else np.zeros((0, 0))
        if Z.shape[1]:
            Z = la.solve_triangular(L, Z.T, lower=True).T
            BZ = B @ Z
        n, z = C.shape[1], Z.shape[1]
        border = sp.csr_matrix(BZ)

        if W_inv is not None:
            offset = C.shape[0]
            blocks = [[-sp.diags(W_inv), C], [C.T, sp.csr_matrix((n, n))]]
        else:
            offset = 0
            blocks = [[(C.T @ sp.csr_matrix(pencil.mass_next) @ C).tocsr()]]
        if z:
            for row in blocks[:-1]:
                row.append(None)
            blocks[-1].append(border)
            blocks.append([None] * (len(blocks[0]) - 2) + [border.T, sp.csr_matrix((z, z))])
        K = sp.bmat(blocks, format="csc")
        lu = splu(K)

        def apply_T(X: np.ndarray) -> np.ndarray:
            rhs = np.zeros((K.shape[0], X.shape[1]))
            rhs[offset:offset + n] = B @ X
            return lu.solve(rhs)[offset:offset + n]

        return apply_T, B, Z

    # ---- Krylov machinery ----

    @staticmethod
    def _b_orthonormalize(X: np.ndarray, B) -> np.ndarray:
        G = X.T @ (B @ X)
        G = 0.5 * (G + G.T)
        vals, vecs = np.linalg.eigh(G)
        keep = vals > 1e-12 * max(vals.max(initial=0.0), 1e-300)
        return X @ (vecs[:, keep] / np.sqrt(vals[keep]))

    def _project(self, X: np.ndarray, basis: np.ndarray, B) -> np.ndarray:
        if basis.shape[1] == 0:
            return X
        for _ in range(2):
            X = X - basis @ (basis.T @ (B @ X))
        return X

    @staticmethod
    def _lift(pencil: CoexactPencil, side: str, Y: np.ndarray) -> np.ndarray:
        """Ritz vectors as p-cochains; the down side maps y to M_p^{-1} D^T y"""
        if side == "up":
            return Y
        return (1.0 / _diag(pencil.mass))[:, None] * (pencil.D.T @ Y)

    @staticmethod
    def _rayleigh_ritz(A, M, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        Ak = X.T @ (A @ X)
        Mk = X.T @ (M @ X)
        values, C = la.eigh(0.5 * (Ak + Ak.T), 0.5 * (Mk + Mk.T))
        return values, X @ C

    def solve(self, pencil: CoexactPencil, k: int) -> Tuple[np.ndarray, np.ndarray]:
        side = self._side(pencil)
        apply_T, B, Z = self._factor(pencil, side)
        A, M = pencil.stiffness(), sp.csr_matrix(pencil.mass)
        n = B.shape[0]
        limit = min(self.max_basis, n - Z.shape[1])

        rng = np.random.default_rng(self.seed)
        block = self._b_orthonormalize(self._project(rng.standard_normal((n, self.block_size)), Z, B), B)
        V = block
        TV = np.zeros((n, 0))
        H = np.zeros((0, 0))
        best = np.inf

        while True:
            new = apply_T(block)
            new = self._project(new, Z, B)
            TV = np.hstack([TV, new])
            H = np.pad(H, ((0, block.shape[1]), (0, block.shape[1])))
            H[:, -block.shape[1]:] = V.T @ (B @ new)
            H[-block.shape[1]:, :] = H[:, -block.shape[1]:].T
            H = 0.5 * (H + H.T)

            theta, S = np.linalg.eigh(H)
            top = np.argsort(theta)[::-1][:k]
            theta, S = theta[top], S[:, top]
            if len(theta) == k and theta.min() > 0:
                # smoothed Ritz vectors, refined on the pencil
                values, X = self._rayleigh_ritz(A, M, self._lift(pencil, side, TV @ S / theta))
                residuals = pencil_residuals(A, M, values, X)
                best = min(best, float(residuals.max()))
                if residuals.max() <= self.tol:
                    break

            if V.shape[1] >= limit:
                raise SolverConvergenceError(
                    f"Block Lanczos did not reach residual {self.tol:.1e} for degree {pencil.degree} "
                    f"within {V.shape[1]} vectors (best {best:.2e})",
                    best_residual=best,
                )
            block = self._b_orthonormalize(self._project(self._project(new, V, B), Z, B), B)
            if block.shape[1] == 0:
                raise SolverConvergenceError(
                    f"Krylov space exhausted before {k} converged eigenpairs in degree {pencil.degree}",
                    best_residual=best,
                )
            block = block[:, : max(0, min(block.shape[1], limit - V.shape[1]))]
            V = np.hstack([V, block])

        logger.info(f"[LANCZOS] degree {pencil.degree} side={side} basis={V.shape[1]} "
                    f"max residual={best:.2e}")
        return values, X


def get_eigensolver(
    pencil: CoexactPencil,
    method: Optional[str] = None,
    dense_threshold: int = DENSE_THRESHOLD,
    tol: float = SOLVER_TOLERANCE,
    seed: int = DEFAULT_SEED,
) -> Eigensolver:
    """
    Factory function to get the appropriate eigensolver.

    Without an explicit method, dense backends are used when both cochain
    spaces have at most dense_threshold entries.
    """
    if method is None:
        dense = max(pencil.D.shape) <= dense_threshold
        if dense:
            method = SolverMethod.DENSE_SVD if pencil.lumped else SolverMethod.DENSE_EIGH
        else:
            method = SolverMethod.BLOCK_LANCZOS
    try:
        method = SolverMethod(method)
    except ValueError:
        raise SpectrumRequestError(f"Unknown eigensolver '{method}'; choose from {[m.value for m in SolverMethod]}")

    if method == SolverMethod.DENSE_SVD:
        return DenseSVDSolver()
    elif method == SolverMethod.DENSE_EIGH:
        return DenseEighSolver()
    elif method == SolverMethod.BLOCK_LANCZOS:
        return BlockLanczosSolver(tol=tol, seed=seed)
    raise SpectrumRequestError(f"Unknown eigensolver: {method}")
