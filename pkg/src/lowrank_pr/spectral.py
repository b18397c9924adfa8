"""Eigen-solvers, rank-r projection and the CGLS least-squares solver."""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .errors import DimensionError, NumericalBreakdownError

logger = logging.getLogger(__name__)

__all__ = [
    "DENSE_EIG_THRESHOLD",
    "EigPair",
    "SymmetricOperator",
    "cgls",
    "rank_r_project",
    "top_eigvecs",
    "truncated_svd",
]

DENSE_EIG_THRESHOLD = 2000


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """
    A Hermitian positive semi-definite operator on C^dim (or R^dim).

    ``apply`` must accept either a vector or a dim x p block. ``dense`` is the
    explicit matrix when it was cheap enough to build.
    """
    dim: int
    apply: Callable[[np.ndarray], np.ndarray]
    dense: Optional[np.ndarray] = None
    dtype: np.dtype = np.dtype(np.float64)

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "SymmetricOperator":
        M = np.asarray(M)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError(f"Expected a square matrix, got shape {M.shape}.")
        return cls(dim=M.shape[0], apply=lambda v: M @ v, dense=M, dtype=M.dtype)

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)


@dataclass(frozen=True, eq=False)
class EigPair:
    """
    Leading eigenpairs of a symmetric operator.

    Attributes:
        vectors (np.ndarray): dim x r orthonormal eigenvectors.
        values (np.ndarray): r eigenvalues, descending and non-negative.
        spectrum (np.ndarray): Every eigenvalue the solver resolved, descending.
            The full spectrum for the dense path; the top block otherwise.
        degenerate (bool): True when the operator is numerically zero.
        method (str): "dense" or "block-power".
    """
    vectors: np.ndarray
    values: np.ndarray
    spectrum: np.ndarray
    degenerate: bool = False
    method: str = "dense"


def _block_power(op: SymmetricOperator, block: int, iters: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((op.dim, block))
    if np.iscomplexobj(np.empty(0, dtype=op.dtype)):
        V = V + 1j * rng.standard_normal((op.dim, block))
    V, _ = np.linalg.qr(V)
    for _ in range(iters):
        W = op.apply(V)
        if not np.all(np.isfinite(W)):
            raise NumericalBreakdownError("Non-finite values during block power iteration.")
        if not np.any(W):
            break
        V, _ = np.linalg.qr(W)
    # Rayleigh-Ritz on the final block
    H = V.conj().T @ op.apply(V)
    evals, S = linalg.eigh((H + H.conj().T) / 2)
    order = np.argsort(evals)[::-1]
    return V @ S[:, order], evals[order]


def top_eigvecs(
    op: Union[SymmetricOperator, np.ndarray],
    r: int,
    iters: int = 50,
    seed: int = 0,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> EigPair:
    """
    Computes the r leading eigenvectors of a Hermitian PSD operator.

    Uses a dense eigendecomposition when the operator carries its matrix and
    dim <= dense_threshold; otherwise runs ``iters`` steps of block power
    iteration from a seeded Gaussian start followed by a Rayleigh-Ritz step.

    Args:
        op (SymmetricOperator or np.ndarray): The operator.
        r (int): Number of eigenpairs, 1 <= r <= dim.
        iters (int): Power iterations for the operator path.
        seed (int): Seed of the starting block.
        dense_threshold (int): Largest dimension handled densely.

    Returns:
        EigPair: Eigenvectors, eigenvalues and the resolved spectrum.

    Raises:
        DimensionError: If r is out of range.
    """
    if isinstance(op, np.ndarray):
        op = SymmetricOperator.from_matrix(op)
    if not 1 <= r <= op.dim:
        raise DimensionError(f"Need 1 <= r <= {op.dim}, got r={r}.")

    if op.dense is not None and op.dim <= dense_threshold:
        M = op.dense
        if not np.all(np.isfinite(M)):
            raise NumericalBreakdownError("Operator matrix contains non-finite values.")
        evals, evecs = linalg.eigh((M + M.conj().T) / 2)
        spectrum, vectors = evals[::-1], evecs[:, ::-1][:, :r]
        method = "dense"
    else:
        vectors, spectrum = _block_power(op, r, iters, seed)
        method = "block-power"

    spectrum = np.maximum(spectrum, 0.0)
    degenerate = not np.any(spectrum > np.finfo(float).tiny)
    if degenerate:
        logger.warning("Operator is numerically zero; eigenvectors are arbitrary.")
    return EigPair(vectors=vectors, values=spectrum[:r].copy(), spectrum=spectrum, degenerate=degenerate, method=method)


def truncated_svd(M: np.ndarray, r: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns the leading r singular triplets (U_r, s_r, Vh_r) of M."""
    if not 1 <= r <= min(M.shape):
        raise DimensionError(f"Need 1 <= r <= {min(M.shape)}, got r={r}.")
    if not np.all(np.isfinite(M)):
        raise NumericalBreakdownError("Cannot take the SVD of a matrix with non-finite entries.")
    U, s, Vh = linalg.svd(M, full_matrices=False)
    return U[:, :r], s[:r], Vh[:r]


def rank_r_project(M: np.ndarray, r: int) -> np.ndarray:
    """Best rank-r approximation of M in Frobenius norm (truncated SVD)."""
    U, s, Vh = truncated_svd(M, r)
    return (U * s) @ Vh


def cgls(
    A: Union[LinearOperator, np.ndarray],
    rhs: np.ndarray,
    iters: int = 3,
    tol: float = 1e-10,
    x0: Optional[np.ndarray] = None,
    callback: Optional[Callable[[np.ndarray, float], None]] = None,
) -> np.ndarray:
    """
    Conjugate gradient on the normal equations for min ||A x - rhs||.

    Works for real and complex operators; ``A.rmatvec`` must be the conjugate
    transpose. Stops after ``iters`` iterations or once ||A^H r|| has dropped
    below tol times ||A^H rhs||.

    Args:
        A (LinearOperator or np.ndarray): The d_out x d operator.
        rhs (np.ndarray): Right-hand side of length d_out.
        iters (int): Maximum number of iterations.
        tol (float): Relative tolerance on the normal-equation residual.
        x0 (np.ndarray, optional): Warm start; zeros by default.
        callback (callable, optional): Called as callback(x, ||A x - rhs||)
            after every iteration.

    Returns:
        np.ndarray: The iterate after the last step.

    Raises:
        DimensionError: If the shapes do not match.
        NumericalBreakdownError: If a non-finite value appears.
    """
    A = aslinearoperator(A)
    rhs = np.asarray(rhs)
    if rhs.shape != (A.shape[0],):
        raise DimensionError(f"rhs has shape {rhs.shape}, expected ({A.shape[0]},).")
    dtype = np.result_type(A.dtype, rhs.dtype)
    x = np.zeros(A.shape[1], dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    if x.shape != (A.shape[1],):
        raise DimensionError(f"x0 has shape {x.shape}, expected ({A.shape[1]},).")

    r = rhs - A.matvec(x)
    s = A.rmatvec(r)
    p = s.copy()
    gamma = np.vdot(s, s).real
    if x0 is None:
        gamma_ref = gamma
    else:
        s_ref = A.rmatvec(rhs)
        gamma_ref = np.vdot(s_ref, s_ref).real
    for it in range(iters):
        if gamma <= (tol ** 2) * gamma_ref or gamma == 0:
            break
        t = A.matvec(p)
        denom = np.vdot(t, t).real
        if denom == 0:
            break
        alpha = gamma / denom
        x = x + alpha * p
        r = r - alpha * t
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(r))):
            raise NumericalBreakdownError(f"CGLS produced non-finite values at iteration {it + 1}.")
        s = A.rmatvec(r)
        gamma_new = np.vdot(s, s).real
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
        if callback is not None:
            callback(x, float(np.linalg.norm(r)))
    return x
