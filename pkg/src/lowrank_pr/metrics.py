"""Recovery error metrics, all invariant to a global phase per column."""
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractViolationError, DimensionError, ZeroSignalError
from .measurement import GroundTruth
from .spectral import truncated_svd

logger = logging.getLogger(__name__)

__all__ = ["ErrorReport", "error_report", "norm_err", "phase_dist", "subspace_error"]

_ORTHONORMAL_TOL = 1e-8


def _optimal_phase(x: np.ndarray, x_hat: np.ndarray) -> complex:
    inner = np.vdot(x_hat, x)
    if inner == 0:
        return 1.0
    return inner / abs(inner)


def phase_dist(x: np.ndarray, x_hat: np.ndarray) -> float:
    """
    min over unit-modulus phi of ||x - phi x_hat||.

    The minimizer is the phase of x_hat^H x; the residual is then formed
    explicitly so that tiny distances keep full relative accuracy.
    """
    x = np.asarray(x)
    x_hat = np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"Shapes differ: {x.shape} vs {x_hat.shape}.")
    phi = _optimal_phase(x, x_hat)
    return float(np.linalg.norm(x - phi * x_hat))


def _aligned_residual(X: np.ndarray, X_hat: np.ndarray) -> np.ndarray:
    """X minus X_hat with every column rotated by its optimal phase."""
    inner = np.sum(np.conj(X_hat) * X, axis=0)
    mags = np.abs(inner)
    phases = np.where(mags > 0, inner / np.where(mags > 0, mags, 1), 1)
    return X - X_hat * phases[None, :]


def _checked_pair(X: np.ndarray, X_hat: np.ndarray):
    X = np.asarray(X)
    X_hat = np.asarray(X_hat)
    if X.shape != X_hat.shape:
        raise DimensionError(f"Shapes differ: {X.shape} vs {X_hat.shape}.")
    energy = np.sum(np.abs(X) ** 2)
    if energy == 0:
        raise ZeroSignalError("NormErr is undefined for an all-zero ground truth.")
    return X, X_hat, energy


def norm_err(X: np.ndarray, X_hat: np.ndarray) -> float:
    """
    Normalized error sum_k dist(x_k, x_hat_k)^2 / ||X||_F^2.

    Raises:
        ZeroSignalError: If X is identically zero.
    """
    X, X_hat, energy = _checked_pair(X, X_hat)
    return float(np.sum(np.abs(_aligned_residual(X, X_hat)) ** 2) / energy)


def subspace_error(U: np.ndarray, U_hat: np.ndarray) -> float:
    """
    Spectral norm of (I - U_hat U_hat^H) U.

    Both inputs must have orthonormal columns; a check to 1e-8 guards this.
    Returns a value in [0, 1].
    """
    U = np.asarray(U)
    U_hat = np.asarray(U_hat)
    if U.shape[0] != U_hat.shape[0]:
        raise DimensionError(f"Row counts differ: {U.shape[0]} vs {U_hat.shape[0]}.")
    for name, M in (("U", U), ("U_hat", U_hat)):
        gram = M.conj().T @ M
        if not np.allclose(gram, np.eye(M.shape[1]), atol=_ORTHONORMAL_TOL):
            raise ContractViolationError(f"{name} does not have orthonormal columns.")
    resid = U - U_hat @ (U_hat.conj().T @ U)
    return float(min(np.linalg.norm(resid, 2), 1.0))


@dataclass(frozen=True)
class ErrorReport:
    """
    Scores of one estimate. ``per_column_dist`` holds dist(x_k, x_hat_k), so
    norm_err equals sum(per_column_dist**2) / ||X||_F^2.
    """
    norm_err: float
    se: float
    r_hat: Optional[int]
    rank_correct: Optional[bool]
    per_column_dist: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))

    def to_dict(self) -> dict:
        out = asdict(self)
        out["per_column_dist"] = [float(d) for d in self.per_column_dist]
        return out


def error_report(
    gt: GroundTruth,
    X_hat: np.ndarray,
    U_hat: Optional[np.ndarray] = None,
    r_hat: Optional[int] = None,
) -> ErrorReport:
    """
    Scores an estimate against the ground truth.

    When ``U_hat`` is missing (the estimate was not built in factored form) the
    subspace error uses the top-r left singular vectors of X_hat.
    """
    X, X_hat, energy = _checked_pair(gt.X, X_hat)
    dists = np.linalg.norm(_aligned_residual(X, X_hat), axis=0)
    err = float(np.sum(dists ** 2) / energy)
    if U_hat is None:
        k = min(gt.r, *X_hat.shape)
        U_hat = truncated_svd(X_hat, k)[0] if np.any(X_hat) else np.eye(gt.n, k)
    se = subspace_error(gt.U, U_hat)
    rank_correct = None if r_hat is None else bool(r_hat == gt.r)
    return ErrorReport(norm_err=err, se=se, r_hat=r_hat, rank_correct=rank_correct, per_column_dist=dists)
