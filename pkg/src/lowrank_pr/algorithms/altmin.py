"""
Alternating minimization over the factored model X = U B.

Each iteration estimates the measurement phases from the current factors,
solves one joint least-squares problem for U over all columns, orthonormalizes
it, and then solves q small least-squares problems for the coefficients.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator

from ..errors import DimensionError, RankDeficiencyError
from ..measurement import MeasurementEnsemble, Measurements
from ..spectral import DENSE_EIG_THRESHOLD, cgls
from .estimate import Estimate, IterationTracer, RankMode
from .initializers import lrpr_init

logger = logging.getLogger(__name__)

__all__ = [
    "DENSE_LS_THRESHOLD",
    "PhaseState",
    "ls_update_B",
    "ls_update_U",
    "ls_update_b",
    "phase_step",
    "phase_update",
    "run_lrpr2",
]

# Largest n*r for which the U least-squares problem is solved through its normal equations.
DENSE_LS_THRESHOLD = 20000


def _unit_phase(z: np.ndarray) -> np.ndarray:
    mag = np.abs(z)
    return np.where(mag > 0, z / np.where(mag > 0, mag, 1.0), 1.0).astype(z.dtype, copy=False)


@dataclass(frozen=True, eq=False)
class PhaseState:
    """m x q matrix of unit-modulus phase estimates; the phase of 0 is 1."""
    C_hat: np.ndarray


def phase_step(ens: MeasurementEnsemble, k: int, U_hat: np.ndarray, b_k: np.ndarray) -> np.ndarray:
    """Phases of column k: c_i = phase(a_{i,k}' U_hat b_k)."""
    return _unit_phase(ens.forward(k, U_hat @ b_k))


def phase_update(ens: MeasurementEnsemble, U_hat: np.ndarray, B_hat: np.ndarray) -> PhaseState:
    """phase_step for every column."""
    return PhaseState(_unit_phase(ens.forward_all(U_hat @ B_hat)))


def _targets(phases: Union[PhaseState, np.ndarray], y: np.ndarray) -> np.ndarray:
    C = phases.C_hat if isinstance(phases, PhaseState) else np.asarray(phases)
    if C.shape != y.shape:
        raise DimensionError(f"Phases have shape {C.shape} but y has shape {y.shape}.")
    return C * np.sqrt(np.maximum(y, 0.0))


def ls_update_U(
    ens: MeasurementEnsemble,
    phases: Union[PhaseState, np.ndarray],
    y: np.ndarray,
    B_hat: np.ndarray,
    U0: Optional[np.ndarray] = None,
    cgls_iters: int = 3,
    dense_threshold: int = DENSE_LS_THRESHOLD,
) -> np.ndarray:
    """
    Solves min over U of sum_k || C_k sqrt(y_k) - A_k' U b_k ||^2.

    With n*r <= dense_threshold the nr x nr normal equations
    sum_k kron(conj(b_k) b_k^T, A_k A_k') vec(U) = vec(sum_k A_k c_k b_k')
    are factored with Cholesky; otherwise ``cgls_iters`` CGLS steps on the
    matrix-free operator U -> [A_k' U b_k]_k are run from ``U0``.

    Returns:
        np.ndarray: The n x r minimizer, not orthonormalized.

    Raises:
        RankDeficiencyError: If the system is singular (typically mq < nr).
    """
    B_hat = np.asarray(B_hat)
    r = B_hat.shape[0]
    n, m, q = ens.n, ens.m, ens.q
    if B_hat.shape != (r, q):
        raise DimensionError(f"B_hat has shape {B_hat.shape}, expected (r, {q}).")
    if not np.any(B_hat):
        raise RankDeficiencyError("B_hat is zero; the U least-squares problem is singular.")
    if m * q < n * r:
        raise RankDeficiencyError(f"U least-squares is underdetermined: m*q={m * q} < n*r={n * r}.")
    target = _targets(phases, y)
    rhs = ens.adjoint_all(target) @ B_hat.conj().T

    if n * r <= dense_threshold:
        N = np.einsum("jk,lk,kab->jalb", B_hat.conj(), B_hat, ens.gram_stack, optimize=True)
        N = N.reshape(r * n, r * n)
        try:
            factor = linalg.cho_factor((N + N.conj().T) / 2)
        except linalg.LinAlgError as e:
            logger.error(f"Error in ls_update_U: normal equations are singular: {e}")
            raise RankDeficiencyError(
                f"U least-squares is rank deficient (m*q={m * q}, n*r={n * r}; need m*q >= n*r)."
            ) from e
        sol = linalg.cho_solve(factor, rhs.T.reshape(-1))
        return sol.reshape(r, n).T

    dtype = np.result_type(ens.dtype, B_hat.dtype, target.dtype)

    def matvec(u):
        return ens.forward_all(u.reshape(r, n).T @ B_hat).reshape(-1)

    def rmatvec(z):
        return (ens.adjoint_all(z.reshape(m, q)) @ B_hat.conj().T).T.reshape(-1)

    op = LinearOperator(shape=(m * q, n * r), matvec=matvec, rmatvec=rmatvec, dtype=dtype)
    x0 = None if U0 is None else U0.T.reshape(-1)
    sol = cgls(op, target.reshape(-1), iters=cgls_iters, x0=x0)
    return sol.reshape(r, n).T


def ls_update_b(
    ens: MeasurementEnsemble, k: int, phases_k: np.ndarray, y_k: np.ndarray, U_hat: np.ndarray
) -> np.ndarray:
    """
    Solves min over b of || C_k sqrt(y_k) - A_k' U_hat b ||.

    Raises:
        RankDeficiencyError: If A_k' U_hat has rank below r.
    """
    M = ens.forward(k, U_hat)
    target = np.asarray(phases_k) * np.sqrt(np.maximum(np.asarray(y_k, dtype=float), 0.0))
    b, _, rank, _ = linalg.lstsq(M, target)
    if rank < U_hat.shape[1]:
        raise RankDeficiencyError(f"Column {k}: A_k' U_hat has rank {rank} < r={U_hat.shape[1]}.")
    return b


def ls_update_B(
    ens: MeasurementEnsemble, phases: Union[PhaseState, np.ndarray], y: np.ndarray, U_hat: np.ndarray
) -> np.ndarray:
    """ls_update_b for every column, solved with a batched QR factorization."""
    r = U_hat.shape[1]
    if ens.m < r:
        raise RankDeficiencyError(f"Each column has m={ens.m} < r={r} measurements.")
    target = _targets(phases, y)
    W = ens.forward_block(U_hat)
    Q, R = np.linalg.qr(W)
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    scale = diag.max(axis=1, keepdims=True)
    bad = np.any(diag <= np.finfo(float).eps * max(ens.m, r) * scale, axis=1) | (scale[:, 0] == 0)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise RankDeficiencyError(f"Column {k}: A_k' U_hat is rank deficient.")
    rhs = np.matmul(np.conj(Q).transpose(0, 2, 1), target.T[:, :, None])
    B = np.linalg.solve(R, rhs)[:, :, 0]
    return B.T


def run_lrpr2(
    y: Union[Measurements, np.ndarray],
    ens: MeasurementEnsemble,
    iterations: int = 100,
    rank_mode: Optional[RankMode] = None,
    reference: Optional[np.ndarray] = None,
    cgls_iters: int = 3,
    power_iters: int = 50,
    seed: int = 0,
    dense_eig_threshold: int = DENSE_EIG_THRESHOLD,
    dense_ls_threshold: int = DENSE_LS_THRESHOLD,
) -> Estimate:
    """
    Alternating minimization started from the LRPR initializer.

    Each iteration: phases from the current factors, the joint U update,
    QR of U (the triangular factor is dropped), then the per-column b updates.

    Args:
        y (Measurements or np.ndarray): m x q measurements.
        ens (MeasurementEnsemble): Matching ensemble.
        iterations (int): Number of alternating iterations.
        rank_mode (RankMode): Rank selection for the initializer.
        reference (np.ndarray, optional): Ground truth for the NormErr trace.
        cgls_iters (int): CGLS steps when the U update is matrix-free.

    Returns:
        Estimate: Factored estimate with its trace.

    Raises:
        RankDeficiencyError: If m*q < n*r or a least-squares step is singular.
    """
    tracer = IterationTracer(reference)
    y_arr = y.y if isinstance(y, Measurements) else np.asarray(y, dtype=float)
    start = lrpr_init(y, ens, rank_mode, power_iters=power_iters, seed=seed, dense_threshold=dense_eig_threshold)
    U_hat, B_hat = start.U_hat, start.B_hat
    r = start.r_hat
    if ens.m * ens.q < ens.n * r:
        raise RankDeficiencyError(f"Need m*q >= n*r; got m*q={ens.m * ens.q}, n*r={ens.n * r}.")
    tracer.record(0, U_hat @ B_hat)
    for t in range(1, iterations + 1):
        phases = phase_update(ens, U_hat, B_hat)
        U_new = ls_update_U(
            ens, phases, y_arr, B_hat, U0=U_hat, cgls_iters=cgls_iters, dense_threshold=dense_ls_threshold
        )
        U_hat, _ = np.linalg.qr(U_new)
        B_hat = ls_update_B(ens, phases, y_arr, U_hat)
        tracer.record(t, U_hat @ B_hat)
    return Estimate.factored(U_hat, B_hat, trace=tracer.points, degenerate=start.degenerate, spectrum=start.spectrum)
