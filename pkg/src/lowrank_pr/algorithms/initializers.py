"""
Spectral initializers.

``lrpr_init`` estimates the column span of X as the top eigenvectors of the
truncated matrix Y_U = (1/mq) sum_{i,k} y_{i,k} a_{i,k} a_{i,k}' 1{y_{i,k} <= 9 mean_i y_{i,k}},
then recovers each coefficient vector from a small r x r eigenproblem.
``twf_init`` is the single-column truncated spectral initializer and
``twfproj_init`` projects the stack of those onto rank r.
"""
import logging
from typing import Optional, Tuple, Union

import numpy as np

from ..errors import ConfigurationError, DimensionError, NoSignalError
from ..measurement import MeasurementEnsemble, Measurements, split_measurements
from ..spectral import DENSE_EIG_THRESHOLD, SymmetricOperator, top_eigvecs, truncated_svd
from .estimate import Estimate, RankMode

logger = logging.getLogger(__name__)

__all__ = [
    "TRUNCATION_FACTOR",
    "build_YU",
    "estimate_rank_gap",
    "estimate_rank_threshold",
    "lrpr_init",
    "truncation_mask",
    "twf_init",
    "twf_init_all",
    "twfproj_init",
]

TRUNCATION_FACTOR = 9.0
RANK_THRESHOLD_FRACTION = 0.25


def _as_array(y: Union[Measurements, np.ndarray]) -> np.ndarray:
    y = y.y if isinstance(y, Measurements) else np.asarray(y, dtype=float)
    if y.ndim != 2:
        raise DimensionError(f"Measurements must be an m x q matrix, got shape {y.shape}.")
    return y


def truncation_mask(y: np.ndarray) -> np.ndarray:
    """Boolean m x q mask of y_{i,k} <= 9 * (sum_i y_{i,k}) / m."""
    return y <= TRUNCATION_FACTOR * y.mean(axis=0, keepdims=True)


def build_YU(
    y: Union[Measurements, np.ndarray],
    ens: MeasurementEnsemble,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> SymmetricOperator:
    """
    Builds the truncated subspace matrix Y_U.

    Y_U is materialized when n <= dense_threshold; otherwise only its action
    v -> Y_U v is provided, evaluated with the ensemble's forward and adjoint
    maps, so CDP ensembles are never densified.

    Args:
        y (np.ndarray or Measurements): m x q measurements.
        ens (MeasurementEnsemble): Matching ensemble.
        dense_threshold (int): Largest n for which Y_U is built densely.

    Returns:
        SymmetricOperator: Hermitian PSD operator of dimension n.

    Raises:
        DimensionError: If y and the ensemble disagree.
        ConfigurationError: If y is empty.
    """
    y = _as_array(y)
    if y.size == 0:
        raise ConfigurationError("Cannot build Y_U from an empty measurement matrix.")
    if y.shape != (ens.m, ens.q):
        raise DimensionError(f"y has shape {y.shape}, ensemble expects ({ens.m}, {ens.q}).")

    m, q = y.shape
    weights = np.where(truncation_mask(y), y, 0.0)
    scale = 1.0 / (m * q)

    def apply(v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        block = v[:, None] if v.ndim == 1 else v
        out = np.empty(block.shape, dtype=np.result_type(ens.dtype, block.dtype))
        for j in range(block.shape[1]):
            Z = ens.forward_all(np.repeat(block[:, j:j + 1], q, axis=1))
            out[:, j] = ens.adjoint_all(weights * Z).sum(axis=1) * scale
        return out[:, 0] if v.ndim == 1 else out

    dense = None
    if ens.n <= dense_threshold:
        G = ens.weighted_gram(weights) * scale
        dense = (G + G.conj().T) / 2
    return SymmetricOperator(dim=ens.n, apply=apply, dense=dense, dtype=ens.dtype)


def estimate_rank_gap(eigvals: np.ndarray) -> int:
    """
    Returns the 1-based j maximizing lambda_j - lambda_{j+1}; ties go to the
    smallest j.

    Raises:
        ConfigurationError: With fewer than two eigenvalues or an unsorted input.
    """
    vals = np.asarray(eigvals, dtype=float)
    if vals.size < 2:
        raise ConfigurationError("Need at least two eigenvalues to locate a gap.")
    gaps = vals[:-1] - vals[1:]
    if np.any(gaps < -1e-12 * max(1.0, np.abs(vals).max())):
        raise ConfigurationError("Eigenvalues must be sorted in descending order.")
    return int(np.argmax(gaps)) + 1


def estimate_rank_threshold(eigvals: np.ndarray, lambda_min: float) -> int:
    """
    Counts the eigenvalues with lambda_j - lambda_n >= lambda_min / 4, where
    lambda_n is the last entry of ``eigvals``.

    Returns 0 when nothing clears the threshold, meaning no signal was found.

    Raises:
        ConfigurationError: If lambda_min is not positive.
    """
    if lambda_min <= 0:
        raise ConfigurationError(f"lambda_min must be positive, got {lambda_min}.")
    vals = np.asarray(eigvals, dtype=float)
    if vals.size == 0:
        raise ConfigurationError("No eigenvalues supplied.")
    tol = 1e-12 * max(1.0, np.abs(vals).max())
    margin = vals - vals[-1]
    return int(np.count_nonzero(margin >= RANK_THRESHOLD_FRACTION * lambda_min - tol))


def _coefficients(y: np.ndarray, ens: MeasurementEnsemble, U_hat: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Per-column coefficient estimate: b_k is the top eigenvector of
    (1/m) (A_k' U)' diag(y_k) (A_k' U), scaled by sqrt(mean_i y_{i,k}).
    """
    m = y.shape[0]
    W = ens.forward_block(U_hat)
    H = np.matmul(np.conj(W).transpose(0, 2, 1), y.T[:, :, None] * W) / m
    _, vecs = np.linalg.eigh((H + np.conj(H).transpose(0, 2, 1)) / 2)
    nu = np.sqrt(np.maximum(y.mean(axis=0), 0.0))
    B_hat = (vecs[:, :, -1] * nu[:, None]).T
    degenerate = not np.any(nu)
    return B_hat, degenerate


def lrpr_init(
    y: Union[Measurements, np.ndarray],
    ens: MeasurementEnsemble,
    rank_mode: Optional[RankMode] = None,
    partitioned: bool = False,
    power_iters: int = 50,
    seed: int = 0,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> Estimate:
    """
    Low-rank phase retrieval initializer.

    Args:
        y (Measurements or np.ndarray): Measurements; with ``partitioned`` the
            trailing ``m_fresh`` rows must come from shared fresh vectors.
        ens (MeasurementEnsemble): Matching ensemble.
        rank_mode (RankMode): Known rank, largest-gap or threshold estimation.
            Defaults to the largest gap.
        partitioned (bool): Build Y_U from the first rows and the coefficients
            from the fresh rows.
        power_iters (int): Block power iterations when Y_U is not dense.
        seed (int): Seed for the power iteration start.
        dense_threshold (int): Largest n for the dense eigen-solver.

    Returns:
        Estimate: U_hat, B_hat, X_hat = U_hat B_hat, r_hat and the spectrum.

    Raises:
        NoSignalError: If the threshold rule finds no signal eigenvalue.
        ConfigurationError: If partitioned mode has no shared fresh rows.
    """
    rank_mode = rank_mode or RankMode.gap()
    m_fresh = y.m_fresh if isinstance(y, Measurements) else 0
    y_arr = _as_array(y)

    if partitioned:
        if m_fresh <= 0:
            raise ConfigurationError("Partitioned initialization needs fresh measurements.")
        init_part, coef_part = split_measurements(ens, y_arr, y_arr.shape[0] - m_fresh, m_fresh)
        if coef_part.ensemble.sharing != "shared":
            raise ConfigurationError("The fresh measurement vectors must be shared across columns.")
        init_y, init_ens = init_part.y, init_part.ensemble
        coef_y, coef_ens = coef_part.y, coef_part.ensemble
    elif m_fresh > 0:
        # shared fresh rows stay out of both Y_U and M_k
        init_part, _ = split_measurements(ens, y_arr, y_arr.shape[0] - m_fresh, m_fresh)
        init_y, init_ens = init_part.y, init_part.ensemble
        coef_y, coef_ens = init_y, init_ens
    else:
        init_y, init_ens = y_arr, ens
        coef_y, coef_ens = y_arr, ens

    n = ens.n
    op = build_YU(init_y, init_ens, dense_threshold)
    if rank_mode.kind == "known":
        if rank_mode.r > min(n, ens.q):
            raise DimensionError(f"Rank {rank_mode.r} exceeds min(n, q) = {min(n, ens.q)}.")
        search = rank_mode.r
    elif op.dense is not None:
        search = n
    else:
        search = min(n, rank_mode.max_rank + 1)

    pair = top_eigvecs(op, search, iters=power_iters, seed=seed, dense_threshold=dense_threshold)
    if rank_mode.kind == "known":
        r_hat = rank_mode.r
    elif rank_mode.kind == "gap":
        r_hat = estimate_rank_gap(pair.spectrum)
    else:
        r_hat = estimate_rank_threshold(pair.spectrum, rank_mode.lambda_min)
        if r_hat == 0:
            raise NoSignalError("No eigenvalue of Y_U clears the threshold; the data carry no signal.")
    logger.info(f"LRPR init: rank mode {rank_mode.kind}, r_hat={r_hat}, eig method {pair.method}.")

    U_hat = pair.vectors[:, :r_hat]
    B_hat, coef_degenerate = _coefficients(coef_y, coef_ens, U_hat)
    return Estimate.factored(
        U_hat, B_hat, degenerate=pair.degenerate or coef_degenerate, spectrum=pair.spectrum
    )


def _column_operator(ens: MeasurementEnsemble, k: int, weights: np.ndarray) -> SymmetricOperator:
    def apply(v):
        z = ens.forward(k, v)
        w = weights if z.ndim == 1 else weights[:, None]
        return ens.adjoint(k, w * z)
    return SymmetricOperator(dim=ens.n, apply=apply, dtype=ens.dtype)


def twf_init_all(
    y: Union[Measurements, np.ndarray],
    ens: MeasurementEnsemble,
    power_iters: int = 50,
    seed: int = 0,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Truncated spectral initialization of every column independently.

    Returns:
        tuple: (n x q estimate, boolean q-vector flagging all-zero columns).
    """
    y = _as_array(y)
    if y.shape != (ens.m, ens.q):
        raise DimensionError(f"y has shape {y.shape}, ensemble expects ({ens.m}, {ens.q}).")
    weights = np.where(truncation_mask(y), y, 0.0)
    scale = np.sqrt(np.maximum(y.mean(axis=0), 0.0))
    X0 = np.zeros((ens.n, ens.q), dtype=ens.dtype)

    if ens.n <= dense_threshold:
        chunk = 64
        for start in range(0, ens.q, chunk):
            cols = list(range(start, min(start + chunk, ens.q)))
            grams = ens.column_weighted_grams(weights, cols)
            grams = (grams + np.conj(grams).transpose(0, 2, 1)) / 2
            _, vecs = np.linalg.eigh(grams)
            X0[:, cols] = vecs[:, :, -1].T
    else:
        for k in range(ens.q):
            pair = top_eigvecs(_column_operator(ens, k, weights[:, k]), 1, iters=power_iters, seed=seed + k)
            X0[:, k] = pair.vectors[:, 0]

    X0 = X0 * scale[None, :]
    zero = scale == 0
    if np.any(zero):
        logger.warning(f"{int(zero.sum())} column(s) have no measured energy; their estimate is zero.")
    return X0, zero


def twf_init(
    y_k: np.ndarray,
    ens: MeasurementEnsemble,
    k: int,
    power_iters: int = 50,
    seed: int = 0,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> np.ndarray:
    """
    Truncated spectral initializer for column k: the top eigenvector of
    sum_i y_i a_i a_i' 1{y_i <= 9 mean(y)}, scaled by sqrt(mean(y)).

    Returns the zero vector (and logs a warning) if column k carries no energy.
    """
    y_k = np.asarray(y_k, dtype=float)
    if y_k.shape != (ens.m,):
        raise DimensionError(f"y_k has shape {y_k.shape}, expected ({ens.m},).")
    weights = np.where(y_k <= TRUNCATION_FACTOR * y_k.mean(), y_k, 0.0)
    op = _column_operator(ens, k, weights)
    if ens.n <= dense_threshold:
        op = SymmetricOperator.from_matrix(op.apply(np.eye(ens.n, dtype=ens.dtype)))
    pair = top_eigvecs(op, 1, iters=power_iters, seed=seed, dense_threshold=dense_threshold)
    scale = np.sqrt(max(y_k.mean(), 0.0))
    if scale == 0:
        logger.warning(f"Column {k} has no measured energy; returning the zero vector.")
    return pair.vectors[:, 0] * scale


def twfproj_init(
    y: Union[Measurements, np.ndarray],
    ens: MeasurementEnsemble,
    r: int,
    power_iters: int = 50,
    seed: int = 0,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> Estimate:
    """Column-wise truncated spectral init followed by a rank-r projection."""
    X0, zero = twf_init_all(y, ens, power_iters=power_iters, seed=seed, dense_threshold=dense_threshold)
    if not np.any(X0):
        logger.warning("Every column is zero; returning the zero estimate.")
        U_hat = np.eye(ens.n, r, dtype=ens.dtype)
        return Estimate.factored(U_hat, np.zeros((r, ens.q), dtype=ens.dtype), degenerate=True)
    U, s, Vh = truncated_svd(X0, r)
    return Estimate.factored(U, s[:, None] * Vh, degenerate=bool(np.all(zero)))
