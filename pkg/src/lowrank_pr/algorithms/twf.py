"""
Truncated Wirtinger Flow and its low-rank variants.

One step moves each column along the truncated gradient
    x <- x + (mu/m) sum_i (y_i - |u_i|^2) u_i / |u_i|^2 * a_i * 1{E1 or E2}
with u_i = a_i' x. E1 holds when |u_i| / ||x|| lies in [alpha_lb, alpha_ub];
E2 holds when the residual is at most alpha_h times the column's mean
absolute residual scaled by |u_i| / ||x||. ``events="intersection"`` keeps a
measurement only when both hold.
"""
import logging
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ConfigurationError, DimensionError, NumericalBreakdownError
from ..measurement import MeasurementEnsemble, Measurements
from ..spectral import DENSE_EIG_THRESHOLD, truncated_svd
from .estimate import Estimate, IterationTracer, RankMode
from .initializers import lrpr_init, twf_init_all, twfproj_init

logger = logging.getLogger(__name__)

__all__ = [
    "TwfParams",
    "run_lrpr1",
    "run_lrpr_twf",
    "run_twf",
    "run_twfproj",
    "twf_step",
    "twf_sweep",
]

# Measurements with |u_i| below this fraction of ||x|| are skipped.
_MAGNITUDE_FLOOR = 1e-14


class TwfParams(BaseModel):
    """Step size, truncation constants and iteration count for TWF."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    mu: float = Field(0.2, ge=0)
    alpha_lb: float = Field(0.3, gt=0)
    alpha_ub: float = Field(5.0, gt=0)
    alpha_h: float = Field(5.0, gt=0)
    iterations: int = Field(100, ge=0)
    events: Literal["union", "intersection"] = "union"

    @model_validator(mode="after")
    def check_bounds(self):
        if self.alpha_lb >= self.alpha_ub:
            raise ValueError(f"alpha_lb ({self.alpha_lb}) must be smaller than alpha_ub ({self.alpha_ub}).")
        return self


def _gradient_coefficients(u: np.ndarray, y: np.ndarray, x_norm: np.ndarray, p: TwfParams) -> np.ndarray:
    """
    Coefficients c with step = (mu/m) * A c. Works column-wise on m x q arrays,
    or on a single column when u and y are vectors.
    """
    abs_u = np.abs(u)
    resid = y - abs_u ** 2
    spread = np.mean(np.abs(resid), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = abs_u / x_norm
        in_band = (ratio >= p.alpha_lb) & (ratio <= p.alpha_ub)
        small_resid = np.abs(resid) <= p.alpha_h * spread * ratio
        keep = in_band & small_resid if p.events == "intersection" else in_band | small_resid
        keep &= abs_u > _MAGNITUDE_FLOOR * x_norm
        coef = np.where(keep, resid * u / np.where(keep, abs_u ** 2, 1.0), 0.0)
    return coef


def _check_finite(*arrays) -> None:
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericalBreakdownError("TWF received non-finite values.")


def twf_step(x_hat: np.ndarray, y_k: np.ndarray, ens: MeasurementEnsemble, k: int, p: TwfParams) -> np.ndarray:
    """
    One truncated gradient step on column k.

    Args:
        x_hat (np.ndarray): Current n-vector estimate, nonzero.
        y_k (np.ndarray): The m measurements of column k.
        ens (MeasurementEnsemble): Ensemble; column k's vectors are used.
        k (int): Column index.
        p (TwfParams): Step parameters.

    Returns:
        np.ndarray: Updated estimate.

    Raises:
        NumericalBreakdownError: If inputs are non-finite.
        DimensionError: If x_hat is zero or shapes disagree.
    """
    x_hat = np.asarray(x_hat)
    y_k = np.asarray(y_k, dtype=float)
    if x_hat.shape != (ens.n,) or y_k.shape != (ens.m,):
        raise DimensionError(f"Expected x_hat of length {ens.n} and y_k of length {ens.m}.")
    _check_finite(x_hat, y_k)
    x_norm = np.linalg.norm(x_hat)
    if x_norm == 0:
        raise DimensionError("twf_step needs a nonzero starting point.")
    u = ens.forward(k, x_hat)
    coef = _gradient_coefficients(u, y_k, x_norm, p)
    return x_hat + (p.mu / ens.m) * ens.adjoint(k, coef)


def twf_sweep(X_hat: np.ndarray, y: np.ndarray, ens: MeasurementEnsemble, p: TwfParams) -> np.ndarray:
    """Applies twf_step to every column at once. All-zero columns are left unchanged."""
    _check_finite(X_hat, y)
    x_norm = np.linalg.norm(X_hat, axis=0)[None, :]
    U = ens.forward_all(X_hat)
    coef = _gradient_coefficients(U, y, x_norm, p)
    coef[:, x_norm[0] == 0] = 0.0
    return X_hat + (p.mu / ens.m) * ens.adjoint_all(coef)


def _y_matrix(y: Union[Measurements, np.ndarray], ens: MeasurementEnsemble) -> np.ndarray:
    y = y.y if isinstance(y, Measurements) else np.asarray(y, dtype=float)
    if y.shape != (ens.m, ens.q):
        raise DimensionError(f"y has shape {y.shape}, ensemble expects ({ens.m}, {ens.q}).")
    return y


def run_lrpr_twf(
    y: Union[Measurements, np.ndarray],
    ens: MeasurementEnsemble,
    params: Optional[TwfParams] = None,
    init: Literal["lrpr", "twf"] = "lrpr",
    rank_mode: Optional[RankMode] = None,
    reference: Optional[np.ndarray] = None,
    power_iters: int = 50,
    seed: int = 0,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> Estimate:
    """
    Runs ``params.iterations`` TWF sweeps from either the LRPR initializer or
    the column-wise TWF initializer. No low-rank structure is imposed during
    the iterations.

    Args:
        reference (np.ndarray, optional): Ground truth for the NormErr trace.

    Returns:
        Estimate: X_hat and the per-iteration trace.
    """
    params = params or TwfParams()
    tracer = IterationTracer(reference)
    y_arr = _y_matrix(y, ens)
    r_hat = None
    if init == "lrpr":
        start = lrpr_init(y, ens, rank_mode, power_iters=power_iters, seed=seed, dense_threshold=dense_threshold)
        X_hat, r_hat = start.X_hat.astype(np.result_type(start.X_hat, ens.dtype)), start.r_hat
    elif init == "twf":
        X_hat, _ = twf_init_all(y_arr, ens, power_iters=power_iters, seed=seed, dense_threshold=dense_threshold)
    else:
        raise ConfigurationError(f"Unknown initializer: {init}")
    tracer.record(0, X_hat)
    for t in range(1, params.iterations + 1):
        X_hat = twf_sweep(X_hat, y_arr, ens, params)
        tracer.record(t, X_hat)
    return Estimate(X_hat=X_hat, r_hat=r_hat, trace=tracer.points)


def run_twf(y, ens, params: Optional[TwfParams] = None, reference=None, **kwargs) -> Estimate:
    """Plain TWF: column-wise truncated spectral init, then TWF sweeps."""
    return run_lrpr_twf(y, ens, params, init="twf", reference=reference, **kwargs)


def _projected_iterations(
    start: Estimate, y: np.ndarray, ens: MeasurementEnsemble, params: TwfParams, r: int, tracer: IterationTracer
) -> Estimate:
    U_hat, B_hat = start.U_hat, start.B_hat
    X_hat = start.X_hat.astype(np.result_type(start.X_hat, ens.dtype))
    tracer.record(0, X_hat)
    for t in range(1, params.iterations + 1):
        X_hat = twf_sweep(X_hat, y, ens, params)
        U_hat, s, Vh = truncated_svd(X_hat, r)
        B_hat = s[:, None] * Vh
        X_hat = U_hat @ B_hat
        tracer.record(t, X_hat)
    return Estimate.factored(U_hat, B_hat, trace=tracer.points, degenerate=start.degenerate)


def run_lrpr1(
    y: Union[Measurements, np.ndarray],
    ens: MeasurementEnsemble,
    params: Optional[TwfParams] = None,
    rank_mode: Optional[RankMode] = None,
    reference: Optional[np.ndarray] = None,
    power_iters: int = 50,
    seed: int = 0,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> Estimate:
    """
    LRPR initializer followed by TWF sweeps, each projected back onto the
    rank chosen by the initializer.
    """
    params = params or TwfParams()
    tracer = IterationTracer(reference)
    start = lrpr_init(y, ens, rank_mode, power_iters=power_iters, seed=seed, dense_threshold=dense_threshold)
    return _projected_iterations(start, _y_matrix(y, ens), ens, params, start.r_hat, tracer)


def run_twfproj(
    y: Union[Measurements, np.ndarray],
    ens: MeasurementEnsemble,
    r: int,
    params: Optional[TwfParams] = None,
    reference: Optional[np.ndarray] = None,
    power_iters: int = 50,
    seed: int = 0,
    dense_threshold: int = DENSE_EIG_THRESHOLD,
) -> Estimate:
    """Rank-r projection of the column-wise TWF init, then projected TWF sweeps."""
    params = params or TwfParams()
    tracer = IterationTracer(reference)
    y_arr = _y_matrix(y, ens)
    start = twfproj_init(y_arr, ens, r, power_iters=power_iters, seed=seed, dense_threshold=dense_threshold)
    return _projected_iterations(start, y_arr, ens, params, r, tracer)
