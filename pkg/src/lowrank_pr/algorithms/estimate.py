import logging
import time
from dataclasses import dataclass, field
from typing import List, Literal, NamedTuple, Optional

import numpy as np

from ..errors import ConfigurationError
from ..metrics import norm_err

logger = logging.getLogger(__name__)

__all__ = ["Estimate", "IterationTracer", "RankMode", "TracePoint", "CONVERGED_NORM_ERR"]

CONVERGED_NORM_ERR = 1e-10


class TracePoint(NamedTuple):
    iteration: int
    norm_err: float
    elapsed: float


@dataclass(frozen=True)
class RankMode:
    """
    How the initializer chooses the rank.

    Attributes:
        kind (str): "known", "gap" (largest eigen-gap) or "threshold".
        r (int, optional): The rank for the "known" kind.
        lambda_min (float, optional): Lower bound on the smallest signal
            eigenvalue for the "threshold" kind.
        max_rank (int): Number of eigenvalues searched when the spectrum is not
            computed densely.
    """
    kind: Literal["known", "gap", "threshold"] = "gap"
    r: Optional[int] = None
    lambda_min: Optional[float] = None
    max_rank: int = 10

    def __post_init__(self):
        if self.kind == "known" and (self.r is None or self.r < 1):
            raise ConfigurationError("RankMode 'known' needs a positive r.")
        if self.kind == "threshold" and (self.lambda_min is None or self.lambda_min <= 0):
            raise ConfigurationError("RankMode 'threshold' needs a positive lambda_min.")
        if self.kind not in ("known", "gap", "threshold"):
            raise ConfigurationError(f"Unknown rank mode: {self.kind}")

    @classmethod
    def known(cls, r: int) -> "RankMode":
        return cls(kind="known", r=r)

    @classmethod
    def gap(cls, max_rank: int = 10) -> "RankMode":
        return cls(kind="gap", max_rank=max_rank)

    @classmethod
    def threshold(cls, lambda_min: float, max_rank: int = 10) -> "RankMode":
        return cls(kind="threshold", lambda_min=lambda_min, max_rank=max_rank)


@dataclass(eq=False)
class Estimate:
    """
    Output of every recovery routine.

    Attributes:
        X_hat (np.ndarray): n x q estimate.
        U_hat (np.ndarray, optional): n x r_hat orthonormal basis, when the
            algorithm works in factored form.
        B_hat (np.ndarray, optional): r_hat x q coefficients; X_hat = U_hat @ B_hat.
        r_hat (int, optional): Rank used or estimated.
        trace (list of TracePoint): (iteration, NormErr, elapsed seconds) per
            iteration; NormErr is NaN when no reference was supplied.
        degenerate (bool): True if some eigenproblem was numerically zero.
        spectrum (np.ndarray, optional): Eigenvalues of the subspace matrix.
    """
    X_hat: np.ndarray
    U_hat: Optional[np.ndarray] = None
    B_hat: Optional[np.ndarray] = None
    r_hat: Optional[int] = None
    trace: List[TracePoint] = field(default_factory=list)
    degenerate: bool = False
    spectrum: Optional[np.ndarray] = None

    @classmethod
    def factored(cls, U_hat: np.ndarray, B_hat: np.ndarray, **kwargs) -> "Estimate":
        return cls(X_hat=U_hat @ B_hat, U_hat=U_hat, B_hat=B_hat, r_hat=U_hat.shape[1], **kwargs)

    @property
    def converged(self) -> bool:
        return bool(self.trace) and self.trace[-1].norm_err < CONVERGED_NORM_ERR


class IterationTracer:
    """
    Records one TracePoint per iteration.

    The clock starts at construction so iteration 0 includes initialization.
    Time spent computing NormErr against the reference is excluded.
    """

    def __init__(self, reference: Optional[np.ndarray] = None):
        self.reference = reference
        self.points: List[TracePoint] = []
        self._start = time.perf_counter()
        self._excluded = 0.0

    def record(self, iteration: int, X_hat: np.ndarray) -> None:
        now = time.perf_counter()
        elapsed = now - self._start - self._excluded
        err = norm_err(self.reference, X_hat) if self.reference is not None else float("nan")
        self._excluded += time.perf_counter() - now
        self.points.append(TracePoint(iteration, err, elapsed))
        logger.debug(f"iteration {iteration}: norm_err={err:.3e} elapsed={elapsed:.3f}s")
