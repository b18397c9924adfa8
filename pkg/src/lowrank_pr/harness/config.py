import json
import logging
from typing import List, Literal, Optional, Tuple, get_args

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..algorithms.twf import TwfParams
from ..errors import ConfigurationError

logger = logging.getLogger(__name__)

__all__ = ["ALGORITHM_NAMES", "ExperimentConfig", "load_config"]

AlgorithmName = Literal[
    "lrpr-init",
    "lrpr-init-gap",
    "lrpr-init-threshold",
    "lrpr-init-2r",
    "lrpr-init-partitioned",
    "lrpr-same",
    "twf-init",
    "twfproj-init",
    "twf",
    "lrpr-twf",
    "twfproj",
    "lrpr1",
    "lrpr2",
]
ALGORITHM_NAMES = list(get_args(AlgorithmName))


def _is_integer(value: float, tol: float = 1e-9) -> bool:
    return abs(value - round(value)) <= tol


class ExperimentConfig(BaseModel):
    """
    Monte-Carlo experiment description.

    The grid is the product of ``fields`` x ``noise_halfwidths`` x ``m_over_n``
    x ``q_list``; every cell runs ``trials`` independent trials of every
    algorithm in ``algorithms``. Unknown keys are rejected.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    n: int = Field(100, ge=1)
    r: int = Field(2, ge=1)
    q_list: List[int] = Field(default_factory=lambda: [100, 1000], min_length=1)
    m_over_n: List[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0], min_length=1)
    fields: List[Literal["real", "complex"]] = Field(default_factory=lambda: ["real"], min_length=1)
    ensemble: Literal["gaussian", "cdp"] = "gaussian"
    cdp_dims: Optional[Tuple[int, int]] = None
    noise_halfwidths: List[float] = Field(default_factory=lambda: [0.0], min_length=1)
    trials: int = Field(100, ge=1)
    algorithms: List[AlgorithmName] = Field(default_factory=lambda: ["lrpr-init"], min_length=1)
    rank_mode: Literal["known", "gap"] = "known"
    twf: TwfParams = Field(default_factory=TwfParams)
    iterations: int = Field(100, ge=0)
    power_iters: int = Field(50, ge=1)
    cgls_iters: int = Field(3, ge=1)
    dense_eig_threshold: int = Field(2000, ge=1)
    dense_ls_threshold: int = Field(20000, ge=1)
    fresh_over_n: float = Field(1.0, gt=0)
    record_traces: bool = True
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    timing_mode: bool = False
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def check_grid(self):
        if self.r > self.n or any(self.r > q for q in self.q_list):
            raise ValueError(f"r={self.r} must not exceed n={self.n} or any q in {self.q_list}.")
        if any(q < 1 for q in self.q_list):
            raise ValueError("Every q must be positive.")
        if any(w < 0 for w in self.noise_halfwidths):
            raise ValueError("Noise halfwidths must be non-negative.")
        for ratio in self.m_over_n:
            m = ratio * self.n
            if m < 1 or not _is_integer(m):
                raise ValueError(f"m/n={ratio} gives a non-integer m for n={self.n}.")
            if self.ensemble == "cdp" and not _is_integer(ratio):
                raise ValueError(f"CDP needs m to be a multiple of n; m/n={ratio} is not an integer.")
        if self.ensemble == "cdp":
            if self.cdp_dims is None or self.cdp_dims[0] * self.cdp_dims[1] != self.n:
                raise ValueError(f"cdp_dims={self.cdp_dims} must multiply to n={self.n}.")
        if "lrpr-init-partitioned" in self.algorithms:
            m_fresh = self.fresh_over_n * self.n
            if not _is_integer(m_fresh):
                raise ValueError(f"fresh_over_n={self.fresh_over_n} gives a non-integer m_fresh.")
            if self.ensemble == "cdp" and not _is_integer(self.fresh_over_n):
                raise ValueError("CDP fresh measurements must be a multiple of n.")
        return self

    def m_for(self, ratio: float) -> int:
        return int(round(ratio * self.n))

    @property
    def twf_params(self) -> TwfParams:
        """TWF parameters with the experiment-wide iteration count."""
        return self.twf.model_copy(update={"iterations": self.iterations})

    @property
    def m_fresh(self) -> int:
        return int(round(self.fresh_over_n * self.n))

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        """
        Loads a flat JSON experiment configuration.

        Raises:
            FileNotFoundError: If the file does not exist.
            ConfigurationError: If the JSON is malformed or fails validation.
        """
        try:
            with open(path, "r") as f:
                raw = json.load(f)
            logger.info(f"Loaded experiment config from {path}")
        except FileNotFoundError:
            logger.error(f"Config file not found: {path}")
            raise
        except json.JSONDecodeError as e:
            logger.error(f"Error in from_file decoding {path}: {e}")
            raise ConfigurationError(f"Config file {path} is not valid JSON: {e}") from e
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            logger.error(f"Error in from_file validating {path}: {e}")
            raise ConfigurationError(f"Invalid experiment config {path}:\n{e}") from e

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Returns a validated copy with the given keys replaced; None values are ignored."""
        updates = {key: value for key, value in overrides.items() if value is not None}
        try:
            return ExperimentConfig.model_validate({**self.model_dump(), **updates})
        except ValidationError as e:
            logger.error(f"Error in with_overrides: {e}")
            raise ConfigurationError(str(e)) from e


def load_config(path: str) -> ExperimentConfig:
    return ExperimentConfig.from_file(path)
