"""Ready-made experiment grids."""
import logging
from typing import Callable, Dict

from ..errors import ConfigurationError
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

__all__ = ["PRESETS", "get_preset"]

_INIT_COMPARISON = ["lrpr-init", "lrpr-init-gap", "lrpr-init-2r", "lrpr-same", "twf-init", "twfproj-init"]


def init_real() -> ExperimentConfig:
    """Initialization errors and rank recovery for real Gaussian measurements."""
    return ExperimentConfig(
        n=100,
        r=2,
        q_list=[100, 1000],
        m_over_n=[0.1, 0.5, 1.0],
        fields=["real"],
        trials=100,
        algorithms=_INIT_COMPARISON,
    )


def init_complex() -> ExperimentConfig:
    """Initialization errors for complex Gaussian measurements, up to m = 7n."""
    return ExperimentConfig(
        n=100,
        r=2,
        q_list=[100, 1000],
        m_over_n=[0.1, 0.5, 1.0, 7.0],
        fields=["complex"],
        trials=100,
        algorithms=["lrpr-init", "lrpr-init-gap", "twf-init", "twfproj-init"],
    )


def init_noisy() -> ExperimentConfig:
    """Initializers under uniform noise of halfwidth 1, next to the noise-free baseline."""
    return ExperimentConfig(
        n=100,
        r=2,
        q_list=[1000],
        m_over_n=[1.0],
        fields=["real"],
        noise_halfwidths=[0.0, 1.0],
        trials=100,
        algorithms=["lrpr-init", "twf-init", "twfproj-init"],
    )


def _convergence(ratio: float, algorithms) -> ExperimentConfig:
    return ExperimentConfig(
        n=100,
        r=2,
        q_list=[1000],
        m_over_n=[ratio],
        fields=["complex"],
        trials=5,
        iterations=100,
        algorithms=algorithms,
        timing_mode=True,
    )


def converge_8n() -> ExperimentConfig:
    """Convergence of TWF from both initializers at m = 8n."""
    return _convergence(8.0, ["twf", "lrpr-twf"])


def converge_08n() -> ExperimentConfig:
    """Convergence of every iterative method at m = 0.8n."""
    return _convergence(0.8, ["twf", "lrpr-twf", "twfproj", "lrpr1", "lrpr2"])


def converge_06n() -> ExperimentConfig:
    """Convergence of the low-rank methods at m = 0.6n."""
    return _convergence(0.6, ["twfproj", "lrpr1", "lrpr2"])


PRESETS: Dict[str, Callable[[], ExperimentConfig]] = {
    "init-real": init_real,
    "init-complex": init_complex,
    "init-noisy": init_noisy,
    "converge-8n": converge_8n,
    "converge-0.8n": converge_08n,
    "converge-0.6n": converge_06n,
}


def get_preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        logger.error(f"Unknown preset requested: {name}")
        raise ConfigurationError(f"Unknown preset '{name}'; choose from {sorted(PRESETS)}.")
    return PRESETS[name]()
