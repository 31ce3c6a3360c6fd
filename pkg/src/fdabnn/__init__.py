"""Binary neural networks trained with a Fourier-series sign gradient."""

from .adapter import AlphaSchedule, NoiseAdapter, alpha_at
from .autograd import Tensor, backward, custom_node
from .config import TrainConfig, load_config
from .models import build_model
from .schedules import ScheduleSetting, n_at
from .surrogates import SurrogateSpec

__all__ = [
    "AlphaSchedule", "NoiseAdapter", "ScheduleSetting", "SurrogateSpec", "Tensor", "TrainConfig",
    "alpha_at", "backward", "build_model", "custom_node", "load_config", "n_at",
]
__version__ = "0.1.0"
