"""FAN-UNet: Fourier Analysis Network layers and a U-Net segmenter on a NumPy autodiff engine."""

from .fan import FANLayer1D, FANLayer2D, FanSeriesParams, fan_series_eval
from .fourier import FourierSeries, fourier_coefficients, fourier_eval
from .losses import LossConfig, MetricsReport, combined_loss, evaluate
from .model import FanUNet, UNetConfig, VisionFanBlock, VisionFanBlockConfig, count_parameters
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = [
    "FANLayer1D",
    "FANLayer2D",
    "FanSeriesParams",
    "FanUNet",
    "FourierSeries",
    "LossConfig",
    "MetricsReport",
    "Tensor",
    "UNetConfig",
    "VisionFanBlock",
    "VisionFanBlockConfig",
    "combined_loss",
    "count_parameters",
    "evaluate",
    "fan_series_eval",
    "fourier_coefficients",
    "fourier_eval",
    "no_grad",
]
