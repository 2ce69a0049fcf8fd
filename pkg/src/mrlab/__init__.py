"""Desk-scale laboratory for moment-matching generator losses."""

from .config import TrainConfig, parse_config, serialize
from .losses import Variant
from .tensor import Tape, Tensor

__all__ = ["TrainConfig", "Tape", "Tensor", "Variant", "parse_config", "serialize"]
__version__ = "0.1.0"
