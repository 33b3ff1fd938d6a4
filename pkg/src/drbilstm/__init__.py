"""Dependent-reading bidirectional LSTM for natural language inference.

A numpy implementation with its own reverse-mode autodiff, SNLI
preprocessing, training, ensembling and error analysis.
"""

__version__ = "0.1.0"

from .config import ModelConfig, TrainConfig  # noqa: E402
from .errors import DrBilstmError  # noqa: E402

__all__ = ["DrBilstmError", "ModelConfig", "TrainConfig", "__version__"]
