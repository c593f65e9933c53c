"""Bit-exact stochastic-computing MLP simulator with a per-layer
sequence-length planner."""

from .bitstream import Bitstream, Encoding, decode, truncate
from .model import Dataset, MlpModel, forward_fp, load_idx, train_sgd
from .scinfer import LengthConfig, ScInferenceReport, classify, forward_sc

__version__ = "0.1.0"

__all__ = [
    "Bitstream", "Encoding", "decode", "truncate",
    "Dataset", "MlpModel", "forward_fp", "load_idx", "train_sgd",
    "LengthConfig", "ScInferenceReport", "classify", "forward_sc",
    "__version__",
]
