"""Tri-modal long-horizon time series forecasting.

Three parallel views of each instance-normalized lookback window — an
EMA-smoothed linear map, multi-resolution wavelet mixing, and a
period-folded image run through bidirectional selective-SSM blocks — are
combined per time step and channel by a learned softmax gate.
"""

from .dataio import Dataset, SplitSpec, load_csv, season_trend_cov_ratio, split
from .model import ModelConfig, TriTSModel
from .tensor import Adam, Tensor
from .trainer import TrainConfig, ablate, evaluate, prepare_splits, train

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Dataset",
    "ModelConfig",
    "SplitSpec",
    "Tensor",
    "TrainConfig",
    "TriTSModel",
    "ablate",
    "evaluate",
    "load_csv",
    "prepare_splits",
    "season_trend_cov_ratio",
    "split",
    "train",
]
