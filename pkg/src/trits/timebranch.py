"""Time-domain branch: EMA trend extraction into a streaming linear head.

The trend recurrence seeds from the first sample and keeps the full input
length, so no padding is involved; the head is a pure affine map shared
across channels (no activation, to keep the branch a linear anchor).
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .errors import ContractError, ShapeError
from .tensor import Tensor


def ema_decompose(x: Tensor, alpha: float) -> Tensor:
    """trend[0] = x[0]; trend[t] = alpha * x[t] + (1 - alpha) * trend[t-1]."""
    if not 0.0 < alpha < 1.0:
        raise ContractError(f"ema alpha must lie in (0, 1), got {alpha}")
    length = x.shape[1]
    head = tt.narrow(x, 1, 0, 1)
    if length == 1:
        return head
    rest = tt.mul(tt.narrow(x, 1, 1, length - 1), alpha)
    driven = tt.concat([head, rest], axis=1)
    return tt.linear_scan(Tensor(np.float64(1.0 - alpha)), driven, axis=1)


def time_forward(trend: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """(B, L, C) trend -> (B, T, C) via an affine map applied per channel."""
    if trend.ndim != 3 or trend.shape[1] != weight.shape[0]:
        raise ShapeError(
            f"time head expects (B, {weight.shape[0]}, C), got {trend.shape}"
        )
    per_channel = tt.permute(trend, (0, 2, 1))           # (B, C, L)
    mapped = tt.add(tt.matmul(per_channel, weight), bias)  # (B, C, T)
    return tt.permute(mapped, (0, 2, 1))


class TimeBranch:
    """EMA smoothing followed by a lookback-to-horizon linear map."""

    def __init__(self, lookback: int, horizon: int, alpha: float = 0.3,
                 rng: np.random.Generator | None = None, name: str = "time"):
        if not 0.0 < alpha < 1.0:
            raise ContractError(f"ema alpha must lie in (0, 1), got {alpha}")
        rng = rng or np.random.default_rng(0)
        self.alpha = float(alpha)
        self.lookback = lookback
        self.horizon = horizon
        self.weight = tt.parameter(
            rng.normal(scale=1.0 / np.sqrt(lookback), size=(lookback, horizon)),
            f"{name}.weight",
        )
        self.bias = tt.parameter(np.zeros(horizon), f"{name}.bias")

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def forward(self, x: Tensor) -> Tensor:
        return time_forward(ema_decompose(x, self.alpha), self.weight, self.bias)

    __call__ = forward
