"""Reversible per-window instance normalization.

Each lookback window is z-scored per channel with its own statistics, an
optional learnable affine is applied, and the inverse transform restores
model outputs to the input scale using the same statistics.

Two variants live here: :class:`RevIN` normalizes raw input windows (its
statistics do not depend on any parameter, so they enter the graph as
constants), and the ``graph_*`` functions normalize tensors that are already
parameter-dependent, keeping the statistics differentiable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .errors import ContractError, ShapeError
from .tensor import Tensor

# Lifts exact-zero variances without perturbing any representable value.
_VAR_FLOOR = 1e-24


@dataclass
class InstanceStats:
    """Per-window, per-channel statistics captured by a normalize call."""

    mean: np.ndarray   # (B, 1, C)
    scale: np.ndarray  # (B, 1, C), sigma + eps
    eps: float


class RevIN:
    """Instance normalization with learnable affine scale/shift per channel."""

    def __init__(self, channels: int, eps: float = 1e-5, name: str = "revin"):
        self.channels = channels
        self.eps = float(eps)
        self.gamma = tt.parameter(np.ones(channels), f"{name}.gamma")
        self.beta = tt.parameter(np.zeros(channels), f"{name}.beta")

    def parameters(self) -> list[Tensor]:
        return [self.gamma, self.beta]

    def normalize(self, x: np.ndarray) -> tuple[Tensor, InstanceStats]:
        """(B, L, C) window batch -> normalized graph tensor plus its stats."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3:
            raise ShapeError(f"revin expects (B, L, C), got {x.shape}")
        if x.shape[1] < 2:
            raise ContractError(
                f"window length {x.shape[1]} < 2: standard deviation undefined"
            )
        if x.shape[2] != self.channels:
            raise ShapeError(
                f"revin configured for {self.channels} channels, got {x.shape}"
            )
        mean = x.mean(axis=1, keepdims=True)
        var = x.var(axis=1, keepdims=True)
        scale = np.sqrt(var + _VAR_FLOOR) + self.eps
        stats = InstanceStats(mean=mean, scale=scale, eps=self.eps)
        base = Tensor((x - mean) / scale)
        return tt.add(tt.mul(base, self.gamma), self.beta), stats

    def denormalize(self, y: Tensor, stats: InstanceStats) -> Tensor:
        """Exact algebraic inverse of :meth:`normalize` on (B, T, C) outputs."""
        if y.ndim != 3 or y.shape[0] != stats.mean.shape[0] \
                or y.shape[2] != stats.mean.shape[2]:
            raise ShapeError(
                f"denormalize: output {y.shape} does not match stats for "
                f"batch {stats.mean.shape[0]} x channels {stats.mean.shape[2]}"
            )
        centered = tt.mul(tt.add(y, tt.mul(self.beta, -1.0)),
                          tt.reciprocal(self.gamma))
        return tt.add(tt.mul(centered, Tensor(stats.scale)), Tensor(stats.mean))


def graph_instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float,
                        axis: int = 1) -> tuple[Tensor, Tensor, Tensor]:
    """Differentiable instance norm along ``axis``.

    Returns (normalized, mean, scale) with mean/scale kept in the graph so
    the inverse and the chain rule through the statistics stay exact.
    """
    mean = tt.reduce_mean(x, axis=axis, keepdims=True)
    centered = tt.add(x, tt.mul(mean, -1.0))
    var = tt.reduce_mean(tt.mul(centered, centered), axis=axis, keepdims=True)
    sigma = tt.sqrt(tt.add(var, _VAR_FLOOR))
    scale = tt.add(sigma, eps)
    normalized = tt.add(tt.mul(tt.mul(centered, tt.reciprocal(scale)), gamma), beta)
    return normalized, mean, scale


def graph_instance_denorm(y: Tensor, gamma: Tensor, beta: Tensor,
                          mean: Tensor, scale: Tensor) -> Tensor:
    """Inverse of :func:`graph_instance_norm` with the captured statistics."""
    centered = tt.mul(tt.add(y, tt.mul(beta, -1.0)), tt.reciprocal(gamma))
    return tt.add(tt.mul(centered, scale), mean)
