"""Frequency-domain branch: multi-resolution wavelet mixing.

The normalized window is decomposed into a top-level approximation plus one
detail per level. Each of the m+1 components is owned by an independent
resolution branch (own normalization, patching, dual-stage mixer and head)
that predicts the component's future coefficients; the predicted pyramid is
then inverted back to the time domain and cropped to the horizon.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from . import tensor as tt
from .errors import ConfigError
from .revin import graph_instance_denorm, graph_instance_norm
from .tensor import Tensor
from .wavelet import (
    analysis_matrices,
    coeff_lengths,
    get_filter,
    max_levels,
    synthesis_matrices,
)


@dataclass
class FreqConfig:
    wavelet: str = "db2"
    levels: int = 3
    patch_len: int = 16
    d_model: int = 32
    eps: float = 1e-5


def patch_mixer(z: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Mix along the patch axis: transpose, two-layer MLP, transpose back.

    ``z`` is (..., n_patch, d); the map runs over n_patch for every embedding
    coordinate independently.
    """
    axes = tuple(range(z.ndim - 2)) + (z.ndim - 1, z.ndim - 2)
    zt = tt.permute(z, axes)                       # (..., d, n_patch)
    hidden = tt.gelu(tt.add(tt.matmul(zt, w1), b1))
    mixed = tt.add(tt.matmul(hidden, w2), b2)
    return tt.permute(mixed, axes)


def embedding_mixer(z: Tensor, w1: Tensor, b1: Tensor, w2: Tensor,
                    b2: Tensor) -> Tensor:
    """Mix along the embedding axis with a residual connection."""
    hidden = tt.gelu(tt.add(tt.matmul(z, w1), b1))
    return tt.add(tt.add(tt.matmul(hidden, w2), b2), z)


class ResolutionBranch:
    """One wavelet component: normalize, patch, mix twice, map to the future."""

    def __init__(self, tag: str, coeff_len: int, future_len: int, channels: int,
                 cfg: FreqConfig, rng: np.random.Generator):
        self.tag = tag
        self.coeff_len = coeff_len
        self.future_len = future_len
        self.patch_len = cfg.patch_len
        self.n_patch = ceil(coeff_len / cfg.patch_len)
        self.padded_len = self.n_patch * cfg.patch_len
        self.eps = cfg.eps
        d = cfg.d_model
        hidden_p = max(4, 2 * self.n_patch)
        hidden_e = 2 * d
        name = f"freq.{tag}"

        def init(shape, fan_in):
            return rng.normal(scale=1.0 / np.sqrt(fan_in), size=shape)

        self.gamma = tt.parameter(np.ones(channels), f"{name}.gamma")
        self.beta = tt.parameter(np.zeros(channels), f"{name}.beta")
        self.w_embed = tt.parameter(init((cfg.patch_len, d), cfg.patch_len),
                                    f"{name}.w_embed")
        self.b_embed = tt.parameter(np.zeros(d), f"{name}.b_embed")
        self.pm_w1 = tt.parameter(init((self.n_patch, hidden_p), self.n_patch),
                                  f"{name}.pm_w1")
        self.pm_b1 = tt.parameter(np.zeros(hidden_p), f"{name}.pm_b1")
        self.pm_w2 = tt.parameter(init((hidden_p, self.n_patch), hidden_p),
                                  f"{name}.pm_w2")
        self.pm_b2 = tt.parameter(np.zeros(self.n_patch), f"{name}.pm_b2")
        self.em_w1 = tt.parameter(init((d, hidden_e), d), f"{name}.em_w1")
        self.em_b1 = tt.parameter(np.zeros(hidden_e), f"{name}.em_b1")
        self.em_w2 = tt.parameter(init((hidden_e, d), hidden_e), f"{name}.em_w2")
        self.em_b2 = tt.parameter(np.zeros(d), f"{name}.em_b2")
        self.w_head = tt.parameter(init((self.n_patch * d, future_len),
                                        self.n_patch * d), f"{name}.w_head")
        self.b_head = tt.parameter(np.zeros(future_len), f"{name}.b_head")

    def parameters(self) -> list[Tensor]:
        return [
            self.gamma, self.beta, self.w_embed, self.b_embed,
            self.pm_w1, self.pm_b1, self.pm_w2, self.pm_b2,
            self.em_w1, self.em_b1, self.em_w2, self.em_b2,
            self.w_head, self.b_head,
        ]

    def forward(self, coeffs: Tensor, denormalize: bool = True) -> Tensor:
        """(B, coeff_len, C) -> (B, future_len, C) predicted coefficients."""
        batch, _, channels = coeffs.shape
        normed, mean, scale = graph_instance_norm(
            coeffs, self.gamma, self.beta, self.eps, axis=1
        )
        if self.padded_len > self.coeff_len:
            pad = Tensor(np.zeros((batch, self.padded_len - self.coeff_len,
                                   channels)))
            normed = tt.concat([normed, pad], axis=1)
        per_channel = tt.permute(normed, (0, 2, 1))  # (B, C, padded)
        patches = tt.reshape(per_channel,
                             (batch, channels, self.n_patch, self.patch_len))
        z = tt.add(tt.matmul(patches, self.w_embed), self.b_embed)
        z = patch_mixer(z, self.pm_w1, self.pm_b1, self.pm_w2, self.pm_b2)
        z = embedding_mixer(z, self.em_w1, self.em_b1, self.em_w2, self.em_b2)
        flat = tt.reshape(z, (batch, channels, self.n_patch * z.shape[-1]))
        future = tt.add(tt.matmul(flat, self.w_head), self.b_head)
        future = tt.permute(future, (0, 2, 1))       # (B, future_len, C)
        if not denormalize:
            return future
        return graph_instance_denorm(future, self.gamma, self.beta, mean, scale)


class FreqBranch:
    """m-level analysis, independent per-component branches, synthesis."""

    def __init__(self, lookback: int, horizon: int, channels: int,
                 cfg: FreqConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.filter = get_filter(cfg.wavelet)
        taps = self.filter.taps
        feasible = max_levels(lookback, taps)
        if cfg.levels < 1 or cfg.levels > feasible:
            raise ConfigError(
                f"lookback {lookback} with {cfg.wavelet} supports at most "
                f"{feasible} levels, got {cfg.levels}"
            )
        self.lookback = lookback
        self.horizon = horizon
        self.levels = cfg.levels
        self.in_lengths = coeff_lengths(lookback, taps, cfg.levels)
        self.out_lengths = coeff_lengths(horizon, taps, cfg.levels)

        # components ordered [A_m, D_m, ..., D_1]
        tags = [f"A{cfg.levels}"] + [f"D{i}" for i in range(cfg.levels, 0, -1)]
        comp_in = [self.in_lengths[-1]] + [
            self.in_lengths[i] for i in range(cfg.levels, 0, -1)
        ]
        comp_out = [self.out_lengths[-1]] + [
            self.out_lengths[i] for i in range(cfg.levels, 0, -1)
        ]
        self.branches = [
            ResolutionBranch(tag, cin, cout, channels, cfg, rng)
            for tag, cin, cout in zip(tags, comp_in, comp_out)
        ]

        self._analysis = [
            tuple(Tensor(m) for m in analysis_matrices(self.in_lengths[i],
                                                       self.filter))
            for i in range(cfg.levels)
        ]
        synth = []
        for level in range(cfg.levels, 0, -1):
            out_len = self.out_lengths[level - 1]
            s_lo, s_hi = synthesis_matrices(self.out_lengths[level],
                                            self.filter, out_len)
            synth.append((Tensor(s_lo), Tensor(s_hi)))
        self._synthesis = synth

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for branch in self.branches:
            out.extend(branch.parameters())
        return out

    def decompose(self, x: Tensor) -> list[Tensor]:
        """[A_m, D_m, ..., D_1] coefficient tensors of the input."""
        approx = x
        details: list[Tensor] = []
        for m_lo, m_hi in self._analysis:
            details.append(tt.matmul(m_hi, approx))
            approx = tt.matmul(m_lo, approx)
        return [approx, *reversed(details)]

    def reconstruct(self, components: list[Tensor]) -> Tensor:
        """Invert a predicted [A_m, D_m, ..., D_1] pyramid to (B, T, C)."""
        approx = components[0]
        for (s_lo, s_hi), detail in zip(self._synthesis, components[1:]):
            approx = tt.add(tt.matmul(s_lo, approx), tt.matmul(s_hi, detail))
        return approx

    def forward(self, x: Tensor, denormalize: bool = True) -> Tensor:
        components = self.decompose(x)
        futures = [
            branch.forward(comp, denormalize=denormalize)
            for branch, comp in zip(self.branches, components)
        ]
        return self.reconstruct(futures)

    __call__ = forward
