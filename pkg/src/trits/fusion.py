"""Scale-aware gated fusion of branch outputs.

A small network reads the concatenated branch outputs and produces one
weight per branch, per time step and per channel; the weights are a softmax,
so the fused output is a convex combination of the branch outputs.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .errors import ContractError, ShapeError
from .tensor import Tensor


class GateNetwork:
    """Two-layer map from concatenated branch features to per-branch weights.

    The output projection starts at zero so training begins from exactly
    uniform weights.
    """

    def __init__(self, channels: int, n_branches: int, hidden: int = 32,
                 rng: np.random.Generator | None = None, name: str = "gate"):
        if n_branches < 2:
            raise ContractError(f"gating needs >= 2 branches, got {n_branches}")
        rng = rng or np.random.default_rng(0)
        self.channels = channels
        self.n_branches = n_branches
        self.w1 = tt.parameter(
            rng.normal(scale=1.0 / np.sqrt(n_branches * channels),
                       size=(n_branches * channels, hidden)),
            f"{name}.w1",
        )
        self.b1 = tt.parameter(np.zeros(hidden), f"{name}.b1")
        self.w2 = tt.parameter(np.zeros((hidden, n_branches * channels)),
                               f"{name}.w2")
        self.b2 = tt.parameter(np.zeros(n_branches * channels), f"{name}.b2")

    def parameters(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, branch_outputs: list[Tensor]) -> list[Tensor]:
        """k tensors (B, T, C) -> k weight tensors (B, T, C) summing to one."""
        if len(branch_outputs) != self.n_branches:
            raise ShapeError(
                f"gate built for {self.n_branches} branches, "
                f"got {len(branch_outputs)}"
            )
        shape = branch_outputs[0].shape
        for out in branch_outputs[1:]:
            if out.shape != shape:
                raise ShapeError(
                    f"branch outputs disagree: {shape} vs {out.shape}"
                )
        batch, horizon, channels = shape
        feats = tt.concat(branch_outputs, axis=-1)
        logits = tt.add(
            tt.matmul(tt.gelu(tt.add(tt.matmul(feats, self.w1), self.b1)),
                      self.w2),
            self.b2,
        )
        stacked = tt.reshape(logits, (batch, horizon, self.n_branches, channels))
        weights = tt.softmax(stacked, axis=2)
        return [
            tt.reshape(tt.narrow(weights, 2, k, 1), (batch, horizon, channels))
            for k in range(self.n_branches)
        ]

    __call__ = forward


def fuse(branch_outputs: list[Tensor], weights: list[Tensor]) -> Tensor:
    """Weighted sum of branch outputs (elementwise convex combination)."""
    if len(branch_outputs) != len(weights):
        raise ShapeError(
            f"{len(branch_outputs)} outputs vs {len(weights)} weight tensors"
        )
    total = tt.mul(branch_outputs[0], weights[0])
    for out, w in zip(branch_outputs[1:], weights[1:]):
        total = tt.add(total, tt.mul(out, w))
    return total


def mean_gate_report(weight_batches: list[dict[str, np.ndarray]]) -> dict[str, float]:
    """Average gate weight per modality over batch, time and channel.

    ``weight_batches`` holds one dict per evaluated batch mapping modality
    name to its (B, T, C) weight array.
    """
    if not weight_batches:
        raise ContractError("gate report needs at least one evaluated batch")
    names = list(weight_batches[0])
    sums = {name: 0.0 for name in names}
    count = 0
    for entry in weight_batches:
        for name in names:
            sums[name] += float(entry[name].sum())
        count += entry[names[0]].size
    return {name: sums[name] / count for name in names}
