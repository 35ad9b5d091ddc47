"""The assembled tri-modal forecaster.

Input windows are instance-normalized once, passed through the enabled
branches in parallel, fused by the gate (or by fixed equal weights when
gating is disabled), and the fused output is de-normalized exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tt
from .errors import ConfigError, ShapeError
from .freqbranch import FreqBranch, FreqConfig
from .fusion import GateNetwork, fuse
from .revin import RevIN
from .tensor import Tensor
from .timebranch import TimeBranch
from .visionbranch import VisionBranch, VisionConfig, detect_period

BRANCH_ORDER = ("time", "freq", "vision")

# stable per-component seed streams so disabling one branch never
# perturbs another branch's initialization
_COMPONENT_SEED = {"revin": 0, "time": 1, "freq": 2, "vision": 3, "gate": 4}


@dataclass
class ModelConfig:
    lookback: int = 96
    horizon: int = 96
    revin_eps: float = 1e-5
    time_enabled: bool = True
    freq_enabled: bool = True
    vision_enabled: bool = True
    gated: bool = True
    gate_hidden: int = 32
    ema_alpha: float = 0.3
    freq: FreqConfig = field(default_factory=FreqConfig)
    vision: VisionConfig = field(default_factory=VisionConfig)

    def enabled_branches(self) -> list[str]:
        flags = {
            "time": self.time_enabled,
            "freq": self.freq_enabled,
            "vision": self.vision_enabled,
        }
        names = [name for name in BRANCH_ORDER if flags[name]]
        if not names:
            raise ConfigError("at least one branch must be enabled")
        return names


@dataclass
class ForwardOutput:
    prediction: Tensor                 # (B, T, C), de-normalized
    branch_outputs: dict[str, Tensor]  # normalized-space outputs
    gate_weights: dict[str, np.ndarray]


class TriTSModel:
    def __init__(self, cfg: ModelConfig, channels: int, seed: int = 0,
                 period: int | None = None):
        self.cfg = cfg
        self.channels = channels
        self.seed = seed

        def rng(component: str) -> np.random.Generator:
            return np.random.default_rng([seed, _COMPONENT_SEED[component]])

        self.revin = RevIN(channels, eps=cfg.revin_eps)
        self.branch_names = cfg.enabled_branches()
        self.branches: dict[str, object] = {}
        if cfg.time_enabled:
            self.branches["time"] = TimeBranch(
                cfg.lookback, cfg.horizon, alpha=cfg.ema_alpha, rng=rng("time")
            )
        if cfg.freq_enabled:
            self.branches["freq"] = FreqBranch(
                cfg.lookback, cfg.horizon, channels, cfg.freq, rng=rng("freq")
            )
        if cfg.vision_enabled:
            if period is None:
                period = cfg.vision.period
            if not period:
                raise ConfigError(
                    "vision branch needs a period: set vision.period or pass "
                    "a detected one"
                )
            self.period = int(period)
            self.branches["vision"] = VisionBranch(
                cfg.lookback, cfg.horizon, channels, cfg.vision,
                self.period, rng=rng("vision"),
            )
        else:
            self.period = None
        self.gate = None
        if cfg.gated and len(self.branch_names) >= 2:
            self.gate = GateNetwork(channels, len(self.branch_names),
                                    hidden=cfg.gate_hidden, rng=rng("gate"))

    # -- parameters ----------------------------------------------------------

    def parameters(self) -> list[Tensor]:
        params = list(self.revin.parameters())
        for name in self.branch_names:
            params.extend(self.branches[name].parameters())
        if self.gate is not None:
            params.extend(self.gate.parameters())
        return params

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.data.copy() for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in state:
                raise ShapeError(f"checkpoint missing parameter {p.name!r}")
            arr = np.asarray(state[p.name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(
                    f"checkpoint parameter {p.name!r} has shape {arr.shape}, "
                    f"model expects {p.shape}"
                )
            p.data = arr.copy()

    # -- forward ---------------------------------------------------------------

    def forward(self, x: np.ndarray) -> ForwardOutput:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != self.cfg.lookback \
                or x.shape[2] != self.channels:
            raise ShapeError(
                f"expected (B, {self.cfg.lookback}, {self.channels}), "
                f"got {x.shape}"
            )
        normalized, stats = self.revin.normalize(x)
        outputs = {
            name: self.branches[name](normalized) for name in self.branch_names
        }
        ordered = [outputs[name] for name in self.branch_names]
        if self.gate is not None:
            weights = self.gate(ordered)
        else:
            uniform = 1.0 / len(ordered)
            weights = [
                Tensor(np.full(ordered[0].shape, uniform)) for _ in ordered
            ]
        fused = fuse(ordered, weights)
        prediction = self.revin.denormalize(fused, stats)
        gate_weights = {
            name: w.data for name, w in zip(self.branch_names, weights)
        }
        return ForwardOutput(prediction=prediction, branch_outputs=outputs,
                             gate_weights=gate_weights)

    def predict(self, x: np.ndarray) -> np.ndarray:
        with tt.no_grad():
            return self.forward(x).prediction.data

    def loss(self, x: np.ndarray, y: np.ndarray) -> tuple[Tensor, ForwardOutput]:
        out = self.forward(x)
        return tt.mean_squared_error(out.prediction, y), out


def detect_dataset_period(values: np.ndarray, lookback: int,
                          default_period: int = 24) -> int:
    """Dominant period of a series estimated on stacked lookback windows.

    The series is cut into consecutive non-overlapping windows of the model
    lookback so the estimate obeys the fold constraint (P <= L/2) and is
    averaged over many windows.
    """
    values = np.asarray(values, dtype=np.float64)
    rows, channels = values.shape
    count = max(1, rows // lookback)
    usable = count * lookback
    if rows < lookback:
        raise ConfigError(
            f"need at least {lookback} rows to detect a period, got {rows}"
        )
    windows = values[:usable].reshape(count, lookback, channels)
    return detect_period(windows, default_period=default_period).period
