"""Vision-domain branch: period-folded images through bidirectional SSM blocks.

The lookback window is folded by its dominant period into an S x P image,
cut into square patches, embedded, and run through a stack of blocks whose
token mixer is a selective state space scan executed in both directions.
Scan cost is linear in the token count.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import ceil

import numpy as np

from . import tensor as tt
from .errors import ConfigError, ContractError, NumericalError
from .tensor import Tensor


@dataclass
class VisionConfig:
    patch: int = 8
    depth: int = 2
    d_model: int = 64
    d_state: int = 16
    expand: int = 2
    period: int = 0      # 0 = detect from data
    dt_max: float = 1.0  # upper bound of the positive step-size map
    ln_eps: float = 1e-6


@dataclass
class PeriodEstimate:
    period: int
    acf_score: float
    fold_rows: int


def autocorrelation(x: np.ndarray, max_lag: int) -> np.ndarray:
    """Per-lag-normalized ACF averaged over batch and channels.

    ``acf[k] = mean_series[ (sum_t xc_t xc_{t+k} / (n-k)) / variance ]`` for
    k = 0..max_lag; constant series are excluded from the average.
    """
    x = np.asarray(x, dtype=np.float64)
    batch, length, channels = x.shape
    centered = x - x.mean(axis=1, keepdims=True)
    series = centered.transpose(0, 2, 1).reshape(batch * channels, length)
    var = (series * series).mean(axis=1)
    keep = var > 0.0
    if not keep.any():
        raise ContractError("autocorrelation undefined for all-constant input")
    series = series[keep]
    var = var[keep]
    acf = np.empty(max_lag + 1)
    acf[0] = 1.0
    for k in range(1, max_lag + 1):
        num = (series[:, : length - k] * series[:, k:]).sum(axis=1) / (length - k)
        acf[k] = (num / var).mean()
    return acf


def detect_period(x: np.ndarray, default_period: int = 24,
                  tie_tol: float = 1e-9) -> PeriodEstimate:
    """Dominant period as the ACF argmax over lags [2, L/2].

    Exact ties (within ``tie_tol``) prefer the smallest lag, so a multiple of
    the fundamental never wins against the fundamental itself. All-constant
    input falls back to the default period with a warning.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ContractError(f"detect_period expects (B, L, C), got {x.shape}")
    length = x.shape[1]
    if length < 8:
        raise ContractError(f"window length {length} < 8: period undefined")
    max_lag = length // 2
    try:
        acf = autocorrelation(x, max_lag)
    except ContractError:
        warnings.warn("constant input: falling back to the default period")
        period = max(2, min(default_period, max_lag))
        return PeriodEstimate(period=period, acf_score=float("nan"),
                              fold_rows=length // period)
    lags = np.arange(2, max_lag + 1)
    scores = acf[2:]
    best = scores.max()
    period = int(lags[scores >= best - tie_tol].min())
    return PeriodEstimate(period=period, acf_score=float(best),
                          fold_rows=length // period)


def reshape_to_image(x: Tensor, period: int) -> Tensor:
    """Fold (B, L, C) into (B, S, P, C); the oldest L mod P steps are dropped."""
    if period < 2:
        raise ContractError(f"period must be >= 2, got {period}")
    batch, length, channels = x.shape
    rows = length // period
    if rows < 2:
        raise ConfigError(
            f"lookback {length} folds into {rows} row(s) at period {period}; "
            "need at least 2"
        )
    excess = length - rows * period
    if excess:
        x = tt.narrow(x, 1, excess, rows * period)
    return tt.reshape(x, (batch, rows, period, channels))


def unfold_image(image: np.ndarray) -> np.ndarray:
    """Inverse of the fold (numpy; used for checks)."""
    batch, rows, period, channels = image.shape
    return image.reshape(batch, rows * period, channels)


def zoh_discretize(a_diag: Tensor, b_in: Tensor,
                   delta: Tensor) -> tuple[Tensor, Tensor]:
    """Exact zero-order-hold discretization under a diagonal transition.

    ``A_bar = exp(delta * A)`` and ``B_bar = (A_bar - 1) / A * B`` (the
    closed form of ``(delta A)^-1 (exp(delta A) - I) delta B`` elementwise).
    """
    if np.any(delta.data <= 0.0):
        raise ContractError("zoh discretization requires delta > 0")
    a_bar = tt.exp(tt.mul(delta, a_diag))
    b_bar = tt.mul(tt.mul(tt.add(a_bar, -1.0), tt.reciprocal(a_diag)), b_in)
    return a_bar, b_bar


def selective_scan(u: Tensor, delta: Tensor, a_diag: Tensor, b_in: Tensor,
                   c_in: Tensor, direction: str = "fwd") -> Tensor:
    """Input-dependent SSM recurrence over the token axis.

    ``u``/``delta`` are (B, N, E); ``a_diag`` is (E, n); ``b_in``/``c_in`` are
    (B, N, n). State update: ``h_t = A_bar_t * h_{t-1} + B_bar_t * u_t`` with
    ``h_0 = 0`` and readout ``y_t = <c_t, h_t>``. The backward direction scans
    the flipped sequence and flips the result back.
    """
    if direction not in ("fwd", "bwd"):
        raise ContractError(f"direction must be fwd or bwd, got {direction!r}")
    if direction == "bwd":
        u = tt.flip(u, 1)
        delta = tt.flip(delta, 1)
        b_in = tt.flip(b_in, 1)
        c_in = tt.flip(c_in, 1)
    batch, tokens, width = u.shape
    delta_e = tt.reshape(delta, (batch, tokens, width, 1))
    b_e = tt.reshape(b_in, (batch, tokens, 1, b_in.shape[-1]))
    a_bar, b_bar = zoh_discretize(a_diag, b_e, delta_e)
    drive = tt.mul(b_bar, tt.reshape(u, (batch, tokens, width, 1)))
    states = tt.linear_scan(a_bar, drive, axis=1)
    if not np.isfinite(states.data).all():
        bad = ~np.isfinite(states.data)
        token = int(np.argmax(bad.any(axis=(0, 2, 3))))
        raise NumericalError(f"selective scan diverged at token {token}")
    c_e = tt.reshape(c_in, (batch, tokens, 1, c_in.shape[-1]))
    y = tt.reduce_sum(tt.mul(states, c_e), axis=-1)
    if direction == "bwd":
        y = tt.flip(y, 1)
    return y


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float) -> Tensor:
    mean = tt.reduce_mean(x, axis=-1, keepdims=True)
    centered = tt.add(x, tt.mul(mean, -1.0))
    var = tt.reduce_mean(tt.mul(centered, centered), axis=-1, keepdims=True)
    normed = tt.mul(centered, tt.rsqrt(tt.add(var, eps)))
    return tt.add(tt.mul(normed, gamma), beta)


class VimBlock:
    """Pre-norm bidirectional selective-SSM token mixer with a silu gate."""

    def __init__(self, d_model: int, d_state: int, expand: int, dt_max: float,
                 ln_eps: float, rng: np.random.Generator, name: str):
        inner = expand * d_model
        dt_rank = max(1, inner // 16)
        self.d_model = d_model
        self.d_state = d_state
        self.d_inner = inner
        self.dt_max = float(dt_max)
        self.ln_eps = float(ln_eps)

        def init(shape, fan_in):
            return rng.normal(scale=1.0 / np.sqrt(fan_in), size=shape)

        self.ln_gamma = tt.parameter(np.ones(d_model), f"{name}.ln_gamma")
        self.ln_beta = tt.parameter(np.zeros(d_model), f"{name}.ln_beta")
        self.w_in = tt.parameter(init((d_model, 2 * inner), d_model),
                                 f"{name}.w_in")
        self.b_in = tt.parameter(np.zeros(2 * inner), f"{name}.b_in")
        # negative-real diagonal transition shared by both directions
        a_init = np.tile(np.log(np.arange(1, d_state + 1, dtype=np.float64)),
                         (inner, 1))
        self.a_log = tt.parameter(a_init, f"{name}.a_log")
        self.dir_params: dict[str, dict[str, Tensor]] = {}
        for direction in ("fwd", "bwd"):
            dt0 = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=inner))
            dt_bias = np.log(dt0 / (self.dt_max - dt0))  # logit of dt0/dt_max
            self.dir_params[direction] = {
                "w_bc": tt.parameter(init((inner, 2 * d_state), inner),
                                     f"{name}.{direction}.w_bc"),
                "w_dt1": tt.parameter(init((inner, dt_rank), inner),
                                      f"{name}.{direction}.w_dt1"),
                "w_dt2": tt.parameter(init((dt_rank, inner), dt_rank),
                                      f"{name}.{direction}.w_dt2"),
                "b_dt": tt.parameter(dt_bias, f"{name}.{direction}.b_dt"),
            }
        self.w_out = tt.parameter(init((inner, d_model), inner), f"{name}.w_out")
        self.b_out = tt.parameter(np.zeros(d_model), f"{name}.b_out")

    def parameters(self) -> list[Tensor]:
        out = [self.ln_gamma, self.ln_beta, self.w_in, self.b_in, self.a_log]
        for direction in ("fwd", "bwd"):
            out.extend(self.dir_params[direction].values())
        out.extend([self.w_out, self.b_out])
        return out

    def _direction_scan(self, u: Tensor, direction: str) -> Tensor:
        p = self.dir_params[direction]
        tokens = tt.flip(u, 1) if direction == "bwd" else u
        bc = tt.matmul(tokens, p["w_bc"])
        b_in = tt.narrow(bc, -1, 0, self.d_state)
        c_in = tt.narrow(bc, -1, self.d_state, self.d_state)
        dt_raw = tt.add(tt.matmul(tt.matmul(tokens, p["w_dt1"]), p["w_dt2"]),
                        p["b_dt"])
        delta = tt.mul(tt.sigmoid(dt_raw), self.dt_max)
        a_diag = tt.mul(tt.exp(self.a_log), -1.0)
        y = selective_scan(tokens, delta, a_diag, b_in, c_in, direction="fwd")
        return tt.flip(y, 1) if direction == "bwd" else y

    def forward(self, h: Tensor) -> Tensor:
        x = layer_norm(h, self.ln_gamma, self.ln_beta, self.ln_eps)
        proj = tt.add(tt.matmul(x, self.w_in), self.b_in)
        u = tt.narrow(proj, -1, 0, self.d_inner)
        gate = tt.narrow(proj, -1, self.d_inner, self.d_inner)
        y = tt.add(self._direction_scan(u, "fwd"), self._direction_scan(u, "bwd"))
        y = tt.mul(y, tt.silu(gate))
        out = tt.add(tt.matmul(y, self.w_out), self.b_out)
        return tt.add(h, out)

    __call__ = forward


class VisionBranch:
    """Fold, patchify, embed, mix with Vim blocks, project to the horizon."""

    def __init__(self, lookback: int, horizon: int, channels: int,
                 cfg: VisionConfig, period: int, rng: np.random.Generator):
        if period < 2 or lookback // period < 2:
            raise ConfigError(
                f"period {period} incompatible with lookback {lookback}"
            )
        self.cfg = cfg
        self.lookback = lookback
        self.horizon = horizon
        self.channels = channels
        self.period = period
        self.fold_rows = lookback // period
        p = cfg.patch
        self.padded_rows = ceil(self.fold_rows / p) * p
        self.padded_cols = ceil(period / p) * p
        self.grid = (self.padded_rows // p, self.padded_cols // p)
        self.n_tokens = self.grid[0] * self.grid[1]
        self.d_patch = p * p * channels

        def init(shape, fan_in):
            return rng.normal(scale=1.0 / np.sqrt(fan_in), size=shape)

        self.w_embed = tt.parameter(init((self.d_patch, cfg.d_model),
                                         self.d_patch), "vision.w_embed")
        self.b_embed = tt.parameter(np.zeros(cfg.d_model), "vision.b_embed")
        self.pos = tt.parameter(rng.normal(scale=0.02,
                                           size=(self.n_tokens, cfg.d_model)),
                                "vision.pos")
        self.blocks = [
            VimBlock(cfg.d_model, cfg.d_state, cfg.expand, cfg.dt_max,
                     cfg.ln_eps, rng, f"vision.block{i}")
            for i in range(cfg.depth)
        ]
        flat = self.n_tokens * cfg.d_model
        self.w_head = tt.parameter(init((flat, horizon * channels), flat),
                                   "vision.w_head")
        self.b_head = tt.parameter(np.zeros(horizon * channels), "vision.b_head")

    def parameters(self) -> list[Tensor]:
        out = [self.w_embed, self.b_embed, self.pos]
        for block in self.blocks:
            out.extend(block.parameters())
        out.extend([self.w_head, self.b_head])
        return out

    def patchify(self, x: Tensor) -> Tensor:
        """(B, L, C) -> (B, N, p*p*C) over the zero-padded folded image."""
        image = reshape_to_image(x, self.period)
        batch = image.shape[0]
        if self.padded_rows > self.fold_rows:
            pad = Tensor(np.zeros((batch, self.padded_rows - self.fold_rows,
                                   self.period, self.channels)))
            image = tt.concat([image, pad], axis=1)
        if self.padded_cols > self.period:
            pad = Tensor(np.zeros((batch, self.padded_rows,
                                   self.padded_cols - self.period,
                                   self.channels)))
            image = tt.concat([image, pad], axis=2)
        p = self.cfg.patch
        gr, gc = self.grid
        tiled = tt.reshape(image, (batch, gr, p, gc, p, self.channels))
        ordered = tt.permute(tiled, (0, 1, 3, 2, 4, 5))
        return tt.reshape(ordered, (batch, self.n_tokens, self.d_patch))

    def forward(self, x: Tensor) -> Tensor:
        batch = x.shape[0]
        tokens = self.patchify(x)
        h = tt.add(tt.add(tt.matmul(tokens, self.w_embed), self.b_embed),
                   self.pos)
        for block in self.blocks:
            h = block(h)
        flat = tt.reshape(h, (batch, self.n_tokens * self.cfg.d_model))
        out = tt.add(tt.matmul(flat, self.w_head), self.b_head)
        return tt.reshape(out, (batch, self.horizon, self.channels))

    __call__ = forward
