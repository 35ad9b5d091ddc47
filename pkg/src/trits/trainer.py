"""Training loop, evaluation metrics and the ablation harness.

Training minimizes mean squared error on de-normalized predictions, with
Adam, per-epoch shuffling, global-norm gradient clipping, a multiplicative
learning-rate decay and early stopping on validation MSE. The best epoch's
weights are retained. A NaN loss aborts the run and restores the last good
checkpoint.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as tt
from .dataio import (
    Dataset,
    Normalizer,
    SplitSpec,
    benchmark_split_spec,
    gather_windows,
    split,
    window_starts,
)
from .errors import ContractError, NumericalError, ShapeError
from .fusion import mean_gate_report
from .model import ModelConfig, TriTSModel, detect_dataset_period
from .tensor import Adam, clip_global_norm


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    batch_size: int = 128
    learning_rate: float = 1e-3
    lr_decay: float = 0.9
    lr_decay_start: int = 3      # epochs before decay kicks in
    max_epochs: int = 100
    patience: int = 5
    seed: int = 0
    stride: int = 1
    clip_norm: float = 5.0
    target_train_mse: float = 0.0  # > 0: stop once train MSE drops below

    def __post_init__(self):
        if self.patience < 1 or self.batch_size < 1:
            raise ContractError(
                f"patience and batch size must be >= 1, got "
                f"{self.patience}/{self.batch_size}"
            )


@dataclass
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    learning_rate: float
    seconds: float


@dataclass
class MetricReport:
    split: str
    mse: float
    mae: float
    per_step_mse: np.ndarray
    seconds: float
    parameter_count: int


@dataclass
class TrainResult:
    model: TriTSModel
    history: list[EpochRecord]
    best_epoch: int
    best_val_mse: float
    diverged: bool
    diagnostic: str | None
    period: int | None


@dataclass
class PreparedData:
    """Z-scored chronological splits with window context on val/test."""

    name: str
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    normalizer: Normalizer
    spec: SplitSpec

    @property
    def channels(self) -> int:
        return self.train.shape[1]


def prepare_splits(ds: Dataset, lookback: int,
                   spec: SplitSpec | None = None) -> PreparedData:
    spec = spec or benchmark_split_spec(ds.name, ds.rows)
    train, val, test = split(ds, spec, context_rows=lookback)
    norm = Normalizer.fit(train.values)
    return PreparedData(
        name=ds.name,
        train=norm.apply(train.values),
        val=norm.apply(val.values) if val.rows else val.values,
        test=norm.apply(test.values) if test.rows else test.values,
        normalizer=norm,
        spec=spec,
    )


def _batched_mse(model: TriTSModel, values: np.ndarray, lookback: int,
                 horizon: int, batch: int) -> float:
    starts = window_starts(values.shape[0], lookback, horizon)
    if starts.size == 0:
        return float("nan")
    sse = 0.0
    count = 0
    for lo in range(0, starts.size, batch):
        x, y = gather_windows(values, starts[lo:lo + batch], lookback, horizon)
        pred = model.predict(x)
        sse += float(((pred - y) ** 2).sum())
        count += y.size
    return sse / count


def train(cfg: TrainConfig, data: PreparedData) -> TrainResult:
    lookback = cfg.model.lookback
    horizon = cfg.model.horizon
    period = None
    if cfg.model.vision_enabled:
        period = cfg.model.vision.period or detect_dataset_period(
            data.train, lookback
        )
    model = TriTSModel(cfg.model, data.channels, seed=cfg.seed, period=period)
    optimizer = Adam(model.parameters(), lr=cfg.learning_rate)
    shuffle_rng = np.random.default_rng([cfg.seed, 99])

    starts = window_starts(data.train.shape[0], lookback, horizon, cfg.stride)
    if starts.size == 0:
        raise ContractError(
            f"train split of {data.train.shape[0]} rows fits no "
            f"({lookback}, {horizon}) window"
        )
    batch = min(cfg.batch_size, starts.size)

    best_state = model.state_dict()
    best_val = float("inf")
    best_epoch = 0
    bad_epochs = 0
    history: list[EpochRecord] = []
    diverged = False
    diagnostic = None

    for epoch in range(1, cfg.max_epochs + 1):
        tic = time.perf_counter()
        order = starts.copy()
        shuffle_rng.shuffle(order)
        losses = []
        for lo in range(0, order.size - batch + 1, batch):
            x, y = gather_windows(data.train, order[lo:lo + batch],
                                  lookback, horizon)
            try:
                with np.errstate(over="ignore", invalid="ignore",
                                 divide="ignore"):
                    loss, _ = model.loss(x, y)
                value = loss.item()
            except NumericalError as exc:
                value = float("nan")
                diagnostic = str(exc)
            if not np.isfinite(value):
                diverged = True
                detail = f" ({diagnostic})" if diagnostic else ""
                diagnostic = (
                    f"non-finite training loss at epoch {epoch}{detail}; "
                    f"restored best checkpoint from epoch {best_epoch}"
                )
                warnings.warn(diagnostic)
                break
            losses.append(value)
            loss.backward()
            clip_global_norm(model.parameters(), cfg.clip_norm)
            optimizer.step()
        if diverged:
            break

        train_mse = float(np.mean(losses)) if losses else float("nan")
        val_mse = _batched_mse(model, data.val, lookback, horizon, batch) \
            if data.val.shape[0] else train_mse
        history.append(EpochRecord(
            epoch=epoch,
            train_mse=train_mse,
            val_mse=val_mse,
            learning_rate=optimizer.lr,
            seconds=time.perf_counter() - tic,
        ))
        if val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_state = model.state_dict()
            bad_epochs = 0
        else:
            bad_epochs += 1
        if bad_epochs >= cfg.patience:
            break
        if cfg.target_train_mse > 0.0 and train_mse < cfg.target_train_mse:
            break
        if epoch >= cfg.lr_decay_start:
            optimizer.lr *= cfg.lr_decay

    model.load_state(best_state)
    return TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_val_mse=best_val,
        diverged=diverged,
        diagnostic=diagnostic,
        period=period,
    )


def evaluate(model: TriTSModel, values: np.ndarray, split_name: str,
             batch: int = 128) -> MetricReport:
    """MSE/MAE of de-normalized predictions over every window of a split."""
    lookback = model.cfg.lookback
    horizon = model.cfg.horizon
    starts = window_starts(values.shape[0], lookback, horizon)
    if starts.size == 0:
        raise ContractError(f"{split_name}: no ({lookback}, {horizon}) windows")
    tic = time.perf_counter()
    sse = 0.0
    sae = 0.0
    step_sse = np.zeros(horizon)
    count = 0
    for lo in range(0, starts.size, batch):
        x, y = gather_windows(values, starts[lo:lo + batch], lookback, horizon)
        pred = model.predict(x)
        err = pred - y
        sse += float((err ** 2).sum())
        sae += float(np.abs(err).sum())
        step_sse += (err ** 2).sum(axis=(0, 2))
        count += y.size
    per_window_channel = starts.size * values.shape[1]
    return MetricReport(
        split=split_name,
        mse=sse / count,
        mae=sae / count,
        per_step_mse=step_sse / per_window_channel,
        seconds=time.perf_counter() - tic,
        parameter_count=model.parameter_count(),
    )


def repeat_last_baseline(values: np.ndarray, lookback: int, horizon: int,
                         split_name: str = "test") -> MetricReport:
    """Persistence baseline: hold the last observed value over the horizon."""
    starts = window_starts(values.shape[0], lookback, horizon)
    if starts.size == 0:
        raise ContractError(f"{split_name}: no ({lookback}, {horizon}) windows")
    tic = time.perf_counter()
    sse = 0.0
    sae = 0.0
    step_sse = np.zeros(horizon)
    count = 0
    for lo in range(0, starts.size, 512):
        x, y = gather_windows(values, starts[lo:lo + 512], lookback, horizon)
        pred = np.repeat(x[:, -1:, :], horizon, axis=1)
        err = pred - y
        sse += float((err ** 2).sum())
        sae += float(np.abs(err).sum())
        step_sse += (err ** 2).sum(axis=(0, 2))
        count += y.size
    return MetricReport(
        split=split_name,
        mse=sse / count,
        mae=sae / count,
        per_step_mse=step_sse / (starts.size * values.shape[1]),
        seconds=time.perf_counter() - tic,
        parameter_count=0,
    )


def gate_report(model: TriTSModel, values: np.ndarray,
                batch: int = 128) -> dict[str, float]:
    """Mean gate weight per modality over every window of a split."""
    lookback = model.cfg.lookback
    horizon = model.cfg.horizon
    starts = window_starts(values.shape[0], lookback, horizon)
    batches = []
    for lo in range(0, starts.size, batch):
        x, _ = gather_windows(values, starts[lo:lo + batch], lookback, horizon)
        with tt.no_grad():
            out = model.forward(x)
        batches.append(out.gate_weights)
    return mean_gate_report(batches)


ABLATION_VARIANTS: dict[str, dict[str, bool]] = {
    "full": {},
    "no_time": {"time_enabled": False},
    "no_freq": {"freq_enabled": False},
    "no_vision": {"vision_enabled": False},
    "no_gating": {"gated": False},
}


def ablate(cfg: TrainConfig, data: PreparedData,
           variants: dict[str, dict[str, bool]] | None = None,
           eval_split: str = "test") -> list[tuple[str, MetricReport]]:
    """Train/evaluate each branch-disable variant with a shared schedule."""
    variants = variants or ABLATION_VARIANTS
    rows = []
    for name, flags in variants.items():
        model_cfg = replace(cfg.model, **flags)
        model_cfg.enabled_branches()  # validates at least one branch
        variant_cfg = replace(cfg, model=model_cfg)
        result = train(variant_cfg, data)
        report = evaluate(result.model, getattr(data, eval_split), eval_split,
                          batch=cfg.batch_size)
        rows.append((name, report))
    return rows


# -- CSV artifacts -----------------------------------------------------------


def write_metrics_csv(history: list[EpochRecord], reports: list[MetricReport],
                      path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "mse", "mae"])
        for rec in history:
            writer.writerow([rec.epoch, "train", f"{rec.train_mse:.10g}", ""])
            writer.writerow([rec.epoch, "val", f"{rec.val_mse:.10g}", ""])
        for rep in reports:
            writer.writerow(["final", rep.split, f"{rep.mse:.10g}",
                             f"{rep.mae:.10g}"])


def write_gate_csv(split_means: dict[str, dict[str, float]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["split", "modality", "mean_weight"])
        for split_name, means in split_means.items():
            for modality, weight in means.items():
                writer.writerow([split_name, modality, f"{weight:.10g}"])


def write_predictions_csv(model: TriTSModel, values: np.ndarray, path,
                          batch: int = 128, limit: int | None = None) -> None:
    lookback = model.cfg.lookback
    horizon = model.cfg.horizon
    starts = window_starts(values.shape[0], lookback, horizon)
    if limit is not None:
        starts = starts[:limit]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["window_id", "step", "channel", "y_true", "y_pred"])
        for lo in range(0, starts.size, batch):
            chunk = starts[lo:lo + batch]
            x, y = gather_windows(values, chunk, lookback, horizon)
            pred = model.predict(x)
            for b in range(chunk.size):
                for t in range(horizon):
                    for c in range(values.shape[1]):
                        writer.writerow([
                            lo + b, t, c,
                            f"{y[b, t, c]:.10g}", f"{pred[b, t, c]:.10g}",
                        ])


def recompute_metrics_from_csv(path) -> tuple[float, float]:
    """Streaming MSE/MAE recomputation from a predictions file."""
    sse = 0.0
    sae = 0.0
    count = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            err = float(row["y_pred"]) - float(row["y_true"])
            sse += err * err
            sae += abs(err)
            count += 1
    if count == 0:
        raise ShapeError(f"{path}: no prediction rows")
    return sse / count, sae / count


def write_ablation_csv(rows: list[tuple[str, MetricReport]], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "mse", "mae"])
        for name, report in rows:
            writer.writerow([name, f"{report.mse:.10g}", f"{report.mae:.10g}"])
