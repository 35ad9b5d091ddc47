"""Dataset ingestion, chronological splits, sliding windows and statistics.

CSV files follow the common benchmark schema: a header row, a timestamp
column first, and one numeric column per channel. Splits are contiguous and
chronological; validation/test segments can borrow the preceding ``L`` rows
of context so the first forecast origin sits exactly at the split boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ContractError, DataFormatError


@dataclass
class Dataset:
    name: str
    values: np.ndarray                 # (rows, C) float64
    timestamps: list[str] | None
    channel_names: list[str]

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SplitSpec:
    train: int
    val: int
    test: int

    def __post_init__(self):
        if self.train < 1 or self.val < 0 or self.test < 0:
            raise ContractError(f"split counts must be positive: {self}")

    @property
    def total(self) -> int:
        return self.train + self.val + self.test


@dataclass
class WindowBatch:
    x: np.ndarray  # (B, L, C)
    y: np.ndarray  # (B, T, C)
    starts: np.ndarray  # window start row per item


def load_csv(path, date_column: str = "date") -> Dataset:
    """Parse a benchmark CSV; every non-date column becomes a channel."""
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"{path}: no such file")
    if path.stat().st_size == 0:
        raise DataFormatError(f"{path}: empty file")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"{path}: empty file") from None
    if frame.shape[1] == 0 or frame.shape[0] == 0:
        raise DataFormatError(f"{path}: no data rows")
    if date_column not in frame.columns:
        raise DataFormatError(
            f"{path}: header has no {date_column!r} column "
            f"(found {list(frame.columns)})"
        )
    channel_names = [c for c in frame.columns if c != date_column]
    if not channel_names:
        raise DataFormatError(f"{path}: no channel columns besides {date_column!r}")
    values = np.empty((frame.shape[0], len(channel_names)), dtype=np.float64)
    for j, col in enumerate(channel_names):
        parsed = pd.to_numeric(frame[col], errors="coerce")
        bad = np.flatnonzero(parsed.isna().to_numpy())
        if bad.size:
            row = int(bad[0])
            raise DataFormatError(
                f"{path}: row {row + 1}, column {col!r}: "
                f"cannot parse {frame[col].iloc[row]!r} as a number"
            )
        values[:, j] = parsed.to_numpy(dtype=np.float64)
    return Dataset(
        name=path.stem,
        values=values,
        timestamps=frame[date_column].tolist(),
        channel_names=channel_names,
    )


def _slice(ds: Dataset, start: int, stop: int, tag: str) -> Dataset:
    return Dataset(
        name=f"{ds.name}/{tag}",
        values=ds.values[start:stop],
        timestamps=ds.timestamps[start:stop] if ds.timestamps else None,
        channel_names=ds.channel_names,
    )


def split(ds: Dataset, spec: SplitSpec,
          context_rows: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Chronological (train, val, test) segments.

    ``context_rows`` extends the validation and test segments backward so
    their first windows can look into the preceding split.
    """
    if spec.total > ds.rows:
        raise ContractError(
            f"split {spec} needs {spec.total} rows, dataset has {ds.rows}"
        )
    t0, t1 = 0, spec.train
    v1 = t1 + spec.val
    e1 = v1 + spec.test
    train = _slice(ds, t0, t1, "train")
    val = _slice(ds, max(0, t1 - context_rows) if spec.val else t1, v1, "val")
    test = _slice(ds, max(0, v1 - context_rows) if spec.test else v1, e1, "test")
    return train, val, test


def window_count(rows: int, lookback: int, horizon: int, stride: int = 1) -> int:
    if rows < lookback + horizon:
        return 0
    return (rows - lookback - horizon) // stride + 1


def window_starts(rows: int, lookback: int, horizon: int,
                  stride: int = 1) -> np.ndarray:
    count = window_count(rows, lookback, horizon, stride)
    return np.arange(count) * stride


def gather_windows(values: np.ndarray, starts: np.ndarray, lookback: int,
                   horizon: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([values[s:s + lookback] for s in starts])
    y = np.stack([values[s + lookback:s + lookback + horizon] for s in starts])
    return x, y


def make_windows(ds: Dataset, lookback: int, horizon: int, stride: int = 1,
                 batch: int = 32, drop_last: bool = False):
    """Yield chronological :class:`WindowBatch` items cut from one segment."""
    if lookback < 1 or horizon < 1 or stride < 1:
        raise ContractError(
            f"lookback/horizon/stride must be >= 1, got {lookback}/{horizon}/{stride}"
        )
    starts = window_starts(ds.rows, lookback, horizon, stride)
    if starts.size == 0:
        warnings.warn(
            f"{ds.name}: {ds.rows} rows cannot fit lookback {lookback} + "
            f"horizon {horizon}; no windows emitted"
        )
        return
    for lo in range(0, starts.size, batch):
        chunk = starts[lo:lo + batch]
        if drop_last and chunk.size < batch:
            return
        x, y = gather_windows(ds.values, chunk, lookback, horizon)
        yield WindowBatch(x=x, y=y, starts=chunk)


def season_trend_cov_ratio(ds: Dataset, sma_window: int = 25) -> float:
    """Seasonal-to-trend variance ratio under an SMA decomposition.

    Each channel is smoothed with a centered simple moving average; the
    residual is the seasonal part. Returns the per-channel variance ratio
    averaged over channels; a constant channel yields +inf with a warning.
    """
    if sma_window < 2 or sma_window >= ds.rows:
        raise ContractError(
            f"sma window must satisfy 2 <= w < rows, got {sma_window} for "
            f"{ds.rows} rows"
        )
    values = ds.values
    csum = np.cumsum(values, axis=0)
    csum = np.vstack([np.zeros((1, values.shape[1])), csum])
    trend = (csum[sma_window:] - csum[:-sma_window]) / sma_window
    offset = sma_window // 2
    aligned = values[offset:offset + trend.shape[0]]
    season = aligned - trend
    var_trend = trend.var(axis=0)
    var_season = season.var(axis=0)
    ratios = np.empty(ds.channels)
    for c in range(ds.channels):
        if var_trend[c] == 0.0:
            warnings.warn(
                f"{ds.name}: channel {ds.channel_names[c]!r} has constant "
                "trend; ratio is +inf"
            )
            ratios[c] = np.inf
        else:
            ratios[c] = var_season[c] / var_trend[c]
    return float(ratios.mean())


@dataclass
class Normalizer:
    """Per-channel z-scoring fitted on the train split only."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "Normalizer":
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        if np.any(std == 0.0):
            warnings.warn("constant channel during z-score fit; using std=1")
            std = np.where(std == 0.0, 1.0, std)
        return cls(mean=mean, std=std)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


def benchmark_split_spec(name: str, rows: int) -> SplitSpec:
    """Row counts under the standard benchmark conventions.

    ETT hourly and minute files use the fixed month-based borders; other
    datasets use the 0.7/0.1/0.2 chronological ratio split.
    """
    stem = name.lower()
    if stem.startswith("etth"):
        spec = SplitSpec(8640, 2880, 2880)
    elif stem.startswith("ettm"):
        spec = SplitSpec(34560, 11520, 11520)
    else:
        train = int(rows * 0.7)
        test = int(rows * 0.2)
        spec = SplitSpec(train, rows - train - test, test)
    if spec.total > rows:
        raise ContractError(
            f"{name}: benchmark split {spec} exceeds {rows} rows"
        )
    return spec


def table_sample_counts(spec: SplitSpec, lookback: int = 96) -> tuple[int, int, int]:
    """Windowed sample counts as reported in benchmark summary tables.

    Train counts lookback positions inside the segment; val/test are
    extended backward by the lookback, giving ``rows + 1`` positions.
    """
    train = max(0, spec.train - lookback + 1)
    val = spec.val + 1 if spec.val > 0 else 0
    test = spec.test + 1 if spec.test > 0 else 0
    return train, val, test
