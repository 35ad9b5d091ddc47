"""Flat dotted-key configuration with a closed schema.

Config files are plain text, one ``key = value`` per line, ``#`` comments
allowed. Unknown keys are hard errors (with a closest-match suggestion);
values are converted per the schema. The effective configuration can be
serialized and reloaded to reproduce a run exactly.
"""

from __future__ import annotations

import difflib
from pathlib import Path

from .errors import ConfigError
from .freqbranch import FreqConfig
from .model import ModelConfig
from .trainer import TrainConfig
from .visionbranch import VisionConfig


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (converter, default)
SCHEMA: dict[str, tuple] = {
    "trainer.lookback": (int, 96),
    "trainer.horizon": (int, 96),
    "trainer.batch": (int, 128),
    "trainer.lr": (float, 1e-3),
    "trainer.lr_decay": (float, 0.9),
    "trainer.lr_decay_start": (int, 3),
    "trainer.max_epochs": (int, 100),
    "trainer.patience": (int, 5),
    "trainer.seed": (int, 0),
    "trainer.stride": (int, 1),
    "trainer.clip_norm": (float, 5.0),
    "trainer.target_train_mse": (float, 0.0),
    "revin.eps": (float, 1e-5),
    "time.enabled": (_bool, True),
    "time.ema_alpha": (float, 0.3),
    "freq.enabled": (_bool, True),
    "freq.wavelet": (str, "db2"),
    "freq.levels": (int, 3),
    "freq.patch_len": (int, 16),
    "freq.d_model": (int, 32),
    "vision.enabled": (_bool, True),
    "vision.patch": (int, 8),
    "vision.depth": (int, 2),
    "vision.d_model": (int, 64),
    "vision.d_state": (int, 16),
    "vision.expand": (int, 2),
    "vision.period": (int, 0),
    "fusion.gated": (_bool, True),
    "fusion.gate_hidden": (int, 32),
    "stats.sma_window": (int, 25),
}


def _reject_unknown(key: str) -> None:
    close = difflib.get_close_matches(key, SCHEMA, n=1)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    raise ConfigError(f"unknown config key {key!r}{hint}")


def parse_assignment(line: str) -> tuple[str, str]:
    if "=" not in line:
        raise ConfigError(f"expected KEY=VALUE, got {line!r}")
    key, _, value = line.partition("=")
    return key.strip(), value.strip()


def load_config(path=None, overrides: list[str] | None = None) -> dict:
    """Schema defaults, then the config file, then --override pairs."""
    values = {key: default for key, (_, default) in SCHEMA.items()}
    raw: dict[str, str] = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            try:
                key, value = parse_assignment(stripped)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
            raw[key] = value
    for item in overrides or []:
        key, value = parse_assignment(item)
        raw[key] = value
    for key, value in raw.items():
        if key not in SCHEMA:
            _reject_unknown(key)
        converter = SCHEMA[key][0]
        try:
            values[key] = converter(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from None
    return values


def serialize_config(values: dict) -> str:
    lines = [f"{key} = {values[key]}" for key in SCHEMA]
    return "\n".join(lines) + "\n"


def build_train_config(values: dict) -> TrainConfig:
    model = ModelConfig(
        lookback=values["trainer.lookback"],
        horizon=values["trainer.horizon"],
        revin_eps=values["revin.eps"],
        time_enabled=values["time.enabled"],
        freq_enabled=values["freq.enabled"],
        vision_enabled=values["vision.enabled"],
        gated=values["fusion.gated"],
        gate_hidden=values["fusion.gate_hidden"],
        ema_alpha=values["time.ema_alpha"],
        freq=FreqConfig(
            wavelet=values["freq.wavelet"],
            levels=values["freq.levels"],
            patch_len=values["freq.patch_len"],
            d_model=values["freq.d_model"],
            eps=values["revin.eps"],
        ),
        vision=VisionConfig(
            patch=values["vision.patch"],
            depth=values["vision.depth"],
            d_model=values["vision.d_model"],
            d_state=values["vision.d_state"],
            expand=values["vision.expand"],
            period=values["vision.period"],
        ),
    )
    return TrainConfig(
        model=model,
        batch_size=values["trainer.batch"],
        learning_rate=values["trainer.lr"],
        lr_decay=values["trainer.lr_decay"],
        lr_decay_start=values["trainer.lr_decay_start"],
        max_epochs=values["trainer.max_epochs"],
        patience=values["trainer.patience"],
        seed=values["trainer.seed"],
        stride=values["trainer.stride"],
        clip_norm=values["trainer.clip_norm"],
        target_train_mse=values["trainer.target_train_mse"],
    )
