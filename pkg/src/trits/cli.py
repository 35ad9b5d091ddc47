"""Command-line entry point.

Commands: train, eval, predict, ablate, stats, plot. Configuration comes
from an optional flat config file plus repeatable ``--override KEY=VALUE``
pairs; exit code 2 flags configuration problems, 1 operational ones.
"""

from __future__ import annotations

import os

if os.environ.get("TRITS_THREADS"):
    # must happen before numpy is imported anywhere in the process
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, os.environ["TRITS_THREADS"])

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import tensor as tt
from .config import build_train_config, load_config, serialize_config
from .dataio import (
    benchmark_split_spec,
    load_csv,
    season_trend_cov_ratio,
    table_sample_counts,
)
from .errors import ConfigError, TritsError
from .model import TriTSModel, detect_dataset_period
from .tensor import load_checkpoint, save_checkpoint
from .trainer import (
    ablate,
    evaluate,
    gate_report,
    prepare_splits,
    train,
    write_ablation_csv,
    write_gate_csv,
    write_metrics_csv,
    write_predictions_csv,
)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _checkpoint_path(out_dir: Path, horizon: int) -> Path:
    return out_dir / f"checkpoint_T{horizon}.bin"


def _load_run(args, horizon: int | None = None):
    """Rebuild a trained model from an output directory."""
    values = load_config(args.config, args.override)
    if args.seed is not None:
        values["trainer.seed"] = args.seed
    if horizon is not None:
        values["trainer.horizon"] = horizon
    cfg = build_train_config(values)
    ds = load_csv(args.data)
    data = prepare_splits(ds, cfg.model.lookback)
    out_dir = Path(args.out)
    ckpt = _checkpoint_path(out_dir, cfg.model.horizon)
    if not ckpt.exists():
        raise FileNotFoundError(f"missing checkpoint {ckpt}")
    state = load_checkpoint(ckpt)
    period = None
    if cfg.model.vision_enabled:
        period = cfg.model.vision.period or detect_dataset_period(
            data.train, cfg.model.lookback
        )
    model = TriTSModel(cfg.model, data.channels, seed=cfg.seed, period=period)
    model.load_state(state)
    return cfg, ds, data, model, out_dir


def cmd_train(args) -> int:
    values = load_config(args.config, args.override)
    if args.seed is not None:
        values["trainer.seed"] = args.seed
    cfg = build_train_config(values)
    ds = load_csv(args.data)
    data = prepare_splits(ds, cfg.model.lookback)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = train(cfg, data)
    model = result.model
    (out_dir / "effective_config.txt").write_text(serialize_config(values),
                                                  encoding="utf-8")
    reports = []
    for split_name in ("val", "test"):
        values_arr = getattr(data, split_name)
        if values_arr.shape[0] >= cfg.model.lookback + cfg.model.horizon:
            reports.append(evaluate(model, values_arr, split_name,
                                    batch=cfg.batch_size))
    write_metrics_csv(result.history, reports, out_dir / "metrics.csv")
    save_checkpoint(model.parameters(),
                    _checkpoint_path(out_dir, cfg.model.horizon))
    if model.gate is not None:
        gates = {}
        for split_name in ("train", "val", "test"):
            values_arr = getattr(data, split_name)
            if values_arr.shape[0] >= cfg.model.lookback + cfg.model.horizon:
                gates[split_name] = gate_report(model, values_arr,
                                                batch=cfg.batch_size)
        write_gate_csv(gates, out_dir / "gate_report.csv")
    print(f"dataset={ds.name} best_epoch={result.best_epoch} "
          f"best_val_mse={result.best_val_mse:.6g} "
          f"params={model.parameter_count()}")
    for rep in reports:
        print(f"{rep.split}: mse={rep.mse:.6g} mae={rep.mae:.6g}")
    if result.diverged:
        print(f"warning: {result.diagnostic}", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    horizons = [int(h) for h in args.horizons.split(",")] if args.horizons \
        else [None]
    print(f"{'dataset':<12} {'T':>5} {'MSE':>12} {'MAE':>12}")
    for horizon in horizons:
        cfg, ds, data, model, _ = _load_run(args, horizon)
        report = evaluate(model, data.test, "test", batch=cfg.batch_size)
        print(f"{ds.name:<12} {cfg.model.horizon:>5} "
              f"{report.mse:>12.6g} {report.mae:>12.6g}")
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg, _, data, model, out_dir = _load_run(args)
    path = out_dir / "predictions.csv"
    write_predictions_csv(model, data.test, path, batch=cfg.batch_size)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    values = load_config(args.config, args.override)
    if args.seed is not None:
        values["trainer.seed"] = args.seed
    cfg = build_train_config(values)
    ds = load_csv(args.data)
    data = prepare_splits(ds, cfg.model.lookback)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ablate(cfg, data)
    write_ablation_csv(rows, out_dir / "ablation.csv")
    print(f"{'variant':<12} {'MSE':>12} {'MAE':>12}")
    for name, report in rows:
        print(f"{name:<12} {report.mse:>12.6g} {report.mae:>12.6g}")
    return EXIT_OK


def cmd_stats(args) -> int:
    values = load_config(args.config, args.override)
    lookback = values["trainer.lookback"]
    window = values["stats.sma_window"]
    print(f"{'dataset':<12} {'dim':>5} {'train':>8} {'val':>8} {'test':>8} "
          f"{'season/trend':>14}")
    for path in args.data:
        ds = load_csv(path)
        spec = benchmark_split_spec(ds.name, ds.rows)
        counts = table_sample_counts(spec, lookback)
        ratio = season_trend_cov_ratio(ds, window)
        print(f"{ds.name:<12} {ds.channels:>5} {counts[0]:>8} {counts[1]:>8} "
              f"{counts[2]:>8} {ratio:>14.6f}")
    return EXIT_OK


def _timing_sweep(seed: int = 0) -> list[tuple[int, float]]:
    """Median vision-branch forward seconds over 5 runs per lookback."""
    from .visionbranch import VisionBranch, VisionConfig
    from .tensor import Tensor

    rows = []
    rng = np.random.default_rng(seed)
    for lookback in (240, 480, 960, 1920):
        branch = VisionBranch(lookback, 96, 3, VisionConfig(period=24), 24,
                              np.random.default_rng(seed))
        x = Tensor(rng.normal(size=(4, lookback, 3)))
        with tt.no_grad():
            branch.forward(x)  # warm-up
            times = []
            for _ in range(5):
                tic = time.perf_counter()
                branch.forward(x)
                times.append(time.perf_counter() - tic)
        rows.append((lookback, float(np.median(times))))
    return rows


def cmd_plot(args) -> int:
    out_dir = Path(args.out)
    plot_dir = out_dir / "plots"
    plot_dir.mkdir(parents=True, exist_ok=True)
    produced = []

    gate_path = out_dir / "gate_report.csv"
    if gate_path.exists():
        lines = gate_path.read_text(encoding="utf-8").strip().splitlines()
        with open(plot_dir / "gate_weights.csv", "w", encoding="utf-8") as fh:
            fh.write("x,y,series\n")
            for line in lines[1:]:
                split_name, modality, weight = line.split(",")
                fh.write(f"{split_name},{weight},{modality}\n")
        produced.append("gate_weights.csv")

    pred_path = out_dir / "predictions.csv"
    if pred_path.exists():
        import csv as _csv

        keep_windows = {str(w) for w in range(args.windows)}
        with open(pred_path, newline="", encoding="utf-8") as src, \
                open(plot_dir / "forecast_overlay.csv", "w", newline="",
                     encoding="utf-8") as dst:
            reader = _csv.DictReader(src)
            writer = _csv.writer(dst)
            writer.writerow(["window_id", "step", "y_true", "y_pred"])
            for row in reader:
                if row["window_id"] in keep_windows and row["channel"] == "0":
                    writer.writerow([row["window_id"], row["step"],
                                     row["y_true"], row["y_pred"]])
        produced.append("forecast_overlay.csv")

    if args.timing:
        with open(plot_dir / "scaling.csv", "w", encoding="utf-8") as fh:
            fh.write("x,y,series\n")
            for lookback, seconds in _timing_sweep():
                fh.write(f"{lookback},{seconds:.6g},vision_forward\n")
        produced.append("scaling.csv")

    if not produced:
        print("no plottable inputs found (expect gate_report.csv or "
              "predictions.csv in --out, or pass --timing)", file=sys.stderr)
        return EXIT_RUNTIME
    for name in produced:
        print(f"wrote {plot_dir / name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trits",
        description="tri-modal long-horizon time series forecaster",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_required=True, multi_data=False):
        p.add_argument("--config", default=None, help="flat KEY=VALUE file")
        if multi_data:
            p.add_argument("--data", nargs="+", required=True,
                           help="dataset CSV path(s)")
        else:
            p.add_argument("--data", required=data_required,
                           help="dataset CSV path")
        p.add_argument("--out", default="runs/default", help="output directory")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="config override (repeatable)")
        p.add_argument("--seed", type=int, default=None)

    p_train = sub.add_parser("train", help="train and write artifacts")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate checkpoints on the test split")
    common(p_eval)
    p_eval.add_argument("--horizons", default=None,
                        help="comma-separated horizon list")
    p_eval.set_defaults(func=cmd_eval)

    p_pred = sub.add_parser("predict", help="write test-split predictions CSV")
    common(p_pred)
    p_pred.set_defaults(func=cmd_predict)

    p_abl = sub.add_parser("ablate", help="run the branch-ablation table")
    common(p_abl)
    p_abl.set_defaults(func=cmd_ablate)

    p_stats = sub.add_parser("stats", help="dataset dimensions, splits, ratios")
    common(p_stats, multi_data=True)
    p_stats.set_defaults(func=cmd_stats)

    p_plot = sub.add_parser("plot", help="emit plot-ready CSV files")
    common(p_plot, data_required=False)
    p_plot.add_argument("--windows", type=int, default=3,
                        help="forecast overlay window count")
    p_plot.add_argument("--timing", action="store_true",
                        help="run the vision-branch scaling sweep")
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except TritsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
