"""CLI: commands, exit codes, config round trips, emitted artifacts."""

import csv

import numpy as np
import pytest

from trits.cli import main
from trits.config import SCHEMA, load_config, serialize_config
from trits.errors import ConfigError
from trits.synth import sine_trend_dataset, write_csv

TINY_OVERRIDES = [
    "--override", "trainer.lookback=48",
    "--override", "trainer.horizon=8",
    "--override", "trainer.max_epochs=2",
    "--override", "trainer.batch=64",
    "--override", "freq.patch_len=8",
    "--override", "freq.d_model=8",
    "--override", "vision.d_model=16",
    "--override", "vision.d_state=4",
    "--override", "vision.depth=1",
]


@pytest.fixture(scope="module")
def toy_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    ds = sine_trend_dataset(rows=500, period=24, channels=2, noise=0.05,
                            seed=5, name="toy")
    path = root / "toy.csv"
    write_csv(ds, path)
    return path


@pytest.fixture(scope="module")
def trained_run(toy_csv, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    code = main(["train", "--data", str(toy_csv), "--out", str(out),
                 "--seed", "3", *TINY_OVERRIDES])
    assert code == 0
    return out


class TestConfig:
    def test_defaults_cover_schema(self):
        values = load_config()
        assert set(values) == set(SCHEMA)

    def test_roundtrip(self, tmp_path):
        values = load_config(overrides=["trainer.lookback=48",
                                        "freq.wavelet=haar",
                                        "time.enabled=false"])
        path = tmp_path / "cfg.txt"
        path.write_text(serialize_config(values))
        reloaded = load_config(path)
        assert reloaded == values

    def test_unknown_key_suggestion(self):
        with pytest.raises(ConfigError) as err:
            load_config(overrides=["freq.wavlet=db2"])
        assert "freq.wavelet" in str(err.value)

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["trainer.lookback=ninety"])

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "cfg.txt"
        path.write_text("# comment\n\ntrainer.seed = 9  # inline\n")
        assert load_config(path)["trainer.seed"] == 9


class TestTrain:
    def test_artifacts_exist(self, trained_run):
        for name in ("checkpoint_T8.bin", "metrics.csv", "gate_report.csv",
                     "effective_config.txt"):
            assert (trained_run / name).exists(), name

    def test_unknown_key_exits_2(self, toy_csv, tmp_path, capsys):
        code = main(["train", "--data", str(toy_csv),
                     "--out", str(tmp_path / "x"),
                     "--override", "freq.wavlet=db2"])
        assert code == 2
        assert "freq.wavelet" in capsys.readouterr().err

    def test_seed_determinism(self, toy_csv, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            code = main(["train", "--data", str(toy_csv), "--out", str(out),
                         "--override", "trainer.seed=7", *TINY_OVERRIDES])
            assert code == 0
            outs.append((out / "metrics.csv").read_text())
        assert outs[0] == outs[1]

    def test_metrics_csv_parses_back(self, trained_run):
        with open(trained_run / "metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert {"epoch", "split", "mse", "mae"} <= set(rows[0])
        assert any(r["split"] == "val" for r in rows)


class TestEval:
    def test_eval_prints_row(self, toy_csv, trained_run, capsys):
        code = main(["eval", "--data", str(toy_csv), "--out",
                     str(trained_run), "--seed", "3", *TINY_OVERRIDES])
        assert code == 0
        out = capsys.readouterr().out
        assert "toy" in out and "MSE" in out

    def test_missing_checkpoint_exits_1(self, toy_csv, tmp_path, capsys):
        code = main(["eval", "--data", str(toy_csv),
                     "--out", str(tmp_path / "nothing"), *TINY_OVERRIDES])
        assert code == 1

    def test_two_horizons_two_rows(self, toy_csv, tmp_path):
        out = tmp_path / "multi"
        for horizon in (8, 16):
            overrides = [o if o != "trainer.horizon=8"
                         else f"trainer.horizon={horizon}"
                         for o in TINY_OVERRIDES]
            assert main(["train", "--data", str(toy_csv), "--out", str(out),
                         "--seed", "3", *overrides]) == 0
        import io
        from contextlib import redirect_stdout

        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(["eval", "--data", str(toy_csv), "--out", str(out),
                         "--seed", "3", *TINY_OVERRIDES,
                         "--horizons", "8,16"])
        assert code == 0
        lines = [l for l in buf.getvalue().splitlines() if l.startswith("toy")]
        assert len(lines) == 2


class TestPredictAndPlot:
    def test_predict_then_plot(self, toy_csv, trained_run, capsys):
        code = main(["predict", "--data", str(toy_csv),
                     "--out", str(trained_run), "--seed", "3",
                     *TINY_OVERRIDES])
        assert code == 0
        pred_path = trained_run / "predictions.csv"
        assert pred_path.exists()
        with open(pred_path, newline="") as fh:
            header = next(csv.reader(fh))
        assert header == ["window_id", "step", "channel", "y_true", "y_pred"]

        code = main(["plot", "--out", str(trained_run), "--windows", "2"])
        assert code == 0
        overlay = trained_run / "plots" / "forecast_overlay.csv"
        with open(overlay, newline="") as fh:
            rows = list(csv.DictReader(fh))
        per_window = {}
        for row in rows:
            per_window.setdefault(row["window_id"], 0)
            per_window[row["window_id"]] += 1
        assert set(per_window) == {"0", "1"}
        assert all(count == 8 for count in per_window.values())  # T rows each

    def test_gate_plot_three_series_per_split(self, trained_run):
        gate_file = trained_run / "plots" / "gate_weights.csv"
        with open(gate_file, newline="") as fh:
            rows = list(csv.DictReader(fh))
        splits = {}
        for row in rows:
            splits.setdefault(row["x"], set()).add(row["series"])
        for series in splits.values():
            assert series == {"time", "freq", "vision"}

    def test_plot_without_inputs_exits_1(self, tmp_path):
        assert main(["plot", "--out", str(tmp_path / "empty")]) == 1

    def test_timing_sweep_structure(self, tmp_path):
        out = tmp_path / "sweep"
        assert main(["plot", "--out", str(out), "--timing"]) == 0
        with open(out / "plots" / "scaling.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        lengths = [int(r["x"]) for r in rows]
        seconds = [float(r["y"]) for r in rows]
        assert lengths == [240, 480, 960, 1920]
        assert all(s > 0 for s in seconds)
        # cost grows with lookback end to end (single-run jitter aside)
        assert seconds[-1] > seconds[0]


class TestOverfitEval:
    def test_eval_after_sine_overfit_prints_small_mse(self, tmp_path, capsys):
        ds = sine_trend_dataset(rows=1200, period=24, channels=1,
                                trend_slope=0.002, noise=0.0, seed=2,
                                name="sine")
        path = tmp_path / "sine.csv"
        write_csv(ds, path)
        out = tmp_path / "run"
        overrides = [
            "--override", "trainer.lookback=96",
            "--override", "trainer.horizon=24",
            "--override", "trainer.max_epochs=60",
            "--override", "trainer.patience=60",
            "--override", "trainer.lr_decay=1.0",
            "--override", "trainer.target_train_mse=0.005",
            "--override", "freq.patch_len=8",
            "--override", "freq.d_model=16",
            "--override", "vision.d_model=32",
            "--override", "vision.d_state=8",
        ]
        assert main(["train", "--data", str(path), "--out", str(out),
                     "--seed", "0", *overrides]) == 0
        capsys.readouterr()
        assert main(["eval", "--data", str(path), "--out", str(out),
                     "--seed", "0", *overrides]) == 0
        row = [l for l in capsys.readouterr().out.splitlines()
               if l.startswith("sine")][0]
        assert float(row.split()[2]) < 0.01


class TestStats:
    def test_toy_stats(self, toy_csv, capsys):
        code = main(["stats", "--data", str(toy_csv)])
        assert code == 0
        out = capsys.readouterr().out
        assert "toy" in out

    def test_etth1_standin_matches_published_sizes(self, standin_dir, capsys):
        code = main(["stats", "--data", str(standin_dir / "ETTh1.csv"),
                     str(standin_dir / "ETTh2.csv")])
        assert code == 0
        out = capsys.readouterr().out
        for line in out.splitlines():
            if line.startswith("ETTh"):
                fields = line.split()
                assert fields[1] == "7"
                assert fields[2:5] == ["8545", "2881", "2881"]

    def test_ramp_ratio_near_zero(self, tmp_path, capsys):
        ds = sine_trend_dataset(rows=400, amplitude=0.0, trend_slope=1.0,
                                name="ramp")
        path = tmp_path / "ramp.csv"
        write_csv(ds, path)
        assert main(["stats", "--data", str(path)]) == 0
        out = capsys.readouterr().out
        ratio = float(out.splitlines()[-1].split()[-1])
        assert ratio < 1e-3


class TestAblateCommand:
    def test_ablation_csv_shape(self, toy_csv, tmp_path):
        out = tmp_path / "abl"
        code = main(["ablate", "--data", str(toy_csv), "--out", str(out),
                     "--seed", "3", *TINY_OVERRIDES,
                     "--override", "trainer.max_epochs=1"])
        assert code == 0
        with open(out / "ablation.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["variant"] for r in rows] == [
            "full", "no_time", "no_freq", "no_vision", "no_gating",
        ]
        for row in rows:
            assert np.isfinite(float(row["mse"]))
