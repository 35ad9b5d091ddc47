"""Trainer: metrics, early stopping, determinism, divergence, ablation."""

from dataclasses import replace

import numpy as np
import pytest

from trits.dataio import SplitSpec
from trits.freqbranch import FreqConfig
from trits.model import ModelConfig, TriTSModel
from trits.synth import sine_trend_dataset
from trits.trainer import (
    ABLATION_VARIANTS,
    TrainConfig,
    ablate,
    evaluate,
    gate_report,
    prepare_splits,
    recompute_metrics_from_csv,
    repeat_last_baseline,
    train,
    write_predictions_csv,
)
from trits.visionbranch import VisionConfig


def tiny_train_config(**kwargs):
    model = ModelConfig(
        lookback=24,
        horizon=8,
        freq=FreqConfig(levels=2, patch_len=8, d_model=8),
        vision=VisionConfig(patch=4, depth=1, d_model=16, d_state=4),
    )
    defaults = dict(model=model, batch_size=32, learning_rate=1e-3,
                    max_epochs=3, patience=5, seed=0)
    defaults.update(kwargs)
    return TrainConfig(**defaults)


@pytest.fixture(scope="module")
def tiny_data():
    ds = sine_trend_dataset(rows=400, period=12, channels=2, noise=0.05,
                            seed=11)
    return prepare_splits(ds, lookback=24, spec=SplitSpec(280, 60, 60))


class StubModel:
    """Fixed-prediction model exposing the evaluate() surface."""

    def __init__(self, lookback, horizon, fn):
        self.cfg = type("C", (), {"lookback": lookback, "horizon": horizon})()
        self._fn = fn

    def predict(self, x):
        return self._fn(x)

    def parameter_count(self):
        return 0


class TestEvaluate:
    def test_exact_predictions_give_zero_metrics(self):
        # on a ramp the future is a known function of the window
        values = np.arange(100.0).reshape(-1, 1)
        horizon = 5

        def extrapolate(x):
            last = x[:, -1:, :]
            steps = np.arange(1, horizon + 1).reshape(1, -1, 1)
            return last + steps

        stub = StubModel(10, horizon, extrapolate)
        report = evaluate(stub, values, "test")
        assert report.mse == 0.0 and report.mae == 0.0

    def test_constant_zero_vs_alternating_targets(self):
        values = np.array([1.0, -1.0] * 50).reshape(-1, 1)
        stub = StubModel(8, 4, lambda x: np.zeros((x.shape[0], 4, 1)))
        report = evaluate(stub, values, "test")
        assert abs(report.mse - 1.0) < 1e-12
        assert abs(report.mae - 1.0) < 1e-12

    def test_jensen_and_fields(self, tiny_data):
        cfg = tiny_train_config(max_epochs=1)
        result = train(cfg, tiny_data)
        report = evaluate(result.model, tiny_data.test, "test")
        assert report.mae ** 2 <= report.mse + 1e-12
        assert report.per_step_mse.shape == (8,)
        assert abs(report.per_step_mse.mean() - report.mse) < 1e-9
        assert report.seconds > 0
        assert report.parameter_count == result.model.parameter_count()


class TestTrainLoop:
    def test_history_and_best_epoch(self, tiny_data):
        result = train(tiny_train_config(max_epochs=4), tiny_data)
        assert len(result.history) <= 4
        assert result.best_val_mse == min(r.val_mse for r in result.history)
        assert result.best_epoch >= 1

    def test_patience_one_lr_zero_stops_after_two_epochs(self, tiny_data):
        cfg = tiny_train_config(learning_rate=0.0, patience=1, max_epochs=50)
        result = train(cfg, tiny_data)
        assert len(result.history) == 2

    def test_same_seed_bit_identical_first_epoch(self, tiny_data):
        a = train(tiny_train_config(max_epochs=1), tiny_data)
        b = train(tiny_train_config(max_epochs=1), tiny_data)
        assert a.history[0].train_mse == b.history[0].train_mse
        for pa, pb in zip(a.model.parameters(), b.model.parameters()):
            assert np.array_equal(pa.data, pb.data)

    def test_divergence_aborts_with_diagnostic(self, tiny_data):
        cfg = tiny_train_config(learning_rate=1e200, max_epochs=5,
                                clip_norm=0.0)
        with pytest.warns(UserWarning):
            result = train(cfg, tiny_data)
        assert result.diverged
        assert "non-finite" in result.diagnostic
        # restored checkpoint is finite and usable
        pred = result.model.predict(tiny_data.test[None, :24, :]
                                    if tiny_data.test.ndim == 2
                                    else tiny_data.test[:1])
        assert np.isfinite(pred).all()

    def test_target_train_mse_stops_early(self, tiny_data):
        cfg = tiny_train_config(max_epochs=50, target_train_mse=1e9)
        result = train(cfg, tiny_data)
        assert len(result.history) == 1


class TestBaseline:
    def test_repeat_last_on_constant_series_is_perfect(self):
        values = np.full((50, 2), 3.3)
        report = repeat_last_baseline(values, 10, 5)
        assert report.mse == 0.0

    def test_repeat_last_on_alternating_series(self):
        values = np.array([1.0, -1.0] * 40).reshape(-1, 1)
        report = repeat_last_baseline(values, 8, 2)
        # prediction holds x[-1]; half the horizon steps are wrong by 2
        assert abs(report.mse - 2.0) < 1e-12


class TestMetricIdentity:
    def test_csv_recompute_matches_evaluate(self, tiny_data, tmp_path):
        result = train(tiny_train_config(max_epochs=1), tiny_data)
        report = evaluate(result.model, tiny_data.test, "test")
        path = tmp_path / "pred.csv"
        write_predictions_csv(result.model, tiny_data.test, path)
        mse, mae = recompute_metrics_from_csv(path)
        assert abs(mse - report.mse) < 1e-9
        assert abs(mae - report.mae) < 1e-9


class TestAblation:
    def test_five_variant_table(self, tiny_data):
        cfg = tiny_train_config(max_epochs=1)
        rows = ablate(cfg, tiny_data)
        assert [name for name, _ in rows] == [
            "full", "no_time", "no_freq", "no_vision", "no_gating",
        ]
        for _, report in rows:
            assert np.isfinite(report.mse)

    def test_no_gating_uses_fixed_equal_weights(self, tiny_data):
        cfg = tiny_train_config(max_epochs=1)
        model_cfg = replace(cfg.model, gated=False)
        result = train(replace(cfg, model=model_cfg), tiny_data)
        assert result.model.gate is None
        x = tiny_data.test[:24][None]
        out = result.model.forward(x)
        for w in out.gate_weights.values():
            assert np.array_equal(w, np.full(w.shape, 1.0 / 3.0))

    def test_full_and_ungated_share_branch_init(self):
        full = TriTSModel(tiny_train_config().model, channels=2, seed=4,
                          period=12)
        ungated_cfg = replace(tiny_train_config().model, gated=False)
        ungated = TriTSModel(ungated_cfg, channels=2, seed=4, period=12)
        full_params = {p.name: p.data for p in full.parameters()}
        for p in ungated.parameters():
            assert np.array_equal(p.data, full_params[p.name])

    def test_variant_masks_leave_one_branch(self):
        for flags in ABLATION_VARIANTS.values():
            cfg = replace(tiny_train_config().model, **flags)
            assert len(cfg.enabled_branches()) >= 1


def test_gate_report_sums_to_one(tiny_data):
    result = train(tiny_train_config(max_epochs=1), tiny_data)
    means = gate_report(result.model, tiny_data.val)
    assert abs(sum(means.values()) - 1.0) < 1e-9
    assert set(means) == {"time", "freq", "vision"}
