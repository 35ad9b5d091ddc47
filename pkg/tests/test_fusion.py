"""Gated fusion: conservation, convexity, hard-gate limits, reports."""

import numpy as np
import pytest

from trits.errors import ContractError, ShapeError
from trits.fusion import GateNetwork, fuse, mean_gate_report
from trits.tensor import Tensor


def random_outputs(rng, batch=2, horizon=5, channels=3, k=3):
    return [Tensor(rng.normal(size=(batch, horizon, channels)))
            for _ in range(k)]


class TestGate:
    def test_zero_initialized_gate_is_uniform(self, rng):
        gate = GateNetwork(channels=3, n_branches=3, rng=rng)
        weights = gate(random_outputs(rng))
        for w in weights:
            assert np.array_equal(w.data, np.full(w.shape, 1.0 / 3.0))

    def test_weights_sum_to_one(self, rng):
        gate = GateNetwork(channels=2, n_branches=3, rng=rng)
        gate.w2.data = rng.normal(size=gate.w2.shape)  # break the zero init
        gate.b2.data = rng.normal(size=gate.b2.shape)
        weights = gate(random_outputs(rng, channels=2))
        total = sum(w.data for w in weights)
        assert np.abs(total - 1.0).max() < 1e-12
        assert all((w.data >= 0).all() for w in weights)

    def test_forced_logits_closed_form(self, rng):
        channels = 2
        gate = GateNetwork(channels=channels, n_branches=3, rng=rng)
        gate.w1.data[:] = 0.0
        gate.b2.data[:channels] = 10.0  # first branch block of the logits
        weights = gate(random_outputs(rng, channels=channels))
        expected = np.exp(10.0) / (np.exp(10.0) + 2.0)
        assert np.abs(weights[0].data - expected).max() < 1e-9
        assert abs(expected - 0.99991) < 1e-5

    def test_two_way_gate_for_ablations(self, rng):
        gate = GateNetwork(channels=3, n_branches=2, rng=rng)
        gate.b2.data = rng.normal(size=gate.b2.shape)
        weights = gate(random_outputs(rng, k=2))
        assert len(weights) == 2
        total = sum(w.data for w in weights)
        assert np.abs(total - 1.0).max() < 1e-12

    def test_branch_count_mismatch(self, rng):
        gate = GateNetwork(channels=3, n_branches=3, rng=rng)
        with pytest.raises(ShapeError):
            gate(random_outputs(rng, k=2))

    def test_output_shape_mismatch(self, rng):
        gate = GateNetwork(channels=3, n_branches=3, rng=rng)
        outs = random_outputs(rng)
        outs[1] = Tensor(np.zeros((2, 4, 3)))
        with pytest.raises(ShapeError):
            gate(outs)


class TestFuse:
    def test_equal_weight_arithmetic(self):
        shape = (1, 2, 2)
        outs = [Tensor(np.full(shape, v)) for v in (3.0, 0.0, 0.0)]
        weights = [Tensor(np.full(shape, 1.0 / 3.0)) for _ in range(3)]
        fused = fuse(outs, weights)
        assert np.abs(fused.data - 1.0).max() < 1e-12

    def test_hard_gate_limit(self, rng):
        gate = GateNetwork(channels=2, n_branches=3, rng=rng)
        gate.w1.data[:] = 0.0
        gate.b2.data[-2:] = 10.0  # favor the last branch on both channels
        outs = random_outputs(rng, channels=2)
        weights = gate(outs)
        fused = fuse(outs, weights)
        assert np.abs(fused.data - outs[2].data).max() < 1e-3

    def test_convexity(self, rng):
        gate = GateNetwork(channels=3, n_branches=3, rng=rng)
        gate.w2.data = rng.normal(size=gate.w2.shape)
        outs = random_outputs(rng)
        fused = fuse(outs, gate(outs)).data
        stacked = np.stack([o.data for o in outs])
        assert (fused <= stacked.max(axis=0) + 1e-12).all()
        assert (fused >= stacked.min(axis=0) - 1e-12).all()

    def test_length_mismatch(self, rng):
        outs = random_outputs(rng)
        with pytest.raises(ShapeError):
            fuse(outs, outs[:2])


class TestMeanGateReport:
    def test_uniform_batch(self):
        shape = (2, 3, 4)
        entry = {name: np.full(shape, 1.0 / 3.0)
                 for name in ("time", "freq", "vision")}
        report = mean_gate_report([entry])
        for value in report.values():
            assert abs(value - 1.0 / 3.0) < 1e-12

    def test_components_sum_to_one(self, rng):
        batches = []
        for _ in range(3):
            logits = rng.normal(size=(2, 4, 3, 3))
            w = np.exp(logits)
            w /= w.sum(axis=2, keepdims=True)
            batches.append({
                "time": w[:, :, 0], "freq": w[:, :, 1], "vision": w[:, :, 2],
            })
        report = mean_gate_report(batches)
        assert abs(sum(report.values()) - 1.0) < 1e-9

    def test_hard_gated_batch(self):
        shape = (1, 2, 2)
        entry = {
            "time": np.full(shape, 0.001),
            "freq": np.full(shape, 0.001),
            "vision": np.full(shape, 0.998),
        }
        report = mean_gate_report([entry])
        assert report["vision"] > 0.99

    def test_empty_input_rejected(self):
        with pytest.raises(ContractError):
            mean_gate_report([])
