"""Stacked-channel CNN reference model."""

import numpy as np
import pytest

from htgnn import tensor as tt
from htgnn.baseline import (BaselineCNN, BaselineConfig, BatchNorm1d,
                            baseline_parameter_count)
from htgnn.model import ConfigError
from htgnn.tensor import Tensor, WindowTooShortError

from helpers import check_gradients

IN_CHANNELS = 33  # 20 temperature + 12 vibration + 1 speed
WINDOW = 30


def tiny_config(**kw):
    base = dict(layers=2, channels=4, hidden=5, kernel=3, dropout=0.0,
                batchnorm=False)
    base.update(kw)
    return BaselineConfig(**base)


class TestConfig:
    def test_defaults(self):
        cfg = BaselineConfig()
        assert (cfg.layers, cfg.channels, cfg.hidden, cfg.kernel,
                cfg.dropout) == (4, 100, 100, 9, 0.5)

    def test_dropout_bounds(self):
        with pytest.raises(ConfigError):
            BaselineConfig(dropout=1.0).validate()

    def test_same_padding_needs_odd_kernel(self):
        with pytest.raises(ConfigError):
            BaselineConfig(kernel=8).validate()

    def test_unknown_padding(self):
        with pytest.raises(ConfigError):
            BaselineConfig(padding="causal").validate()


class TestShapes:
    def test_same_padding_keeps_length(self):
        model = BaselineCNN(BaselineConfig(), IN_CHANNELS, WINDOW, seed=0)
        assert model.out_length == WINDOW
        out = model.forward(np.zeros((2, IN_CHANNELS, WINDOW)))
        assert out.shape == (2, 2)

    def test_valid_padding_length_recurrence(self):
        # each valid conv with kernel k removes k - 1 samples
        cfg = tiny_config(layers=3, kernel=5, padding="valid")
        model = BaselineCNN(cfg, 4, 20, seed=0)
        assert model.out_length == 20 - 3 * 4

    def test_valid_padding_window_too_short(self):
        cfg = BaselineConfig(padding="valid")  # 4 layers, kernel 9
        with pytest.raises(WindowTooShortError):
            BaselineCNN(cfg, IN_CHANNELS, WINDOW, seed=0)

    def test_input_shape_rejected(self):
        model = BaselineCNN(tiny_config(), 4, 12, seed=0)
        with pytest.raises(tt.ShapeError):
            model.forward(np.zeros((2, 5, 12)))


class TestDropout:
    def test_training_with_dropout_requires_rng(self):
        model = BaselineCNN(tiny_config(dropout=0.5), 4, 12, seed=0)
        with pytest.raises(ValueError):
            model.forward(np.zeros((1, 4, 12)), training=True)

    def test_eval_mode_is_deterministic(self):
        model = BaselineCNN(BaselineConfig(), IN_CHANNELS, WINDOW, seed=1)
        x = np.random.default_rng(2).normal(size=(2, IN_CHANNELS, WINDOW))
        a = model.forward(x).data
        b = model.forward(x).data
        assert np.array_equal(a, b)

    def test_zero_dropout_training_matches_eval_without_batchnorm(self):
        model = BaselineCNN(tiny_config(), 4, 12, seed=3)
        x = np.random.default_rng(4).normal(size=(3, 4, 12))
        rng = np.random.default_rng(5)
        a = model.forward(x, training=True, rng=rng).data
        b = model.forward(x).data
        assert np.allclose(a, b, atol=1e-14)


class TestBatchNorm:
    def test_training_normalizes_batch(self):
        bn = BatchNorm1d("bn", 3)
        x = np.random.default_rng(6).normal(loc=5.0, scale=2.0, size=(8, 3, 7))
        y = bn(Tensor(x), training=True).data
        assert np.abs(y.mean(axis=(0, 2))).max() < 1e-10
        assert np.abs(y.std(axis=(0, 2)) - 1.0).max() < 1e-3

    def test_running_stats_converge(self):
        bn = BatchNorm1d("bn", 2)
        rng = np.random.default_rng(7)
        for _ in range(200):
            bn(Tensor(rng.normal(loc=3.0, size=(16, 2, 5))), training=True)
        assert np.abs(bn.running_mean - 3.0).max() < 0.2
        assert np.abs(bn.running_var - 1.0).max() < 0.3

    def test_eval_uses_running_stats(self):
        bn = BatchNorm1d("bn", 1)
        bn.running_mean[:] = 2.0
        bn.running_var[:] = 4.0
        x = np.full((1, 1, 3), 4.0)
        y = bn(Tensor(x), training=False).data
        want = (4.0 - 2.0) / np.sqrt(4.0 + bn.eps)
        assert np.allclose(y, want)

    def test_gradients_training_mode(self):
        bn = BatchNorm1d("bn", 2)
        rng = np.random.default_rng(8)
        x = Tensor(rng.normal(size=(4, 2, 3)), requires_grad=True)
        bn.gamma.data[:] = rng.normal(size=2)
        bn.beta.data[:] = rng.normal(size=2)
        weights = rng.normal(size=(4, 2, 3))

        def loss():
            bn.running_mean[:] = 0.0  # keep the check side-effect free
            bn.running_var[:] = 1.0
            return tt.tsum(bn(x, training=True) * weights)

        check_gradients(loss, [x, bn.gamma, bn.beta])


class TestDenseOracle:
    def test_tiny_model_matches_loop_reimplementation(self):
        """Recompute the whole forward pass with explicit loops."""
        cfg = tiny_config(layers=1, channels=2, hidden=3, kernel=3)
        model = BaselineCNN(cfg, 2, 6, seed=9)
        x = np.random.default_rng(10).normal(size=(1, 2, 6))
        got = model.forward(x).data[0]

        def silu(v):
            return v / (1.0 + np.exp(-v))

        w, b, _ = model.blocks[0]
        pad = model.pad
        xp = np.pad(x[0], ((0, 0), (pad, pad)))
        conv = np.zeros((2, 6))
        for c in range(2):
            for pos in range(6):
                acc = b.data[c]
                for ci in range(2):
                    for k in range(3):
                        acc += w.data[c, ci, k] * xp[ci, pos + k]
                conv[c, pos] = acc
        flat = silu(conv).reshape(-1)
        hid = silu(flat @ model.fc.w.data + model.fc.b.data)
        want = hid @ model.out.w.data + model.out.b.data
        assert np.abs(got - want).max() < 1e-10


class TestParameterCount:
    def test_count_matches_manual_sum(self):
        cfg = tiny_config()
        model = BaselineCNN(cfg, 4, 12, seed=0)
        want = sum(p.data.size for p in model.parameters())
        assert baseline_parameter_count(cfg, 4, 12) == want

    def test_default_count_reproducible(self):
        a = baseline_parameter_count(BaselineConfig(), IN_CHANNELS, WINDOW)
        b = baseline_parameter_count(BaselineConfig(), IN_CHANNELS, WINDOW)
        assert a == b


class TestGradients:
    def test_end_to_end_gradients(self):
        cfg = tiny_config(layers=2, channels=3, hidden=4, kernel=3)
        model = BaselineCNN(cfg, 3, 10, seed=11)
        rng = np.random.default_rng(12)
        x = Tensor(rng.normal(size=(2, 3, 10)), requires_grad=True)
        weights = rng.normal(size=(2, 2))
        check_gradients(lambda: tt.tsum(model.forward(x) * weights),
                        [x] + model.parameters())
