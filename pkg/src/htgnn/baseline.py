"""1-D CNN baseline operating on stacked sensor channels.

Input layout: channels = N_T temperature-rate rows + N_V vibration rows + 1
speed row, width = window length.  Four conv blocks (conv, batch norm, SiLU,
dropout) feed a dense layer and a two-output head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tt
from .encoders import Linear
from .model import ConfigError
from .tensor import Parameter, Tensor


@dataclass
class BaselineConfig:
    layers: int = 4
    channels: int = 100
    hidden: int = 100
    kernel: int = 9
    dropout: float = 0.5
    batchnorm: bool = True
    # "same" keeps the window length through conv blocks so the default
    # 4-layer / kernel-9 configuration fits a 30-sample window; "valid"
    # shrinks by kernel-1 per layer.
    padding: str = "same"

    def validate(self):
        for field in ("layers", "channels", "hidden", "kernel"):
            if getattr(self, field) < 1:
                raise ConfigError(f"{field} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.padding not in ("same", "valid"):
            raise ConfigError(f"padding must be 'same' or 'valid'")
        if self.padding == "same" and self.kernel % 2 == 0:
            raise ConfigError("'same' padding requires an odd kernel size")
        return self


class BatchNorm1d:
    """Batch normalization over (batch, length) per channel.

    Training uses batch statistics and updates running estimates; evaluation
    uses the running estimates.
    """

    def __init__(self, name: str, channels: int, eps: float = 1e-5,
                 momentum: float = 0.1):
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        c = self.gamma.shape[0]
        if not training:
            mu = self.running_mean.reshape(1, c, 1)
            sd = np.sqrt(self.running_var + self.eps).reshape(1, c, 1)
            xn = (x - mu) * (1.0 / sd)
            return xn * tt.reshape(self.gamma, (1, c, 1)) + tt.reshape(
                self.beta, (1, c, 1))

        # fused training path: one op with the closed-form batch-norm backward
        mu = x.data.mean(axis=(0, 2))
        xc = x.data - mu[None, :, None]
        var = np.mean(xc * xc, axis=(0, 2))
        inv = 1.0 / np.sqrt(var + self.eps)
        xn = xc * inv[None, :, None]
        self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mu
        self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var
        y = self.gamma.data[None, :, None] * xn + self.beta.data[None, :, None]
        gamma, beta = self.gamma, self.beta

        def bwd(g):
            ggamma = np.einsum("bcl,bcl->c", g, xn)
            gbeta = g.sum(axis=(0, 2))
            gx = None
            if x.requires_grad:
                gxn = g * gamma.data[None, :, None]
                m1 = gxn.mean(axis=(0, 2))
                m2 = (gxn * xn).mean(axis=(0, 2))
                gx = inv[None, :, None] * (
                    gxn - m1[None, :, None] - xn * m2[None, :, None]
                )
            return gx, ggamma, gbeta

        return tt._from_op(y, (x, gamma, beta), bwd)

    @property
    def params(self) -> list[Parameter]:
        return [self.gamma, self.beta]


class BaselineCNN:
    def __init__(self, cfg: BaselineConfig, in_channels: int, window: int,
                 seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.in_channels = in_channels
        self.window = window
        rng = np.random.default_rng(seed)
        self.pad = (cfg.kernel - 1) // 2 if cfg.padding == "same" else 0
        self.blocks = []
        c_in, length = in_channels, window
        for i in range(cfg.layers):
            length = length + 2 * self.pad - cfg.kernel + 1
            if length < 1:
                raise tt.WindowTooShortError(
                    f"window {window} shorter than the receptive field of "
                    f"{cfg.layers} valid-conv layers with kernel {cfg.kernel}"
                )
            w = Parameter(f"cnn.conv{i}.w",
                          tt.uniform_init(rng, c_in * cfg.kernel,
                                          (cfg.channels, c_in, cfg.kernel)))
            b = Parameter(f"cnn.conv{i}.b",
                          tt.uniform_init(rng, c_in * cfg.kernel, (cfg.channels,)))
            bn = BatchNorm1d(f"cnn.bn{i}", cfg.channels) if cfg.batchnorm else None
            self.blocks.append((w, b, bn))
            c_in = cfg.channels
        self.out_length = length
        self.fc = Linear("cnn.fc", cfg.channels * length, cfg.hidden, rng)
        self.out = Linear("cnn.out", cfg.hidden, 2, rng)

    def parameters(self) -> list[Parameter]:
        params = []
        for w, b, bn in self.blocks:
            params += [w, b] + (bn.params if bn is not None else [])
        return params + self.fc.params + self.out.params

    def forward(self, x, training: bool = False,
                rng: np.random.Generator | None = None) -> Tensor:
        """``x``: (B, in_channels, L) stacked windows.  Returns (B, 2)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.ndim != 3 or x.shape[1:] != (self.in_channels, self.window):
            raise tt.ShapeError(
                f"expected (B, {self.in_channels}, {self.window}), got {x.shape}"
            )
        if training and self.cfg.dropout > 0.0 and rng is None:
            raise ValueError("training with dropout requires an rng")
        h = x
        for w, b, bn in self.blocks:
            h = tt.conv1d(h, w, b, padding=self.pad)
            if bn is not None:
                h = bn(h, training)
            h = tt.silu(h)
            if training and self.cfg.dropout > 0.0:
                keep = rng.random(h.shape) >= self.cfg.dropout
                h = h * (keep / (1.0 - self.cfg.dropout))
        flat = tt.reshape(h, (h.shape[0], self.cfg.channels * self.out_length))
        return self.out(tt.silu(self.fc(flat)))


def baseline_parameter_count(cfg: BaselineConfig, in_channels: int,
                             window: int) -> int:
    model = BaselineCNN(cfg, in_channels, window, seed=0)
    return int(sum(p.data.size for p in model.parameters()))
