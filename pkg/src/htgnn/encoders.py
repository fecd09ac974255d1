"""Context-aware per-node dynamics extraction.

The rotational-speed window is encoded by a small 1-D CNN into a context
vector; temperature windows run through a GRU whose hidden state is
initialized with that context; vibration windows run through a second CNN
and are concatenated with the context.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .tensor import Parameter, Tensor


class Linear:
    """y = x @ W + b with W stored as (in_dim, out_dim)."""

    def __init__(self, name: str, in_dim: int, out_dim: int,
                 rng: np.random.Generator):
        self.w = Parameter(f"{name}.w", tt.uniform_init(rng, in_dim, (in_dim, out_dim)))
        self.b = Parameter(f"{name}.b", tt.uniform_init(rng, in_dim, (out_dim,)))

    def __call__(self, x: Tensor) -> Tensor:
        return tt.matmul(x, self.w) + self.b

    @property
    def params(self) -> list[Parameter]:
        return [self.w, self.b]


class ConvEncoder:
    """Three-stage 1-D CNN (SiLU after each stage) plus a linear projection
    of the flattened final feature map to a fixed-size embedding."""

    def __init__(self, name: str, window: int, out_dim: int,
                 rng: np.random.Generator,
                 channels: tuple[int, ...] = (2, 2, 1),
                 kernels: tuple[int, ...] = (3, 5, 5)):
        if len(channels) != len(kernels):
            raise ValueError("channels and kernels must have equal length")
        self.window = window
        self.out_dim = out_dim
        self.stages = []
        c_in, length = 1, window
        for i, (c_out, k) in enumerate(zip(channels, kernels)):
            length = length - k + 1
            if length < 1:
                raise tt.WindowTooShortError(
                    f"window {window} too short for kernel stack {kernels}"
                )
            w = Parameter(f"{name}.conv{i}.w",
                          tt.uniform_init(rng, c_in * k, (c_out, c_in, k)))
            b = Parameter(f"{name}.conv{i}.b",
                          tt.uniform_init(rng, c_in * k, (c_out,)))
            self.stages.append((w, b))
            c_in = c_out
        self.feature_len = length * channels[-1]
        self.proj = Linear(f"{name}.proj", self.feature_len, out_dim, rng)

    def __call__(self, x: Tensor | np.ndarray) -> Tensor:
        """Encode ``(N, L)`` signal rows into ``(N, out_dim)`` embeddings."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        n = x.shape[0]
        h = tt.reshape(x, (n, 1, self.window))
        for w, b in self.stages:
            h = tt.silu(tt.conv1d(h, w, b))
        return self.proj(tt.reshape(h, (n, self.feature_len)))

    @property
    def params(self) -> list[Parameter]:
        out = [p for w, b in self.stages for p in (w, b)]
        return out + self.proj.params


class GruEncoder:
    """Scalar-input GRU; returns SiLU of the final hidden state.

    Gates follow the standard formulation:
        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        c = tanh(x Wc + (r * h) Uc + bc)
        h' = (1 - z) * h + z * c
    """

    def __init__(self, name: str, hidden: int, rng: np.random.Generator,
                 in_dim: int = 1):
        self.hidden = hidden
        self.in_dim = in_dim

        def p(suffix, fan_in, shape):
            return Parameter(f"{name}.{suffix}", tt.uniform_init(rng, fan_in, shape))

        self.w_z = p("W_z", in_dim, (in_dim, hidden))
        self.u_z = p("U_z", hidden, (hidden, hidden))
        self.b_z = p("b_z", hidden, (hidden,))
        self.w_r = p("W_r", in_dim, (in_dim, hidden))
        self.u_r = p("U_r", hidden, (hidden, hidden))
        self.b_r = p("b_r", hidden, (hidden,))
        self.w_c = p("W_c", in_dim, (in_dim, hidden))
        self.u_c = p("U_c", hidden, (hidden, hidden))
        self.b_c = p("b_c", hidden, (hidden,))

    def step(self, x_t: Tensor, h: Tensor) -> Tensor:
        z = tt.sigmoid(tt.matmul(x_t, self.w_z) + tt.matmul(h, self.u_z) + self.b_z)
        r = tt.sigmoid(tt.matmul(x_t, self.w_r) + tt.matmul(h, self.u_r) + self.b_r)
        c = tt.tanh(tt.matmul(x_t, self.w_c) + tt.matmul(r * h, self.u_c) + self.b_c)
        return (1.0 - z) * h + z * c

    def __call__(self, x: Tensor | np.ndarray, h0: Tensor) -> Tensor:
        """Run over ``(N, L)`` scalar sequences from initial state ``h0``.

        The whole sequence executes as one fused kernel with a hand-written
        backward pass; ``step`` is the op-by-op reference used in tests.
        """
        x = x if isinstance(x, Tensor) else Tensor(x)
        if not np.all(np.isfinite(x.data)):
            raise ValueError("non-finite values in GRU input")
        weights = (self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r,
                   self.w_c, self.u_c, self.b_c)
        hs, zs, rs, cs = tt.backend.gru_forward(
            x.data, h0.data, *(w.data for w in weights))

        def bwd(g):
            grads = tt.backend.gru_backward(
                x.data, hs, zs, rs, cs,
                self.w_z.data, self.u_z.data, self.w_r.data, self.u_r.data,
                self.w_c.data, self.u_c.data, g)
            gx, gh0 = grads[0], grads[1]
            return (gx if x.requires_grad else None,
                    gh0 if h0.requires_grad else None) + grads[2:]

        final = tt._from_op(hs[:, -1].copy(), (x, h0) + weights, bwd)
        return tt.silu(final)

    @property
    def params(self) -> list[Parameter]:
        return [self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r,
                self.w_c, self.u_c, self.b_c]
