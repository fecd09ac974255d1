"""The full virtual-sensor model: encoders, interaction stack, and load head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as tt
from .encoders import ConvEncoder, GruEncoder, Linear
from .gnn import BatchedEdges, InteractionStack
from .graph import HeteroGraph
from .tensor import Parameter, Tensor


class ConfigError(ValueError):
    """A model configuration violates its constraints."""


@dataclass
class ModelConfig:
    node_embedding_dim: int = 10
    gnn_layers: int = 3
    gnn_hidden: int = 80
    head_hidden: int = 40
    head_layers: int = 2
    window: int = 30
    out_dim: int = 2

    def validate(self):
        for field, value in asdict(self).items():
            if value < 1:
                raise ConfigError(f"{field} must be positive, got {value}")
        # the encoder CNN stack (kernels 3, 5, 5) consumes window - 10 samples
        if self.window < 11:
            raise ConfigError(
                f"window {self.window} too short for the encoder kernel stack"
            )
        return self


class HTGNN:
    """Virtual sensor f(X_T, X_V, w) -> (F_x, F_y).

    Inference on a fixed parameter set is deterministic; training mutates
    parameters through the optimizer only.
    """

    def __init__(self, cfg: ModelConfig, graph: HeteroGraph, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        self.graph = graph
        rng = np.random.default_rng(seed)
        d = cfg.node_embedding_dim
        self.speed_enc = ConvEncoder("speed", cfg.window, d, rng)
        self.temp_enc = GruEncoder("temp_gru", d, rng)
        self.vib_enc = ConvEncoder("vib", cfg.window, d, rng)
        # layer-1 widths: temperature d, vibration d + context d
        self.stack = InteractionStack("gnn", d, 2 * d, cfg.gnn_hidden,
                                      cfg.gnn_layers, rng)
        n_total = graph.n_nodes("T") + graph.n_nodes("V")
        self.flat_width = n_total * cfg.gnn_hidden
        self.head = []
        in_dim = self.flat_width
        for i in range(cfg.head_layers - 1):
            self.head.append(Linear(f"head.fc{i}", in_dim, cfg.head_hidden, rng))
            in_dim = cfg.head_hidden
        self.head.append(Linear(f"head.out", in_dim, cfg.out_dim, rng))
        self._batched: dict[int, BatchedEdges] = {}
        _check_unique([p.name for p in self.parameters()])

    def parameters(self) -> list[Parameter]:
        out = (self.speed_enc.params + self.temp_enc.params + self.vib_enc.params
               + self.stack.params)
        for lin in self.head:
            out += lin.params
        return out

    def batched_edges(self, batch: int) -> BatchedEdges:
        if batch not in self._batched:
            self._batched[batch] = BatchedEdges(self.graph, batch)
        return self._batched[batch]

    def forward(self, x_t, x_v, w) -> Tensor:
        """Predict loads for a batch.

        ``x_t``: (B, N_T, L) temperature-rate windows; ``x_v``: (B, N_V, L)
        vibration windows; ``w``: (B, L) speed windows.  Returns (B, 2).
        """
        n_t, n_v, length = (self.graph.n_nodes("T"), self.graph.n_nodes("V"),
                            self.cfg.window)
        x_t = x_t if isinstance(x_t, Tensor) else Tensor(x_t)
        x_v = x_v if isinstance(x_v, Tensor) else Tensor(x_v)
        w = w if isinstance(w, Tensor) else Tensor(w)
        batch = w.shape[0]
        if x_t.shape != (batch, n_t, length) or x_v.shape != (batch, n_v, length):
            raise tt.ShapeError(
                f"sample shapes {x_t.shape}/{x_v.shape}/{w.shape} do not match "
                f"graph ({n_t} T, {n_v} V nodes) and window {length}"
            )

        h_w = self.speed_enc(w)  # (B, d)
        h0 = tt.take_rows(h_w, np.repeat(np.arange(batch), n_t))
        h_t = self.temp_enc(tt.reshape(x_t, (batch * n_t, length)), h0)
        h_vd = self.vib_enc(tt.reshape(x_v, (batch * n_v, length)))
        ctx = tt.take_rows(h_w, np.repeat(np.arange(batch), n_v))
        h_v = tt.concat([h_vd, ctx], axis=1)

        be = self.batched_edges(batch)
        h_t, h_v = self.stack(h_t, h_v, be)

        flat = tt.concat([self._flatten(h_t, "T", batch),
                          self._flatten(h_v, "V", batch)], axis=1)
        out = flat
        for lin in self.head[:-1]:
            out = tt.silu(lin(out))
        return self.head[-1](out)

    def _flatten(self, h: Tensor, meta: str, batch: int) -> Tensor:
        """Gather node rows in the persisted flatten order."""
        n = self.graph.n_nodes(meta)
        pos = self.graph.canonical_positions(meta)
        idx = (np.arange(batch, dtype=np.int64)[:, None] * n + pos[None, :]).ravel()
        return tt.reshape(tt.take_rows(h, idx), (batch, n * self.cfg.gnn_hidden))


def _check_unique(names: list[str]):
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate parameter names: {dupes}")


def l1_loss(pred: Tensor, target) -> Tensor:
    """Mean over samples of the summed absolute errors across outputs."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise tt.ShapeError(f"loss shape mismatch: {pred.shape} vs {target.shape}")
    m = pred.shape[0]
    if m == 0:
        raise ValueError("l1_loss requires at least one sample")
    return tt.tsum(tt.tabs(pred - target)) * (1.0 / m)


def parameter_count(cfg: ModelConfig, graph: HeteroGraph) -> int:
    """Exact number of trainable scalars for a configuration."""
    model = HTGNN(cfg, graph, seed=0)
    return int(sum(p.data.size for p in model.parameters()))
