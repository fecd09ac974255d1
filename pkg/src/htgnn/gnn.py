"""Heterogeneous message passing.

Same-type edges (T-T, V-V) use degree-normalized graph convolution; cross-
type edges (T-V, V-T) use single-head GATv2-style attention.  Messages from
all relations targeting a node type are summed and passed through SiLU.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tt
from .graph import HeteroGraph
from .tensor import Parameter, Tensor

LEAKY_SLOPE = 0.2


def same_type_messages(h_src: Tensor, weight: Tensor,
                       src: np.ndarray, coeff: np.ndarray) -> Tensor:
    """Per-edge GCN messages: coeff_e * (W h_src[e])."""
    if len(src) != len(coeff):
        raise tt.ShapeError(
            f"edge list length {len(src)} != coefficient length {len(coeff)}"
        )
    m = tt.take_rows(tt.matmul(h_src, weight), src)
    return m * coeff[:, None]


def attention_coefficients(h_dst: Tensor, h_src: Tensor,
                           src: np.ndarray, dst: np.ndarray,
                           att_weight: Tensor, att_vec: Tensor,
                           num_targets: int,
                           slope: float = LEAKY_SLOPE) -> Tensor:
    """Per-edge attention, softmax-normalized over each target's in-edges.

    Scores come from the concatenated (target || source) representations
    through ``att_weight``, LeakyReLU, then ``att_vec``.
    """
    cat = tt.concat([tt.take_rows(h_dst, dst), tt.take_rows(h_src, src)], axis=1)
    scores = tt.matmul(tt.leaky_relu(tt.matmul(cat, att_weight), slope), att_vec)
    return tt.segment_softmax(tt.reshape(scores, (len(src),)), dst, num_targets)


def cross_type_messages(alpha: Tensor, h_src: Tensor, weight: Tensor,
                        src: np.ndarray) -> Tensor:
    """Per-edge attention-weighted messages: alpha_e * (W h_src[e])."""
    if alpha.shape[0] != len(src):
        raise tt.ShapeError(
            f"attention length {alpha.shape[0]} != edge count {len(src)}"
        )
    m = tt.take_rows(tt.matmul(h_src, weight), src)
    return m * tt.reshape(alpha, (len(src), 1))


def aggregate_update(messages: list[tuple[Tensor, np.ndarray]],
                     n_targets: int) -> Tensor:
    """SiLU of the summed incoming messages across all relations.

    ``messages`` pairs per-edge message matrices with their target index
    arrays.  Targets with no incoming message receive SiLU(0) = 0.
    """
    widths = {m.shape[1] for m, _ in messages}
    if len(widths) > 1:
        raise tt.ShapeError(f"message widths differ across relations: {widths}")
    total = tt.scatter_sum(messages[0][0], messages[0][1], n_targets)
    for m, dst in messages[1:]:
        total = total + tt.scatter_sum(m, dst, n_targets)
    return tt.silu(total)


class BatchedEdges:
    """Edge index arrays for a graph replicated over a batch.

    For batch element b, node i of a type maps to flat row b * n + i, so the
    same per-edge code path serves batched and unbatched inputs.
    """

    def __init__(self, graph: HeteroGraph, batch: int):
        self.batch = batch
        self.n = {m: graph.n_nodes(m) * batch for m in ("T", "V")}
        self.src = {}
        self.dst = {}
        self.coeff = {}
        offsets = np.arange(batch, dtype=np.int64)
        for rel, (src, dst) in graph.edges.items():
            sm, dm = rel.split("-")
            self.src[rel] = (offsets[:, None] * graph.n_nodes(sm) + src[None, :]).ravel()
            self.dst[rel] = (offsets[:, None] * graph.n_nodes(dm) + dst[None, :]).ravel()
        for rel in ("T-T", "V-V"):
            table = graph.degree_normalizers(rel)
            src, dst = graph.edges[rel]
            self.coeff[rel] = np.tile(table.edge_coeff(src, dst), batch)


class HeteroLayer:
    """One round of relation-wise message passing and update."""

    def __init__(self, name: str, width_t: int, width_v: int, hidden: int,
                 rng: np.random.Generator):
        self.hidden = hidden

        def p(suffix, fan_in, shape):
            return Parameter(f"{name}.{suffix}", tt.uniform_init(rng, fan_in, shape))

        self.w_tt = p("W_tt", width_t, (width_t, hidden))
        self.w_vv = p("W_vv", width_v, (width_v, hidden))
        # cross-type: separate message and attention-score weights
        self.w_tv_msg = p("W_tv_msg", width_t, (width_t, hidden))
        self.w_tv_att = p("W_tv_att", width_v + width_t, (width_v + width_t, hidden))
        self.a_tv = p("a_tv", hidden, (hidden, 1))
        self.w_vt_msg = p("W_vt_msg", width_v, (width_v, hidden))
        self.w_vt_att = p("W_vt_att", width_t + width_v, (width_t + width_v, hidden))
        self.a_vt = p("a_vt", hidden, (hidden, 1))

    def __call__(self, h_t: Tensor, h_v: Tensor, be: BatchedEdges):
        # fused gather-scale-scatter avoids materializing per-edge message
        # matrices; mathematically identical to the per-edge functions above
        agg_tt = tt.weighted_scatter(tt.matmul(h_t, self.w_tt),
                                     be.coeff["T-T"], be.src["T-T"],
                                     be.dst["T-T"], be.n["T"])
        agg_vv = tt.weighted_scatter(tt.matmul(h_v, self.w_vv),
                                     be.coeff["V-V"], be.src["V-V"],
                                     be.dst["V-V"], be.n["V"])

        a_tv = attention_coefficients(h_v, h_t, be.src["T-V"], be.dst["T-V"],
                                      self.w_tv_att, self.a_tv, be.n["V"])
        agg_tv = tt.weighted_scatter(tt.matmul(h_t, self.w_tv_msg), a_tv,
                                     be.src["T-V"], be.dst["T-V"], be.n["V"])

        a_vt = attention_coefficients(h_t, h_v, be.src["V-T"], be.dst["V-T"],
                                      self.w_vt_att, self.a_vt, be.n["T"])
        agg_vt = tt.weighted_scatter(tt.matmul(h_v, self.w_vt_msg), a_vt,
                                     be.src["V-T"], be.dst["V-T"], be.n["T"])

        return tt.silu(agg_tt + agg_vt), tt.silu(agg_vv + agg_tv)

    @property
    def params(self) -> list[Parameter]:
        return [self.w_tt, self.w_vv, self.w_tv_msg, self.w_tv_att, self.a_tv,
                self.w_vt_msg, self.w_vt_att, self.a_vt]


class InteractionStack:
    """A fixed number of HeteroLayers; layer 1 consumes the type-specific
    encoder widths, later layers the shared hidden width."""

    def __init__(self, name: str, width_t: int, width_v: int, hidden: int,
                 n_layers: int, rng: np.random.Generator):
        if n_layers < 1:
            raise ValueError(f"n_layers must be >= 1, got {n_layers}")
        self.layers = []
        wt, wv = width_t, width_v
        for i in range(n_layers):
            self.layers.append(HeteroLayer(f"{name}.layer{i}", wt, wv, hidden, rng))
            wt = wv = hidden

    def __call__(self, h_t: Tensor, h_v: Tensor, be: BatchedEdges):
        for layer in self.layers:
            h_t, h_v = layer(h_t, h_v, be)
        return h_t, h_v

    @property
    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params]
