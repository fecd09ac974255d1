"""Self-describing checkpoint container.

A checkpoint is a single ``.npz`` archive holding one array per parameter
under the key ``param/<name>`` plus a ``__meta__`` JSON string with
everything needed to rebuild the model: kind ("htgnn" or "cnn"), the config
dict, the graph (nodes, edges, flatten order), and normalization statistics.
"""

from __future__ import annotations

import json

import numpy as np

from .graph import HeteroGraph, SensorNode
from .tensor import Parameter


def save_checkpoint(path, params: list[Parameter], meta: dict):
    names = [p.name for p in params]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate parameter names: {dupes}")
    arrays = {f"param/{p.name}": p.data for p in params}
    arrays["__meta__"] = np.array(json.dumps(meta, sort_keys=True))
    np.savez(path, **arrays)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["__meta__"]))
        params = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    return params, meta


def graph_to_meta(graph: HeteroGraph) -> dict:
    return {
        "nodes": {
            m: [[n.node_id, n.meta, n.subtype, n.bearing, n.angle_deg]
                for n in graph.nodes[m]]
            for m in graph.nodes
        },
        "edges": {r: [s.tolist(), d.tolist()] for r, (s, d) in graph.edges.items()},
        "node_order": {m: list(ids) for m, ids in graph.node_order.items()},
    }


def graph_from_meta(meta: dict) -> HeteroGraph:
    nodes = {
        m: [SensorNode(i, t, s, int(b), float(a)) for i, t, s, b, a in rows]
        for m, rows in meta["nodes"].items()
    }
    edges = {r: (np.array(s, dtype=np.int64), np.array(d, dtype=np.int64))
             for r, (s, d) in meta["edges"].items()}
    order = {m: tuple(ids) for m, ids in meta["node_order"].items()}
    return HeteroGraph(nodes, edges, node_order=order)
