"""Typed sensor graph for the two-bearing test rig.

Nodes are temperature (T) and vibration (V) sensors with angular positions;
relations are T-T and V-V (undirected, degree-normalized message path) and
T-V / V-T (directed, attention path).  The graph is static: connectivity is
assumed invariant over the observation window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SAME_TYPE_RELATIONS = ("T-T", "V-V")
CROSS_TYPE_RELATIONS = ("T-V", "V-T")
RELATIONS = SAME_TYPE_RELATIONS + CROSS_TYPE_RELATIONS

# relation -> (source meta-type, target meta-type)
RELATION_SIGNATURE = {
    "T-T": ("T", "T"),
    "V-V": ("V", "V"),
    "T-V": ("T", "V"),
    "V-T": ("V", "T"),
}

T_SUBTYPES = ("T_OR", "T_IR")
V_SUBTYPES = ("V_AX", "V_RA")

# Angular half-width of a sensor "sector"; T and V sensors within this
# distance on the same bearing are considered co-located.
COLOCATE_DEG = 22.5


class LayoutError(ValueError):
    """A rig layout cannot produce a valid sensor graph."""


@dataclass(frozen=True)
class SensorNode:
    node_id: str
    meta: str          # "T" or "V"
    subtype: str       # T_OR / T_IR / V_AX / V_RA
    bearing: int
    angle_deg: float

    def __post_init__(self):
        expected = T_SUBTYPES if self.meta == "T" else V_SUBTYPES
        if self.meta not in ("T", "V") or self.subtype not in expected:
            raise LayoutError(
                f"subtype {self.subtype!r} inconsistent with meta {self.meta!r}"
            )
        if not 0.0 <= self.angle_deg < 360.0:
            raise LayoutError(f"angle {self.angle_deg} outside [0, 360)")


@dataclass(frozen=True)
class DegreeTable:
    """Normalized degrees (self-loop included) for one same-type relation."""

    relation: str
    d_hat: np.ndarray  # per node of the relation's type

    def edge_coeff(self, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
        return 1.0 / np.sqrt(self.d_hat[src] * self.d_hat[dst])


def angular_distance(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def default_layout() -> list[SensorNode]:
    """Two identical bearings: 8 outer-ring + 2 inner-ring temperature
    sensors and 6 vibration sensors (4 axial, 2 radial) each."""
    nodes = []
    for b in (1, 2):
        for a in range(0, 360, 45):
            nodes.append(SensorNode(f"B{b}_TOR_{a:03d}", "T", "T_OR", b, float(a)))
        for a in (0, 180):
            nodes.append(SensorNode(f"B{b}_TIR_{a:03d}", "T", "T_IR", b, float(a)))
        for a in (45, 135, 225, 315):
            nodes.append(SensorNode(f"B{b}_VAX_{a:03d}", "V", "V_AX", b, float(a)))
        for a in (90, 270):
            nodes.append(SensorNode(f"B{b}_VRA_{a:03d}", "V", "V_RA", b, float(a)))
    return nodes


def _canonical_sorted(nodes: list[SensorNode]) -> list[SensorNode]:
    """Flatten order: bearing 1 then 2; for T, OR before IR; ascending angle."""
    def key(n: SensorNode):
        sub_rank = 0 if n.subtype in ("T_OR", "V_AX", "V_RA") else 1
        if n.meta == "T":
            return (n.bearing, sub_rank, n.angle_deg, n.node_id)
        return (n.bearing, n.angle_deg, n.subtype, n.node_id)
    return sorted(nodes, key=key)


class HeteroGraph:
    """Typed node sets with per-relation edge lists and fixed node ordering.

    ``nodes[meta]`` is an ordered list of SensorNode; ``edges[rel]`` is a
    pair of int arrays (source indices, target indices), both local to the
    relation's endpoint types.  ``node_order[meta]`` persists the canonical
    flatten order as node ids, independent of list positions.
    """

    def __init__(self, nodes: dict[str, list[SensorNode]],
                 edges: dict[str, tuple[np.ndarray, np.ndarray]],
                 node_order: dict[str, tuple[str, ...]] | None = None):
        self.nodes = {m: list(ns) for m, ns in nodes.items()}
        self.edges = {
            r: (np.asarray(s, dtype=np.int64), np.asarray(d, dtype=np.int64))
            for r, (s, d) in edges.items()
        }
        if node_order is None:
            node_order = {
                m: tuple(n.node_id for n in _canonical_sorted(self.nodes[m]))
                for m in self.nodes
            }
        self.node_order = {m: tuple(ids) for m, ids in node_order.items()}
        self._index = {
            m: {n.node_id: i for i, n in enumerate(self.nodes[m])}
            for m in self.nodes
        }
        self.validate()

    # -- structure ---------------------------------------------------------

    def n_nodes(self, meta: str) -> int:
        return len(self.nodes[meta])

    def validate(self):
        for m in ("T", "V"):
            if m not in self.nodes:
                raise LayoutError(f"missing node type {m}")
        n_types = sum(1 for m in self.nodes if self.nodes[m])
        if n_types + len(self.edges) <= 2:
            raise LayoutError("heterogeneity condition |A| + |R| > 2 violated")
        for m, ids in self._index.items():
            if len(ids) != len(self.nodes[m]):
                raise LayoutError(f"duplicate node ids in type {m}")
            if set(self.node_order[m]) != set(ids):
                raise LayoutError(f"node_order for {m} does not cover all nodes")
        for rel, (src, dst) in self.edges.items():
            sm, dm = RELATION_SIGNATURE[rel]
            if len(src) != len(dst):
                raise LayoutError(f"ragged edge list for {rel}")
            if len(src) and (src.min() < 0 or src.max() >= self.n_nodes(sm)
                             or dst.min() < 0 or dst.max() >= self.n_nodes(dm)):
                raise LayoutError(f"edge endpoint out of range in {rel}")
            if rel in SAME_TYPE_RELATIONS:
                pairs = set(zip(src.tolist(), dst.tolist()))
                for s, d in pairs:
                    if s != d and (d, s) not in pairs:
                        raise LayoutError(
                            f"undirected relation {rel} missing reverse of "
                            f"({s}, {d})"
                        )

    def neighbors(self, relation: str, target: int) -> list[int]:
        """In-neighborhood (source indices) of ``target`` under ``relation``."""
        if relation not in self.edges:
            raise KeyError(f"unknown relation {relation!r}")
        src, dst = self.edges[relation]
        sm, dm = RELATION_SIGNATURE[relation]
        if not 0 <= target < self.n_nodes(dm):
            raise IndexError(f"target {target} out of range for type {dm}")
        return sorted(src[dst == target].tolist())

    def degree_normalizers(self, relation: str) -> DegreeTable:
        """d_hat per node: 1 (self-loop) + number of non-self neighbors."""
        if relation not in SAME_TYPE_RELATIONS:
            raise ValueError(
                f"degree normalization applies to same-type relations only, "
                f"got {relation!r}"
            )
        src, dst = self.edges[relation]
        meta = RELATION_SIGNATURE[relation][0]
        d_hat = np.bincount(dst[src != dst], minlength=self.n_nodes(meta)) + 1.0
        return DegreeTable(relation, d_hat.astype(np.float64))

    def canonical_positions(self, meta: str) -> np.ndarray:
        """Current index of each node in persisted flatten order."""
        idx = self._index[meta]
        return np.array([idx[i] for i in self.node_order[meta]], dtype=np.int64)

    def relabel(self, perms: dict[str, np.ndarray]) -> "HeteroGraph":
        """Permute node list positions per type; ids and flatten order are
        preserved.  ``perms[meta][new_index] = old_index``."""
        new_nodes = {}
        inverse = {}
        for m in self.nodes:
            perm = np.asarray(perms.get(m, np.arange(self.n_nodes(m))))
            new_nodes[m] = [self.nodes[m][int(o)] for o in perm]
            inv = np.empty_like(perm)
            inv[perm] = np.arange(len(perm))
            inverse[m] = inv
        new_edges = {}
        for rel, (src, dst) in self.edges.items():
            sm, dm = RELATION_SIGNATURE[rel]
            new_edges[rel] = _sorted_edges(inverse[sm][src], inverse[dm][dst])
        return HeteroGraph(new_nodes, new_edges, node_order=self.node_order)


def _sorted_edges(src, dst) -> tuple[np.ndarray, np.ndarray]:
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    order = np.lexsort((src, dst))
    return src[order], dst[order]


def build_bearing_graph(layout: list[SensorNode],
                        colocate_deg: float = COLOCATE_DEG,
                        ir_clique_across_bearings: bool = True) -> HeteroGraph:
    """Construct the rig graph from sensor positions.

    Connectivity rules:
      * T_OR: ring adjacency to the two nearest angular neighbors, per bearing
      * T_IR: clique (across both bearings by default)
      * T_IR to the angularly nearest T_OR node(s) on the same bearing
      * V: ring adjacency per bearing plus facing-node edges across bearings
      * directed T-V and V-T edges between co-located sensor pairs
      * self-loops on every node in its same-type relation
    """
    if not layout:
        raise LayoutError("empty sensor layout")
    t_nodes = _canonical_sorted([n for n in layout if n.meta == "T"])
    v_nodes = _canonical_sorted([n for n in layout if n.meta == "V"])
    if not t_nodes or not v_nodes:
        raise LayoutError("layout must contain both temperature and vibration sensors")

    tt: set[tuple[int, int]] = set()
    vv: set[tuple[int, int]] = set()

    def add_undirected(store, i, j):
        if i != j:
            store.add((i, j))
            store.add((j, i))

    def ring(indices_with_angle, store):
        ordered = sorted(indices_with_angle, key=lambda ia: (ia[1], ia[0]))
        n = len(ordered)
        if n < 2:
            return
        for k in range(n if n > 2 else 1):
            add_undirected(store, ordered[k][0], ordered[(k + 1) % n][0])

    bearings = sorted({n.bearing for n in layout})

    # T_OR rings and V rings per bearing
    for b in bearings:
        ring([(i, n.angle_deg) for i, n in enumerate(t_nodes)
              if n.bearing == b and n.subtype == "T_OR"], tt)
        ring([(i, n.angle_deg) for i, n in enumerate(v_nodes)
              if n.bearing == b], vv)

    # T_IR clique
    ir = [i for i, n in enumerate(t_nodes) if n.subtype == "T_IR"]
    for a in ir:
        for b_ in ir:
            if a < b_ and (ir_clique_across_bearings
                           or t_nodes[a].bearing == t_nodes[b_].bearing):
                add_undirected(tt, a, b_)

    # T_IR to nearest T_OR (same bearing, ties included)
    for i in ir:
        ors = [(j, angular_distance(t_nodes[i].angle_deg, t_nodes[j].angle_deg))
               for j, n in enumerate(t_nodes)
               if n.bearing == t_nodes[i].bearing and n.subtype == "T_OR"]
        if ors:
            best = min(d for _, d in ors)
            for j, d in ors:
                if d <= best + 1e-9:
                    add_undirected(tt, i, j)

    # facing V nodes across bearings
    for i, ni in enumerate(v_nodes):
        for j, nj in enumerate(v_nodes):
            if (i < j and ni.bearing != nj.bearing and ni.subtype == nj.subtype
                    and angular_distance(ni.angle_deg, nj.angle_deg) < 1e-9):
                add_undirected(vv, i, j)

    # self-loops
    for i in range(len(t_nodes)):
        tt.add((i, i))
    for i in range(len(v_nodes)):
        vv.add((i, i))

    # co-located cross-type pairs
    tv = []
    for ti, tn in enumerate(t_nodes):
        for vi, vn in enumerate(v_nodes):
            if (tn.bearing == vn.bearing
                    and angular_distance(tn.angle_deg, vn.angle_deg)
                    <= colocate_deg):
                tv.append((ti, vi))

    edges = {
        "T-T": _sorted_edges(*zip(*sorted(tt))),
        "V-V": _sorted_edges(*zip(*sorted(vv))),
        "T-V": _sorted_edges([t for t, _ in tv], [v for _, v in tv]),
        "V-T": _sorted_edges([v for _, v in tv], [t for t, _ in tv]),
    }
    return HeteroGraph({"T": t_nodes, "V": v_nodes}, edges)


# -- file formats -------------------------------------------------------------


def save_layout_csv(path, layout: list[SensorNode]):
    with open(path, "w") as f:
        f.write("sensor_id,meta,subtype,bearing,angle_deg\n")
        for n in layout:
            f.write(f"{n.node_id},{n.meta},{n.subtype},{n.bearing},{n.angle_deg}\n")


def load_layout_csv(path) -> list[SensorNode]:
    layout = []
    with open(path) as f:
        header = f.readline().strip().split(",")
        expected = ["sensor_id", "meta", "subtype", "bearing", "angle_deg"]
        if header != expected:
            raise LayoutError(f"layout CSV header {header} != {expected}")
        for line in f:
            if not line.strip():
                continue
            sid, meta, subtype, bearing, angle = line.strip().split(",")
            layout.append(SensorNode(sid, meta, subtype, int(bearing), float(angle)))
    return layout


def save_edges_csv(path, graph: HeteroGraph):
    with open(path, "w") as f:
        f.write("relation,src_id,dst_id\n")
        for rel in RELATIONS:
            src, dst = graph.edges[rel]
            sm, dm = RELATION_SIGNATURE[rel]
            for s, d in zip(src, dst):
                f.write(f"{rel},{graph.nodes[sm][s].node_id},"
                        f"{graph.nodes[dm][d].node_id}\n")


def load_graph_with_edges_csv(layout: list[SensorNode], path) -> HeteroGraph:
    """Build a graph from a layout plus an explicit edge-list override file."""
    t_nodes = _canonical_sorted([n for n in layout if n.meta == "T"])
    v_nodes = _canonical_sorted([n for n in layout if n.meta == "V"])
    index = {"T": {n.node_id: i for i, n in enumerate(t_nodes)},
             "V": {n.node_id: i for i, n in enumerate(v_nodes)}}
    lists: dict[str, list[tuple[int, int]]] = {r: [] for r in RELATIONS}
    with open(path) as f:
        header = f.readline().strip().split(",")
        if header != ["relation", "src_id", "dst_id"]:
            raise LayoutError(f"edge CSV header {header} unexpected")
        for line in f:
            if not line.strip():
                continue
            rel, sid, did = line.strip().split(",")
            if rel not in RELATIONS:
                raise LayoutError(f"unknown relation {rel!r} in edge file")
            sm, dm = RELATION_SIGNATURE[rel]
            lists[rel].append((index[sm][sid], index[dm][did]))
    edges = {
        rel: _sorted_edges([s for s, _ in pairs], [d for _, d in pairs])
        for rel, pairs in lists.items()
    }
    return HeteroGraph({"T": t_nodes, "V": v_nodes}, edges)
