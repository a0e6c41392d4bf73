"""Graph encoding of a KAN for weight-space models.

Nodes are neurons; every univariate edge function becomes one directed
edge q -> p carrying its parameter vector (w_b, w_s, c...) as the edge
feature.  Node and edge tables are stored as flat arrays in a canonical
order (layers outer, then p outer / q inner for edges) so two graphs
built from nets with equal parameters are equal table-for-table.

Positional encodings break the symmetries that are NOT in the relabeling
group: every input neuron and every output neuron gets its own id, while
all neurons inside one hidden layer share an id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .containers import read_container, write_container
from .kan import KanNet
from .splines import make_spec
from .symmetry import GroupElement

__all__ = [
    "KanGraph",
    "GraphNodeView",
    "GraphEdgeView",
    "build_graph",
    "assign_pe",
    "n_pe_ids",
    "inject_input",
    "node_permutation",
    "induced_edge_permutation",
    "permute_graph",
    "serialize_graph",
    "deserialize_graph",
    "graph_to_text",
    "graph_from_text",
]

GRAPH_MAGIC = b"WKGR"
GRAPH_VERSION = 1


@dataclass(frozen=True)
class GraphNodeView:
    node_id: int
    layer_index: int
    pe_id: int
    input_scalar: float


@dataclass(frozen=True)
class GraphEdgeView:
    src: int
    dst: int
    layer_index: int
    feature: np.ndarray
    pe_pair: tuple[int, int]


@dataclass
class KanGraph:
    """Flat-table graph representation of one KAN."""

    dims: list[int]
    a: float
    b: float
    grid_size: int
    degree: int
    node_layer: np.ndarray   # (n,) int64
    node_pe: np.ndarray      # (n,) int64, -1 while unassigned
    node_input: np.ndarray   # (n,) float64
    edge_src: np.ndarray     # (m,) int64
    edge_dst: np.ndarray     # (m,) int64
    edge_layer: np.ndarray   # (m,) int64
    edge_feat: np.ndarray    # (m, 2 + G + k) float64
    edge_pe_src: np.ndarray  # (m,) int64
    edge_pe_dst: np.ndarray  # (m,) int64

    @property
    def n(self) -> int:
        return len(self.node_layer)

    @property
    def m(self) -> int:
        return len(self.edge_src)

    @property
    def feature_dim(self) -> int:
        return self.edge_feat.shape[1]

    @property
    def has_pe(self) -> bool:
        return bool((self.node_pe >= 0).all())

    @property
    def nodes(self) -> list[GraphNodeView]:
        return [
            GraphNodeView(i, int(self.node_layer[i]), int(self.node_pe[i]), float(self.node_input[i]))
            for i in range(self.n)
        ]

    @property
    def edges(self) -> list[GraphEdgeView]:
        return [
            GraphEdgeView(
                int(self.edge_src[e]), int(self.edge_dst[e]), int(self.edge_layer[e]),
                self.edge_feat[e], (int(self.edge_pe_src[e]), int(self.edge_pe_dst[e])),
            )
            for e in range(self.m)
        ]

    def copy(self) -> "KanGraph":
        return KanGraph(
            list(self.dims), self.a, self.b, self.grid_size, self.degree,
            self.node_layer.copy(), self.node_pe.copy(), self.node_input.copy(),
            self.edge_src.copy(), self.edge_dst.copy(), self.edge_layer.copy(),
            self.edge_feat.copy(), self.edge_pe_src.copy(), self.edge_pe_dst.copy(),
        )


def _node_offsets(dims) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(dims)])


def build_graph(net: KanNet) -> KanGraph:
    """Encode a network as a graph; positional encodings start unassigned."""
    dims = net.dims
    offs = _node_offsets(dims)
    n = int(offs[-1])
    node_layer = np.repeat(np.arange(len(dims), dtype=np.int64), dims)
    src_list, dst_list, lay_list, feat_list = [], [], [], []
    for l, layer in enumerate(net.layers):
        d_out, d_in = layer.d_out, layer.d_in
        p, q = np.meshgrid(np.arange(d_out), np.arange(d_in), indexing="ij")
        src_list.append(offs[l] + q.ravel())
        dst_list.append(offs[l + 1] + p.ravel())
        lay_list.append(np.full(d_out * d_in, l, dtype=np.int64))
        feat_list.append(layer.params.reshape(d_out * d_in, -1))
    return KanGraph(
        dims=dims, a=net.spec.a, b=net.spec.b, grid_size=net.spec.grid_size, degree=net.spec.degree,
        node_layer=node_layer,
        node_pe=np.full(n, -1, dtype=np.int64),
        node_input=np.zeros(n, dtype=np.float64),
        edge_src=np.concatenate(src_list).astype(np.int64),
        edge_dst=np.concatenate(dst_list).astype(np.int64),
        edge_layer=np.concatenate(lay_list),
        edge_feat=np.concatenate(feat_list, axis=0).astype(np.float64),
        edge_pe_src=np.full(sum(a * b for a, b in zip(dims[:-1], dims[1:])), -1, dtype=np.int64),
        edge_pe_dst=np.full(sum(a * b for a, b in zip(dims[:-1], dims[1:])), -1, dtype=np.int64),
    )


def n_pe_ids(dims) -> int:
    """Distinct positional ids: one per input, one per hidden layer, one per output."""
    return dims[0] + (len(dims) - 2) + dims[-1]


def assign_pe(graph: KanGraph) -> KanGraph:
    """Fill positional ids: inputs 0..d0-1, one shared id per hidden layer, outputs distinct."""
    dims = graph.dims
    d0, d_last, n_hidden = dims[0], dims[-1], len(dims) - 2
    per_node = []
    per_node.append(np.arange(d0, dtype=np.int64))
    for j in range(n_hidden):
        per_node.append(np.full(dims[1 + j], d0 + j, dtype=np.int64))
    per_node.append(d0 + n_hidden + np.arange(d_last, dtype=np.int64))
    node_pe = np.concatenate(per_node)
    out = graph.copy()
    out.node_pe = node_pe
    out.edge_pe_src = node_pe[graph.edge_src]
    out.edge_pe_dst = node_pe[graph.edge_dst]
    return out


def inject_input(graph: KanGraph, x: np.ndarray) -> KanGraph:
    """Attach an input point to the graph's input nodes as node scalars."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (graph.dims[0],):
        raise ValueError(f"input must have shape ({graph.dims[0]},), got {x.shape}")
    out = graph.copy()
    out.node_input[: graph.dims[0]] = x
    return out


def node_permutation(dims, g: GroupElement) -> np.ndarray:
    """Node-id map of a relabeling: new node slot i carries old node perm[i]."""
    if g.hidden_sizes() != list(dims[1:-1]):
        raise ValueError("group element does not match dims")
    offs = _node_offsets(dims)
    perm = np.arange(int(offs[-1]), dtype=np.int64)
    for j, p in enumerate(g.perms):
        lo = offs[1 + j]
        perm[lo : lo + len(p)] = lo + p.sigma
    return perm


def induced_edge_permutation(dims, g: GroupElement) -> np.ndarray:
    """Edge-slot map of a relabeling: new edge slot e carries old edge perm[e].

    Edge slots are canonical (layer, p, q) with p outer, q inner; the old
    slot of new (l, p, q) is (l, sigma_rows(p), sigma_cols(q)) where rows
    follow layer l+1 and columns layer l (identity at the boundary).
    """
    if g.hidden_sizes() != list(dims[1:-1]):
        raise ValueError("group element does not match dims")
    n_layers = len(dims) - 1
    out = []
    base = 0
    for l in range(n_layers):
        d_in, d_out = dims[l], dims[l + 1]
        rows = g.perms[l].sigma if l < n_layers - 1 else np.arange(d_out)
        cols = g.perms[l - 1].sigma if l > 0 else np.arange(d_in)
        p, q = np.meshgrid(rows, cols, indexing="ij")
        out.append(base + p.ravel() * d_in + q.ravel())
        base += d_out * d_in
    return np.concatenate(out).astype(np.int64)


def permute_graph(graph: KanGraph, g: GroupElement) -> KanGraph:
    """Relabel hidden nodes by g; edge endpoints and features follow.

    Satisfies build_graph(act(g, net)) == permute_graph(build_graph(net), g)
    table-for-table.
    """
    nperm = node_permutation(graph.dims, g)
    eperm = induced_edge_permutation(graph.dims, g)
    out = graph.copy()
    out.node_layer = graph.node_layer[nperm]
    out.node_pe = graph.node_pe[nperm]
    out.node_input = graph.node_input[nperm]
    out.edge_feat = graph.edge_feat[eperm]
    out.edge_pe_src = graph.edge_pe_src[eperm]
    out.edge_pe_dst = graph.edge_pe_dst[eperm]
    # canonical slots keep canonical endpoints; layers are slot-determined
    return out


def serialize_graph(graph: KanGraph) -> bytes:
    header = {
        "format_version": GRAPH_VERSION,
        "dims": list(graph.dims),
        "a": graph.a,
        "b": graph.b,
        "grid_size": graph.grid_size,
        "degree": graph.degree,
    }
    arrays = [
        ("node_layer", graph.node_layer),
        ("node_pe", graph.node_pe),
        ("node_input", graph.node_input),
        ("edge_src", graph.edge_src),
        ("edge_dst", graph.edge_dst),
        ("edge_layer", graph.edge_layer),
        ("edge_feat", graph.edge_feat),
        ("edge_pe_src", graph.edge_pe_src),
        ("edge_pe_dst", graph.edge_pe_dst),
    ]
    return write_container(GRAPH_MAGIC, GRAPH_VERSION, header, arrays)


def deserialize_graph(data: bytes) -> KanGraph:
    _, header, arrays = read_container(data, GRAPH_MAGIC, GRAPH_VERSION)
    dims = [int(d) for d in header["dims"]]
    spec = make_spec(header["a"], header["b"], header["grid_size"], header["degree"])
    g = KanGraph(
        dims=dims, a=spec.a, b=spec.b, grid_size=spec.grid_size, degree=spec.degree,
        node_layer=arrays["node_layer"], node_pe=arrays["node_pe"], node_input=arrays["node_input"],
        edge_src=arrays["edge_src"], edge_dst=arrays["edge_dst"], edge_layer=arrays["edge_layer"],
        edge_feat=arrays["edge_feat"], edge_pe_src=arrays["edge_pe_src"], edge_pe_dst=arrays["edge_pe_dst"],
    )
    _validate_graph(g)
    return g


def _validate_graph(g: KanGraph) -> None:
    offs = _node_offsets(g.dims)
    if g.n != offs[-1]:
        raise ValueError("node count does not match dims")
    if g.m != sum(a * b for a, b in zip(g.dims[:-1], g.dims[1:])):
        raise ValueError("edge count does not match dims")
    if g.edge_feat.shape != (g.m, 2 + g.grid_size + g.degree):
        raise ValueError("edge feature width does not match spline meta")
    if not np.all(np.isfinite(g.edge_feat)) or not np.all(np.isfinite(g.node_input)):
        raise ValueError("graph contains non-finite values")
    # every edge must cross from its layer to the next
    if not np.array_equal(g.node_layer[g.edge_src], g.edge_layer):
        raise ValueError("edge sources are not in their declared layer")
    if not np.array_equal(g.node_layer[g.edge_dst], g.edge_layer + 1):
        raise ValueError("edge targets are not in the next layer")


def graph_to_text(graph: KanGraph) -> str:
    lines = [
        f"wskan-graph {GRAPH_VERSION}",
        "dims " + " ".join(str(d) for d in graph.dims),
        f"domain {graph.a!r} {graph.b!r}",
        f"grid {graph.grid_size} degree {graph.degree}",
    ]
    for i in range(graph.n):
        lines.append(
            f"node {i} layer {graph.node_layer[i]} pe {graph.node_pe[i]} input {float(graph.node_input[i])!r}"
        )
    for e in range(graph.m):
        feat = " ".join(repr(v) for v in graph.edge_feat[e].tolist())
        lines.append(
            f"edge {graph.edge_src[e]} {graph.edge_dst[e]} layer {graph.edge_layer[e]} "
            f"pe {graph.edge_pe_src[e]} {graph.edge_pe_dst[e]} feat {feat}"
        )
    return "\n".join(lines) + "\n"


def graph_from_text(text: str) -> KanGraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "wskan-graph":
        raise ValueError("not a graph text form")
    dims = [int(d) for d in lines[1].split()[1:]]
    _, a, b = lines[2].split()
    gt = lines[3].split()
    spec = make_spec(float(a), float(b), int(gt[1]), int(gt[3]))
    n = sum(dims)
    m = sum(x * y for x, y in zip(dims[:-1], dims[1:]))
    g = KanGraph(
        dims=dims, a=spec.a, b=spec.b, grid_size=spec.grid_size, degree=spec.degree,
        node_layer=np.zeros(n, dtype=np.int64), node_pe=np.zeros(n, dtype=np.int64),
        node_input=np.zeros(n, dtype=np.float64),
        edge_src=np.zeros(m, dtype=np.int64), edge_dst=np.zeros(m, dtype=np.int64),
        edge_layer=np.zeros(m, dtype=np.int64),
        edge_feat=np.zeros((m, 2 + spec.n_basis), dtype=np.float64),
        edge_pe_src=np.zeros(m, dtype=np.int64), edge_pe_dst=np.zeros(m, dtype=np.int64),
    )
    ei = 0
    for ln in lines[4:]:
        tok = ln.split()
        if tok[0] == "node":
            i = int(tok[1])
            g.node_layer[i] = int(tok[3])
            g.node_pe[i] = int(tok[5])
            g.node_input[i] = float(tok[7])
        elif tok[0] == "edge":
            g.edge_src[ei] = int(tok[1])
            g.edge_dst[ei] = int(tok[2])
            g.edge_layer[ei] = int(tok[4])
            g.edge_pe_src[ei] = int(tok[6])
            g.edge_pe_dst[ei] = int(tok[7])
            g.edge_feat[ei] = [float(v) for v in tok[9:]]
            ei += 1
        else:
            raise ValueError(f"unrecognized line in graph text: {ln!r}")
    _validate_graph(g)
    return g
