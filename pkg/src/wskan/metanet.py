"""Graph metanetwork over KAN graphs.

Node and edge states are updated by message-passing layers that respect
the computation structure: a forward step aggregates messages into each
node from its in-edges (the direction activations flow), an optional
backward step mirrors this over reversed edges, then edge states are
refreshed from their (pre-update) endpoints and node states from the
forward/backward summaries.  Pooled node and edge states feed a graph
head for invariant predictions; per-edge states feed an edge head for
covariant predictions such as pruning masks.

All five update functions are 2-hidden-layer silu MLPs with dropout
after each hidden layer.  Several graphs are processed as one disjoint
union with offset indices, so a minibatch is a single tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as en
from .containers import read_container, write_container
from .engine import Tensor
from .graph import KanGraph

__all__ = [
    "MetaConfig",
    "ForwardContext",
    "MlpParams",
    "MpLayerParams",
    "MetaParams",
    "GraphBatch",
    "init_meta",
    "params_list",
    "encode",
    "mp_step",
    "forward_invariant",
    "forward_equivariant",
    "save_meta",
    "load_meta",
    "META_MAGIC",
]

META_MAGIC = b"WMET"
META_VERSION = 1


@dataclass(frozen=True)
class MetaConfig:
    """Architecture hyperparameters plus the input geometry they must match."""

    feature_dim: int            # edge feature width, 2 + G + k
    pe_vocab: int               # number of distinct positional ids
    hidden_dim: int = 64
    n_layers: int = 4
    pe_embed_dim: int = 16
    use_pe: bool = True
    bidirectional: bool = True
    aggregation: str = "sum"    # "sum" or "mean"
    readout: str = "graph"      # "graph" or "edge"
    head_out_dim: int = 1
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.aggregation not in ("sum", "mean"):
            raise ValueError(f"aggregation must be 'sum' or 'mean', got {self.aggregation!r}")
        if self.readout not in ("graph", "edge"):
            raise ValueError(f"readout must be 'graph' or 'edge', got {self.readout!r}")
        if min(self.feature_dim, self.hidden_dim, self.n_layers, self.head_out_dim) < 1:
            raise ValueError("feature_dim, hidden_dim, n_layers, head_out_dim must be positive")
        if self.use_pe and (self.pe_vocab < 1 or self.pe_embed_dim < 1):
            raise ValueError("positional encodings need pe_vocab >= 1 and pe_embed_dim >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class ForwardContext:
    """Runtime switches: training enables dropout drawn from rng."""

    training: bool = False
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if self.training and self.rng is None:
            raise ValueError("training mode needs an rng for dropout masks")


EVAL_CTX = ForwardContext(training=False)


@dataclass
class MlpParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    w3: Tensor
    b3: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]


@dataclass
class MpLayerParams:
    msg_fwd: MlpParams    # message along an edge into its target
    upd_fwd: MlpParams    # node update from forward messages
    msg_bwd: MlpParams    # message along a reversed edge into its source
    upd_bwd: MlpParams    # node update from backward messages
    edge_upd: MlpParams   # edge refresh from pre-update endpoints
    node_out: MlpParams   # final node update from (v, v_fwd, v_bwd)

    def tensors(self) -> list[Tensor]:
        out = []
        for m in (self.msg_fwd, self.upd_fwd, self.msg_bwd, self.upd_bwd, self.edge_upd, self.node_out):
            out.extend(m.tensors())
        return out


@dataclass
class MetaParams:
    pe_table: Tensor
    node_enc: MlpParams
    edge_enc: MlpParams
    layers: list[MpLayerParams]
    head: MlpParams


def _init_mlp(rng: np.random.Generator, d_in: int, d_hidden: int, d_out: int) -> MlpParams:
    def w(fan_in, fan_out):
        return en.param(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))

    return MlpParams(
        w1=w(d_in, d_hidden), b1=en.param(np.zeros(d_hidden)),
        w2=w(d_hidden, d_hidden), b2=en.param(np.zeros(d_hidden)),
        w3=w(d_hidden, d_out), b3=en.param(np.zeros(d_out)),
    )


def init_meta(cfg: MetaConfig, rng: np.random.Generator) -> MetaParams:
    h = cfg.hidden_dim
    pe = cfg.pe_embed_dim if cfg.use_pe else 0
    pe_rows = max(cfg.pe_vocab, 1)
    pe_table = en.param(rng.normal(0.0, 1.0 / np.sqrt(max(cfg.pe_embed_dim, 1)),
                                   size=(pe_rows, max(cfg.pe_embed_dim, 1))))
    node_enc = _init_mlp(rng, 1 + pe, h, h)
    edge_enc = _init_mlp(rng, cfg.feature_dim + 2 * pe, h, h)
    layers = []
    for _ in range(cfg.n_layers):
        layers.append(MpLayerParams(
            msg_fwd=_init_mlp(rng, 2 * h, h, h),
            upd_fwd=_init_mlp(rng, 2 * h, h, h),
            msg_bwd=_init_mlp(rng, 2 * h, h, h),
            upd_bwd=_init_mlp(rng, 2 * h, h, h),
            edge_upd=_init_mlp(rng, 3 * h, h, h),
            node_out=_init_mlp(rng, 3 * h, h, h),
        ))
    head_in = 2 * h if cfg.readout == "graph" else h
    head = _init_mlp(rng, head_in, h, cfg.head_out_dim)
    # pooled states can be large at init; a damped head keeps the first
    # predictions near zero instead of paying a huge transient loss
    head.w3.value = head.w3.value * 0.01
    return MetaParams(pe_table=pe_table, node_enc=node_enc, edge_enc=edge_enc, layers=layers, head=head)


def params_list(params: MetaParams) -> list[Tensor]:
    out = [params.pe_table]
    out.extend(params.node_enc.tensors())
    out.extend(params.edge_enc.tensors())
    for lay in params.layers:
        out.extend(lay.tensors())
    out.extend(params.head.tensors())
    return out


def _mlp_apply(mlp: MlpParams, x: Tensor, cfg: MetaConfig, ctx: ForwardContext) -> Tensor:
    h = en.silu(en.add(en.matmul(x, mlp.w1), mlp.b1))
    h = en.dropout(h, cfg.dropout_rate, ctx.rng, ctx.training)
    h = en.silu(en.add(en.matmul(h, mlp.w2), mlp.b2))
    h = en.dropout(h, cfg.dropout_rate, ctx.rng, ctx.training)
    return en.add(en.matmul(h, mlp.w3), mlp.b3)


@dataclass
class GraphBatch:
    """Disjoint union of same-family KAN graphs with offset indices."""

    n_graphs: int
    n_nodes: int
    n_edges: int
    feature_dim: int
    src: np.ndarray            # (n_edges,) global node ids
    dst: np.ndarray
    node_graph: np.ndarray     # (n_nodes,) owning graph
    edge_graph: np.ndarray     # (n_edges,)
    node_input: np.ndarray     # (n_nodes, 1)
    node_pe: np.ndarray        # (n_nodes,)
    edge_feat: np.ndarray      # (n_edges, feature_dim)
    edge_pe_src: np.ndarray
    edge_pe_dst: np.ndarray
    edge_layer_idx: np.ndarray  # (n_edges,) structural layer of each edge
    inv_in_deg: np.ndarray     # (n_nodes, 1), 0 where no in-edges
    inv_out_deg: np.ndarray
    inv_node_count: np.ndarray  # (n_graphs, 1)
    inv_edge_count: np.ndarray

    @staticmethod
    def from_graphs(graphs: list[KanGraph]) -> "GraphBatch":
        if not graphs:
            raise ValueError("empty graph batch")
        fdim = graphs[0].feature_dim
        if any(g.feature_dim != fdim for g in graphs):
            raise ValueError("graphs in a batch must share the edge feature width")
        src, dst, ngid, egid, ninp, npe, efeat, eps, epd, elay = [], [], [], [], [], [], [], [], [], []
        node_off = 0
        for gi, g in enumerate(graphs):
            src.append(g.edge_src + node_off)
            dst.append(g.edge_dst + node_off)
            ngid.append(np.full(g.n, gi, dtype=np.int64))
            egid.append(np.full(g.m, gi, dtype=np.int64))
            ninp.append(g.node_input)
            npe.append(g.node_pe)
            efeat.append(g.edge_feat)
            eps.append(g.edge_pe_src)
            epd.append(g.edge_pe_dst)
            elay.append(g.edge_layer)
            node_off += g.n
        src = np.concatenate(src)
        dst = np.concatenate(dst)
        n_nodes = node_off
        in_deg = np.bincount(dst, minlength=n_nodes).astype(np.float64)
        out_deg = np.bincount(src, minlength=n_nodes).astype(np.float64)
        node_graph = np.concatenate(ngid)
        edge_graph = np.concatenate(egid)
        with np.errstate(divide="ignore"):
            inv_in = np.where(in_deg > 0, 1.0 / np.maximum(in_deg, 1), 0.0)
            inv_out = np.where(out_deg > 0, 1.0 / np.maximum(out_deg, 1), 0.0)
        return GraphBatch(
            n_graphs=len(graphs), n_nodes=n_nodes, n_edges=len(src), feature_dim=fdim,
            src=src, dst=dst, node_graph=node_graph, edge_graph=edge_graph,
            node_input=np.concatenate(ninp)[:, None].astype(np.float64),
            node_pe=np.concatenate(npe), edge_feat=np.concatenate(efeat, axis=0),
            edge_pe_src=np.concatenate(eps), edge_pe_dst=np.concatenate(epd),
            edge_layer_idx=np.concatenate(elay),
            inv_in_deg=inv_in[:, None], inv_out_deg=inv_out[:, None],
            inv_node_count=(1.0 / np.bincount(node_graph, minlength=len(graphs)))[:, None],
            inv_edge_count=(1.0 / np.bincount(edge_graph, minlength=len(graphs)))[:, None],
        )


def _as_batch(g) -> GraphBatch:
    return g if isinstance(g, GraphBatch) else GraphBatch.from_graphs([g])


def encode(graph, cfg: MetaConfig, params: MetaParams,
           ctx: ForwardContext = EVAL_CTX) -> tuple[Tensor, Tensor]:
    """Initial node and edge states from scalars, features, and positional ids."""
    b = _as_batch(graph)
    if b.feature_dim != cfg.feature_dim:
        raise ValueError(f"edge feature width {b.feature_dim} does not match config {cfg.feature_dim}")
    node_in = en.constant(b.node_input)
    edge_in = en.constant(b.edge_feat)
    if cfg.use_pe:
        if (b.node_pe < 0).any():
            raise ValueError("positional encodings not assigned; call assign_pe first")
        if b.node_pe.max() >= cfg.pe_vocab:
            raise ValueError("positional id exceeds configured vocabulary")
        node_in = en.concat([node_in, en.gather_rows(params.pe_table, b.node_pe)], axis=1)
        edge_in = en.concat(
            [edge_in,
             en.gather_rows(params.pe_table, b.edge_pe_src),
             en.gather_rows(params.pe_table, b.edge_pe_dst)],
            axis=1,
        )
    v = _mlp_apply(params.node_enc, node_in, cfg, ctx)
    e = _mlp_apply(params.edge_enc, edge_in, cfg, ctx)
    return v, e


def _aggregate(msgs: Tensor, idx: np.ndarray, n: int, inv_deg: np.ndarray, cfg: MetaConfig) -> Tensor:
    agg = en.scatter_sum(msgs, idx, n)
    if cfg.aggregation == "mean":
        agg = en.mul(agg, en.constant(inv_deg))
    return agg


def mp_step(states: tuple[Tensor, Tensor], graph, layer: MpLayerParams, cfg: MetaConfig,
            ctx: ForwardContext = EVAL_CTX) -> tuple[Tensor, Tensor]:
    """One message-passing layer: forward pass, optional backward pass,
    edge refresh from pre-update endpoints, then the node update."""
    b = _as_batch(graph)
    v, e = states
    if v.value.shape != (b.n_nodes, cfg.hidden_dim) or e.value.shape != (b.n_edges, cfg.hidden_dim):
        raise ValueError("state shapes do not match the batch")
    v_src = en.gather_rows(v, b.src)
    v_dst = en.gather_rows(v, b.dst)

    msg_f = _mlp_apply(layer.msg_fwd, en.concat([v_src, e], axis=1), cfg, ctx)
    agg_f = _aggregate(msg_f, b.dst, b.n_nodes, b.inv_in_deg, cfg)
    v_f = _mlp_apply(layer.upd_fwd, en.concat([v, agg_f], axis=1), cfg, ctx)

    if cfg.bidirectional:
        msg_b = _mlp_apply(layer.msg_bwd, en.concat([v_dst, e], axis=1), cfg, ctx)
        agg_b = _aggregate(msg_b, b.src, b.n_nodes, b.inv_out_deg, cfg)
        v_b = _mlp_apply(layer.upd_bwd, en.concat([v, agg_b], axis=1), cfg, ctx)
    else:
        v_b = en.constant(np.zeros((b.n_nodes, cfg.hidden_dim)))

    e_new = _mlp_apply(layer.edge_upd, en.concat([v_src, v_dst, e], axis=1), cfg, ctx)
    v_new = _mlp_apply(layer.node_out, en.concat([v, v_f, v_b], axis=1), cfg, ctx)
    return v_new, e_new


def _run_layers(graph, cfg: MetaConfig, params: MetaParams, ctx: ForwardContext):
    b = _as_batch(graph)
    v, e = encode(b, cfg, params, ctx)
    for layer in params.layers:
        v, e = mp_step((v, e), b, layer, cfg, ctx)
    return b, v, e


def forward_invariant(graph, cfg: MetaConfig, params: MetaParams,
                      ctx: ForwardContext = EVAL_CTX) -> Tensor:
    """Permutation-invariant graph prediction.

    Mean-pools node and edge states per graph and applies the head.
    Returns (n_graphs, head_out_dim) for a batch, (head_out_dim,) for a
    single graph.
    """
    single = isinstance(graph, KanGraph)
    b, v, e = _run_layers(graph, cfg, params, ctx)
    vp = en.mul(en.scatter_sum(v, b.node_graph, b.n_graphs), en.constant(b.inv_node_count))
    ep = en.mul(en.scatter_sum(e, b.edge_graph, b.n_graphs), en.constant(b.inv_edge_count))
    out = _mlp_apply(params.head, en.concat([vp, ep], axis=1), cfg, ctx)
    if single:
        out = en.reshape(out, (cfg.head_out_dim,))
    return out


def forward_equivariant(graph, cfg: MetaConfig, params: MetaParams,
                        ctx: ForwardContext = EVAL_CTX) -> Tensor:
    """Per-edge prediction that permutes together with the edges, shape (m, head_out_dim)."""
    _, _, e = _run_layers(graph, cfg, params, ctx)
    return _mlp_apply(params.head, e, cfg, ctx)


# ---------------------------------------------------------------------------
# checkpointing


def _cfg_to_dict(cfg: MetaConfig) -> dict:
    return {
        "feature_dim": cfg.feature_dim, "pe_vocab": cfg.pe_vocab, "hidden_dim": cfg.hidden_dim,
        "n_layers": cfg.n_layers, "pe_embed_dim": cfg.pe_embed_dim, "use_pe": cfg.use_pe,
        "bidirectional": cfg.bidirectional, "aggregation": cfg.aggregation, "readout": cfg.readout,
        "head_out_dim": cfg.head_out_dim, "dropout_rate": cfg.dropout_rate,
    }


def _cfg_from_dict(d: dict) -> MetaConfig:
    return MetaConfig(**d)


def _named_tensors(params: MetaParams) -> list[tuple[str, Tensor]]:
    names: list[tuple[str, Tensor]] = [("pe_table", params.pe_table)]
    fields = ["w1", "b1", "w2", "b2", "w3", "b3"]
    for mlp_name, mlp in (("node_enc", params.node_enc), ("edge_enc", params.edge_enc)):
        names.extend((f"{mlp_name}.{f}", t) for f, t in zip(fields, mlp.tensors()))
    for i, lay in enumerate(params.layers):
        for part_name, part in (("msg_fwd", lay.msg_fwd), ("upd_fwd", lay.upd_fwd),
                                ("msg_bwd", lay.msg_bwd), ("upd_bwd", lay.upd_bwd),
                                ("edge_upd", lay.edge_upd), ("node_out", lay.node_out)):
            names.extend((f"layers.{i}.{part_name}.{f}", t) for f, t in zip(fields, part.tensors()))
    names.extend((f"head.{f}", t) for f, t in zip(fields, params.head.tensors()))
    return names


def save_meta(cfg: MetaConfig, params: MetaParams, extra_header: dict | None = None,
              extra_arrays: list[tuple[str, np.ndarray]] | None = None) -> bytes:
    """Serialize config and parameters (plus caller extras) bit-exactly."""
    header = {"format_version": META_VERSION, "config": _cfg_to_dict(cfg)}
    if extra_header:
        header["extra"] = extra_header
    arrays = [(name, t.value) for name, t in _named_tensors(params)]
    if extra_arrays:
        arrays.extend((f"extra.{name}", arr) for name, arr in extra_arrays)
    return write_container(META_MAGIC, META_VERSION, header, arrays)


def load_meta(data: bytes) -> tuple[MetaConfig, MetaParams, dict, dict[str, np.ndarray]]:
    """Inverse of save_meta; returns (cfg, params, extra_header, extra_arrays)."""
    _, header, arrays = read_container(data, META_MAGIC, META_VERSION)
    cfg = _cfg_from_dict(header["config"])
    params = init_meta(cfg, np.random.default_rng(0))
    for name, t in _named_tensors(params):
        if name not in arrays:
            raise ValueError(f"checkpoint is missing parameter block {name!r}")
        if arrays[name].shape != t.value.shape:
            raise ValueError(f"parameter block {name!r} has shape {arrays[name].shape}, expected {t.value.shape}")
        t.value = arrays[name]
    extras = {k[len("extra."):]: v for k, v in arrays.items() if k.startswith("extra.")}
    return cfg, params, header.get("extra", {}), extras
