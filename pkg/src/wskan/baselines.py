"""Baseline weight-space models: DeepSets over edges and a flat-vector MLP.

DeepSets embeds each edge feature (tagged with a layer one-hot), sum-pools
over the unordered edge set, and applies a head; it is invariant to any
re-ordering of edges, not just relabelings of hidden neurons.  The flat MLP
consumes the raw parameter vector in checkpoint order and has no built-in
symmetry at all; it is the ablation the structured models are measured
against and it is inherently tied to one architecture width.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine as en
from .engine import Tensor
from .graph import KanGraph
from .kan import KanNet
from .metanet import EVAL_CTX, ForwardContext, GraphBatch, MlpParams, _as_batch, _init_mlp

__all__ = [
    "DeepSetsConfig",
    "DeepSetsParams",
    "init_deepsets",
    "deepsets_params_list",
    "deepsets_edge_embeddings",
    "deepsets_pooled",
    "deepsets_forward",
    "FlatMlpConfig",
    "FlatMlpParams",
    "init_flat_mlp",
    "flat_mlp_params_list",
    "flat_mlp_forward",
    "vectorize_net",
    "flat_input_dim",
]


def _mlp(mlp: MlpParams, x: Tensor, dropout_rate: float, ctx: ForwardContext) -> Tensor:
    h = en.silu(en.add(en.matmul(x, mlp.w1), mlp.b1))
    h = en.dropout(h, dropout_rate, ctx.rng, ctx.training)
    h = en.silu(en.add(en.matmul(h, mlp.w2), mlp.b2))
    h = en.dropout(h, dropout_rate, ctx.rng, ctx.training)
    return en.add(en.matmul(h, mlp.w3), mlp.b3)


# ---------------------------------------------------------------------------
# DeepSets


@dataclass(frozen=True)
class DeepSetsConfig:
    feature_dim: int
    n_edge_layers: int      # size of the layer one-hot appended to features
    hidden_dim: int = 64
    head_out_dim: int = 1
    readout: str = "graph"  # "graph" or "edge"
    dropout_rate: float = 0.2

    def __post_init__(self):
        if self.readout not in ("graph", "edge"):
            raise ValueError(f"readout must be 'graph' or 'edge', got {self.readout!r}")
        if min(self.feature_dim, self.n_edge_layers, self.hidden_dim, self.head_out_dim) < 1:
            raise ValueError("deepsets dimensions must be positive")


@dataclass
class DeepSetsParams:
    embed: MlpParams  # per-edge embedding
    head: MlpParams   # graph head rho(pool) or edge head psi(embed, pool)


def init_deepsets(cfg: DeepSetsConfig, rng: np.random.Generator) -> DeepSetsParams:
    h = cfg.hidden_dim
    embed = _init_mlp(rng, cfg.feature_dim + cfg.n_edge_layers, h, h)
    head = _init_mlp(rng, h if cfg.readout == "graph" else 2 * h, h, cfg.head_out_dim)
    # sum-pooled embeddings are large at init; keep first predictions near zero
    head.w3.value = head.w3.value * 0.01
    return DeepSetsParams(embed=embed, head=head)


def deepsets_params_list(params: DeepSetsParams) -> list[Tensor]:
    return params.embed.tensors() + params.head.tensors()


def deepsets_edge_embeddings(batch: GraphBatch, cfg: DeepSetsConfig, params: DeepSetsParams,
                             ctx: ForwardContext = EVAL_CTX) -> Tensor:
    if batch.feature_dim != cfg.feature_dim:
        raise ValueError(f"edge feature width {batch.feature_dim} does not match config {cfg.feature_dim}")
    if batch.edge_layer_idx.max() >= cfg.n_edge_layers:
        raise ValueError("edge layer index exceeds the configured one-hot size")
    onehot = np.zeros((batch.n_edges, cfg.n_edge_layers))
    onehot[np.arange(batch.n_edges), batch.edge_layer_idx] = 1.0
    feats = en.concat([en.constant(batch.edge_feat), en.constant(onehot)], axis=1)
    return _mlp(params.embed, feats, cfg.dropout_rate, ctx)


def deepsets_pooled(emb: Tensor, batch: GraphBatch) -> Tensor:
    """Sum-pool edge embeddings per graph; doubling an edge doubles its share."""
    return en.scatter_sum(emb, batch.edge_graph, batch.n_graphs)


def deepsets_forward(graph, cfg: DeepSetsConfig, params: DeepSetsParams,
                     ctx: ForwardContext = EVAL_CTX) -> Tensor:
    """Graph readout: (n_graphs, out); edge readout: (n_edges, out)."""
    single = isinstance(graph, KanGraph)
    batch = _as_batch(graph)
    emb = deepsets_edge_embeddings(batch, cfg, params, ctx)
    pooled = deepsets_pooled(emb, batch)
    if cfg.readout == "graph":
        out = _mlp(params.head, pooled, cfg.dropout_rate, ctx)
        if single:
            out = en.reshape(out, (cfg.head_out_dim,))
        return out
    context = en.gather_rows(pooled, batch.edge_graph)
    return _mlp(params.head, en.concat([emb, context], axis=1), cfg.dropout_rate, ctx)


# ---------------------------------------------------------------------------
# flat-vector MLP


@dataclass(frozen=True)
class FlatMlpConfig:
    input_dim: int
    hidden_dim: int = 128
    head_out_dim: int = 1
    dropout_rate: float = 0.2

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.head_out_dim) < 1:
            raise ValueError("flat mlp dimensions must be positive")


@dataclass
class FlatMlpParams:
    mlp: MlpParams


def init_flat_mlp(cfg: FlatMlpConfig, rng: np.random.Generator) -> FlatMlpParams:
    return FlatMlpParams(mlp=_init_mlp(rng, cfg.input_dim, cfg.hidden_dim, cfg.head_out_dim))


def flat_mlp_params_list(params: FlatMlpParams) -> list[Tensor]:
    return params.mlp.tensors()


def vectorize_net(net: KanNet) -> np.ndarray:
    """Flatten parameters in checkpoint order: layers outer, p outer, q inner,
    then (w_b, w_s, c...) per edge."""
    return np.concatenate([lay.params.reshape(-1) for lay in net.layers])


def flat_input_dim(dims, n_basis: int) -> int:
    return sum(a * b for a, b in zip(dims[:-1], dims[1:])) * (2 + n_basis)


def flat_mlp_forward(x, cfg: FlatMlpConfig, params: FlatMlpParams,
                     ctx: ForwardContext = EVAL_CTX) -> Tensor:
    """Apply the MLP to a (batch, input_dim) matrix of flattened parameters."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise ValueError(f"flat input must have shape (batch, {cfg.input_dim}), got {x.shape}")
    return _mlp(params.mlp, en.constant(x), cfg.dropout_rate, ctx)
