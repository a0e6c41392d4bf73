"""Training pipelines for weight-space predictors over zoo manifests.

Five model kinds share one training loop and one checkpoint format:

    wskan      message-passing metanetwork on KAN-graphs
    deepsets   permutation-invariant set model on edge features
    mlp        flat MLP on the vectorized parameters
    mlp-aug    flat MLP with a fresh hidden-relabeling drawn per sample
               per epoch (targets are relabel-invariant, inputs are not)
    mlp-align  flat MLP after aligning every net to a merged reference

Tasks:

    sine-inr     regress the 2-vector frequency of a sine INR (graph head)
    acc-pred     regress held-out accuracy of a noisy classifier (graph head)
    prune-mask   per-edge keep/drop logits against oracle masks (edge head)

Targets of the regression tasks are standardized with training-split
statistics; predictions are reported in raw units. Model selection is by
best validation metric (lowest MSE, or highest ROC-AUC for masks), and
the returned parameters are the best-epoch snapshot.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit

from . import engine as en
from .align import align_pair, merge_many
from .baselines import (
    DeepSetsConfig,
    DeepSetsParams,
    FlatMlpConfig,
    FlatMlpParams,
    deepsets_forward,
    deepsets_params_list,
    flat_input_dim,
    flat_mlp_forward,
    flat_mlp_params_list,
    init_deepsets,
    init_flat_mlp,
    vectorize_net,
)
from .containers import read_container, write_container
from .graph import assign_pe, build_graph, n_pe_ids
from .kan import KanNet, load_kan, save_kan
from .metanet import (
    EVAL_CTX,
    ForwardContext,
    GraphBatch,
    MetaConfig,
    MetaParams,
    _cfg_from_dict,
    _cfg_to_dict,
    _named_tensors,
    forward_equivariant,
    forward_invariant,
    init_meta,
    params_list,
)
from .metrics import mse, r2, roc_auc, select_threshold
from .optim import AdamW
from .symmetry import act, sample_group_element
from .zoo import ZooManifest, n_edges

__all__ = [
    "MODEL_MAGIC",
    "MODEL_KINDS",
    "TASKS",
    "TrainSettings",
    "TrainedModel",
    "task_for_zoo",
    "task_target_matrix",
    "build_graphs",
    "train_model",
    "predict",
    "predict_mask_scores",
    "evaluate",
    "save_model",
    "load_model",
]

MODEL_MAGIC = b"WMDL"
MODEL_KINDS = ("wskan", "deepsets", "mlp", "mlp-aug", "mlp-align")
TASKS = ("sine-inr", "acc-pred", "prune-mask")
GRAPH_KINDS = ("wskan", "deepsets")


@dataclass(frozen=True)
class TrainSettings:
    """Optimizer and loop settings shared by every model kind.

    Defaults are the frozen desk-scale recipe: on 240-graph zoos dropout
    above ~0.1 or hidden_dim above ~48 leaves the message-passing model
    unable to fit the train split within 100 epochs.
    """

    epochs: int = 100
    lr: float = 3e-3
    batch_size: int = 32
    weight_decay: float = 0.01
    warmup_steps: int = 100
    schedule: str = "warmup-linear"
    seed: int = 0
    hidden_dim: int = 48
    n_layers: int = 3
    dropout_rate: float = 0.1
    use_pe: bool = True
    bidirectional: bool = True
    aggregation: str = "sum"
    align_subset: int = 40

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainedModel:
    """A trained weight-space predictor plus everything needed to apply it."""

    kind: str
    task: str
    config: object                      # MetaConfig | DeepSetsConfig | FlatMlpConfig
    params: object
    target_mu: np.ndarray
    target_sd: np.ndarray
    input_mu: np.ndarray | None = None  # flat kinds only
    input_sd: np.ndarray | None = None
    feat_mu: np.ndarray | None = None   # graph kinds: per-channel edge stats
    feat_sd: np.ndarray | None = None
    threshold: float | None = None      # prune-mask decision threshold
    reference: KanNet | None = None     # mlp-align reference basis
    meta: dict = field(default_factory=dict)


def task_for_zoo(manifest: ZooManifest, task: str) -> None:
    """Raise unless the manifest can supply targets for the task."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    wanted = {"sine-inr": "inr-sine", "acc-pred": "blob-acc", "prune-mask": "blob-acc"}[task]
    if manifest.task != wanted:
        raise ValueError(f"task {task!r} needs a {wanted!r} zoo, got {manifest.task!r}")
    if task == "prune-mask" and manifest.masks is None:
        raise ValueError("prune-mask task needs a zoo with a mask sidecar")


def task_target_matrix(manifest: ZooManifest, task: str, split: str) -> np.ndarray:
    """Targets for one split, shape (n, t); masks come out as float rows."""
    task_for_zoo(manifest, task)
    recs = manifest.records_for(split)
    if task == "prune-mask":
        return np.stack([manifest.masks[r.record_id] for r in recs]).astype(np.float64)
    return np.stack([np.asarray(r.target, dtype=np.float64) for r in recs])


def build_graphs(nets: list[KanNet]) -> list:
    return [assign_pe(build_graph(net)) for net in nets]


def _model_config(kind: str, task: str, manifest: ZooManifest, s: TrainSettings):
    feature_dim = 2 + manifest.spec.n_basis
    dims = manifest.dims
    if kind == "wskan":
        return MetaConfig(
            feature_dim=feature_dim, pe_vocab=n_pe_ids(dims), hidden_dim=s.hidden_dim,
            n_layers=s.n_layers, use_pe=s.use_pe, bidirectional=s.bidirectional,
            aggregation=s.aggregation, dropout_rate=s.dropout_rate,
            readout="edge" if task == "prune-mask" else "graph",
            head_out_dim=1 if task == "prune-mask" else _target_width(task))
    if kind == "deepsets":
        return DeepSetsConfig(
            feature_dim=feature_dim, n_edge_layers=len(dims) - 1, hidden_dim=s.hidden_dim,
            dropout_rate=s.dropout_rate,
            readout="edge" if task == "prune-mask" else "graph",
            head_out_dim=1 if task == "prune-mask" else _target_width(task))
    return FlatMlpConfig(
        input_dim=flat_input_dim(dims, manifest.spec.n_basis), hidden_dim=2 * s.hidden_dim,
        dropout_rate=s.dropout_rate,
        head_out_dim=n_edges(dims) if task == "prune-mask" else _target_width(task))


def _target_width(task: str) -> int:
    return 2 if task == "sine-inr" else 1


def _init_params(kind: str, cfg, rng: np.random.Generator):
    if kind == "wskan":
        return init_meta(cfg, rng)
    if kind == "deepsets":
        return init_deepsets(cfg, rng)
    return init_flat_mlp(cfg, rng)


def _tensors(kind: str, params) -> list[en.Tensor]:
    if kind == "wskan":
        return params_list(params)
    if kind == "deepsets":
        return deepsets_params_list(params)
    return flat_mlp_params_list(params)


def _align_to_reference(reference: KanNet, nets: list[KanNet],
                        rng: np.random.Generator) -> list[KanNet]:
    return [act(align_pair(reference, net, rng).g, net) for net in nets]


def _standardize(x: np.ndarray, mu: np.ndarray, sd: np.ndarray) -> np.ndarray:
    return (x - mu) / sd


def _fit_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)
    return mu, sd


def _standardize_graphs(graphs, mu: np.ndarray, sd: np.ndarray) -> None:
    # channel-wise affine maps commute with edge permutations, so the
    # symmetry guarantees survive this preprocessing
    for g in graphs:
        g.edge_feat = _standardize(g.edge_feat, mu, sd)


def _graph_forward(kind: str, cfg, params, batch, task: str, ctx) -> en.Tensor:
    if kind == "wskan":
        if task == "prune-mask":
            return forward_equivariant(batch, cfg, params, ctx)
        return forward_invariant(batch, cfg, params, ctx)
    return deepsets_forward(batch, cfg, params, ctx)


def _mse_loss(pred: en.Tensor, target: np.ndarray) -> en.Tensor:
    d = en.sub(pred, en.constant(target))
    return en.mean_(en.mul(d, d))


def _bce_loss(logits: en.Tensor, target: np.ndarray) -> en.Tensor:
    # mean(softplus(z) - z * y), the stable form of binary cross-entropy
    y = en.constant(target)
    return en.mean_(en.sub(en.softplus(logits), en.mul(logits, y)))


def train_model(manifest: ZooManifest, kind: str, task: str,
                settings: TrainSettings) -> tuple[TrainedModel, list[dict]]:
    """Train one weight-space model on a zoo; returns (model, log entries).

    Log entries follow {epoch, split, loss, metrics, wall_time} and carry
    the raw-unit validation metrics used for best-epoch selection.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    task_for_zoo(manifest, task)
    if kind in ("mlp-aug", "mlp-align") and task == "prune-mask":
        raise ValueError(f"{kind} supports only invariant targets, not prune-mask")

    rng = np.random.default_rng(settings.seed)
    t_start = time.perf_counter()
    train_recs = manifest.records_for("train")
    val_recs = manifest.records_for("val")
    if not train_recs or not val_recs:
        raise ValueError("training needs nonempty train and val splits")
    train_nets = [r.net for r in train_recs]
    val_nets = [r.net for r in val_recs]
    y_train = task_target_matrix(manifest, task, "train")
    y_val = task_target_matrix(manifest, task, "val")

    invariant = task != "prune-mask"
    if invariant:
        t_mu, t_sd = _fit_stats(y_train)
    else:
        t_mu, t_sd = np.zeros(1), np.ones(1)

    cfg = _model_config(kind, task, manifest, settings)
    params = _init_params(kind, cfg, rng)
    tensors = _tensors(kind, params)
    opt_total = settings.epochs * max(1, int(np.ceil(len(train_nets) / settings.batch_size)))
    opt = AdamW(tensors, lr=settings.lr, weight_decay=settings.weight_decay,
                warmup_steps=settings.warmup_steps, total_steps=opt_total,
                schedule=settings.schedule)
    ctx = ForwardContext(training=True, rng=np.random.default_rng(rng.integers(2**63)))
    aug_rng = np.random.default_rng(rng.integers(2**63))

    reference = None
    input_mu = input_sd = None
    feat_mu = feat_sd = None
    if kind in GRAPH_KINDS:
        graphs_train = build_graphs(train_nets)
        graphs_val = build_graphs(val_nets)
        feat_mu, feat_sd = _fit_stats(np.concatenate([g.edge_feat for g in graphs_train]))
        _standardize_graphs(graphs_train, feat_mu, feat_sd)
        _standardize_graphs(graphs_val, feat_mu, feat_sd)
    else:
        if kind == "mlp-align":
            merged = merge_many(train_nets, np.random.default_rng(rng.integers(2**63)),
                                subset_size=min(settings.align_subset, len(train_nets)))
            reference = merged.reference
            train_nets = merged.aligned
            val_nets = _align_to_reference(reference, val_nets, aug_rng)
        x_train = np.stack([vectorize_net(n) for n in train_nets])
        x_val = np.stack([vectorize_net(n) for n in val_nets])
        input_mu, input_sd = _fit_stats(x_train)
        x_train = _standardize(x_train, input_mu, input_sd)
        x_val = _standardize(x_val, input_mu, input_sd)

    def batches(order):
        for start in range(0, len(order), settings.batch_size):
            yield order[start : start + settings.batch_size]

    def forward_logits(idx, source, ctx):
        if kind in GRAPH_KINDS:
            graphs = [source[i] for i in idx]
            return _graph_forward(kind, cfg, params, GraphBatch.from_graphs(graphs), task, ctx)
        return flat_mlp_forward(source[idx], cfg, params, ctx)

    def batch_targets(idx, y):
        if invariant:
            return _standardize(y[idx], t_mu, t_sd)
        if kind in GRAPH_KINDS:  # per-edge logits are stacked along axis 0
            return y[idx].reshape(-1, 1)
        return y[idx]

    def val_metrics():
        if kind in GRAPH_KINDS:
            preds = _predict_graphs(kind, cfg, params, graphs_val, task, t_mu, t_sd)
        else:
            out = flat_mlp_forward(x_val, cfg, params, EVAL_CTX).value
            preds = out * t_sd + t_mu if invariant else out
        if invariant:
            m = {"mse": mse(preds, y_val)}
            try:
                m["r2"] = r2(preds, y_val)
            except ValueError:
                pass
            return m, m["mse"], m["mse"]
        z = preds.reshape(-1)
        yf = y_val.reshape(-1)
        bce = float(np.mean(np.logaddexp(0.0, z) - z * yf))
        m = {"bce": bce}
        try:
            m["roc_auc"] = roc_auc(z, yf.astype(np.int64))
            return m, -m["roc_auc"], bce  # negated so lower is better uniformly
        except ValueError:  # one-class val split, fall back to loss
            return m, bce, bce

    log: list[dict] = []
    best_score = np.inf
    best_state = [t.value.copy() for t in tensors]
    best_val: dict = {}
    n_train = len(train_nets)
    for epoch in range(settings.epochs):
        if kind == "mlp-aug":
            dims = manifest.dims
            moved = [act(sample_group_element(dims, aug_rng), net) for net in train_nets]
            x_train = _standardize(np.stack([vectorize_net(n) for n in moved]),
                                   input_mu, input_sd)
        order = rng.permutation(n_train)
        total, seen = 0.0, 0
        for idx in batches(order):
            opt.zero_grad()
            out = forward_logits(idx, graphs_train if kind in GRAPH_KINDS else x_train, ctx)
            target = batch_targets(idx, y_train)
            loss = _mse_loss(out, target) if invariant else _bce_loss(out, target)
            en.backward(loss)
            opt.step()
            total += float(loss.value) * len(idx)
            seen += len(idx)
        wall = time.perf_counter() - t_start
        log.append({"epoch": epoch, "split": "train", "loss": total / seen,
                    "metrics": {}, "wall_time": wall})
        metrics, score, val_loss = val_metrics()
        log.append({"epoch": epoch, "split": "val", "loss": val_loss,
                    "metrics": metrics, "wall_time": time.perf_counter() - t_start})
        if score < best_score:
            best_score = score
            best_state = [t.value.copy() for t in tensors]
            best_val = dict(metrics)
    for t, v in zip(tensors, best_state):
        t.value = v

    threshold = None
    if task == "prune-mask":
        if kind in GRAPH_KINDS:
            scores = _predict_graphs(kind, cfg, params, graphs_val, task, t_mu, t_sd)
        else:
            scores = flat_mlp_forward(x_val, cfg, params, EVAL_CTX).value
        threshold, _ = select_threshold(expit(scores.reshape(-1)),
                                        y_val.reshape(-1).astype(np.int64))

    model = TrainedModel(
        kind=kind, task=task, config=cfg, params=params,
        target_mu=t_mu, target_sd=t_sd, input_mu=input_mu, input_sd=input_sd,
        feat_mu=feat_mu, feat_sd=feat_sd,
        threshold=threshold, reference=reference,
        meta={"dims": list(manifest.dims), "settings": settings.to_dict(),
              "spec": [manifest.spec.a, manifest.spec.b,
                       manifest.spec.grid_size, manifest.spec.degree],
              "zoo_task": manifest.task,
              "best_val": {k: float(v) for k, v in best_val.items()}})
    return model, log


def _predict_graphs(kind: str, cfg, params, graphs, task: str,
                    t_mu, t_sd, chunk: int = 64) -> np.ndarray:
    outs = []
    for start in range(0, len(graphs), chunk):
        batch = GraphBatch.from_graphs(graphs[start : start + chunk])
        out = _graph_forward(kind, cfg, params, batch, task, EVAL_CTX).value
        outs.append(out)
    stacked = np.concatenate(outs, axis=0)
    if task == "prune-mask":
        m = graphs[0].m
        return stacked.reshape(len(graphs), m)
    return stacked * t_sd + t_mu


def predict(model: TrainedModel, nets: list[KanNet]) -> np.ndarray:
    """Raw-unit predictions, shape (n, t); per-edge logits (n, m) for masks."""
    if model.kind in GRAPH_KINDS:
        graphs = build_graphs(nets)
        _standardize_graphs(graphs, model.feat_mu, model.feat_sd)
        return _predict_graphs(model.kind, model.config, model.params, graphs,
                               model.task, model.target_mu, model.target_sd)
    if model.kind == "mlp-align":
        nets = _align_to_reference(model.reference, nets, np.random.default_rng(0))
    x = np.stack([vectorize_net(n) for n in nets])
    x = _standardize(x, model.input_mu, model.input_sd)
    out = flat_mlp_forward(x, model.config, model.params, EVAL_CTX).value
    if model.task == "prune-mask":
        return out
    return out * model.target_sd + model.target_mu


def predict_mask_scores(model: TrainedModel, nets: list[KanNet]) -> np.ndarray:
    """Per-edge keep probabilities in [0, 1], shape (n, m)."""
    if model.task != "prune-mask":
        raise ValueError("model was not trained for mask prediction")
    return expit(predict(model, nets))


def evaluate(model: TrainedModel, manifest: ZooManifest, split: str) -> dict:
    """Raw-unit metrics on one zoo split."""
    recs = manifest.records_for(split)
    if not recs:
        raise ValueError(f"split {split!r} is empty")
    y = task_target_matrix(manifest, model.task, split)
    preds = predict(model, [r.net for r in recs])
    if model.task == "prune-mask":
        flat = y.reshape(-1).astype(np.int64)
        scores = expit(preds.reshape(-1))
        out = {"roc_auc": roc_auc(scores, flat)}
        if model.threshold is not None:
            out["mask_accuracy"] = float(((scores >= model.threshold).astype(np.int64) == flat).mean())
        return out
    out = {"mse": mse(preds, y)}
    try:
        out["r2"] = r2(preds, y)
    except ValueError:
        pass
    return out


# ------------------------------------------------------------ serialization


def _named_param_blocks(kind: str, params) -> list[tuple[str, np.ndarray]]:
    if kind == "wskan":
        return [(name, t.value) for name, t in _named_tensors(params)]
    if kind == "deepsets":
        return [(f"{part}.{f}", getattr(getattr(params, part), f).value)
                for part in ("embed", "head")
                for f in ("w1", "b1", "w2", "b2", "w3", "b3")]
    return [(f"mlp.{f}", getattr(params.mlp, f).value)
            for f in ("w1", "b1", "w2", "b2", "w3", "b3")]


def _cfg_dict(kind: str, cfg) -> dict:
    if kind == "wskan":
        return _cfg_to_dict(cfg)
    return asdict(cfg)


def _cfg_from(kind: str, d: dict):
    if kind == "wskan":
        return _cfg_from_dict(d)
    if kind == "deepsets":
        return DeepSetsConfig(**d)
    return FlatMlpConfig(**d)


def save_model(model: TrainedModel) -> bytes:
    """Serialize a trained model (any kind) to one versioned container."""
    header = {
        "format_version": 1,
        "kind": model.kind,
        "task": model.task,
        "config": _cfg_dict(model.kind, model.config),
        "meta": model.meta,
        "threshold": model.threshold,
        "has_inputs_stats": model.input_mu is not None,
        "has_feat_stats": model.feat_mu is not None,
        "has_reference": model.reference is not None,
    }
    arrays = [("target_mu", model.target_mu), ("target_sd", model.target_sd)]
    if model.input_mu is not None:
        arrays += [("input_mu", model.input_mu), ("input_sd", model.input_sd)]
    if model.feat_mu is not None:
        arrays += [("feat_mu", model.feat_mu), ("feat_sd", model.feat_sd)]
    if model.reference is not None:
        arrays.append(("reference_kan", np.frombuffer(save_kan(model.reference), dtype=np.uint8)))
    arrays += _named_param_blocks(model.kind, model.params)
    return write_container(MODEL_MAGIC, 1, header, arrays)


def load_model(data: bytes) -> TrainedModel:
    _, header, arrays = read_container(data, MODEL_MAGIC, 1)
    kind = header["kind"]
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r} in checkpoint")
    cfg = _cfg_from(kind, header["config"])
    params = _init_params(kind, cfg, np.random.default_rng(0))
    required = ["target_mu", "target_sd"]
    if kind in GRAPH_KINDS:
        required += ["feat_mu", "feat_sd"]
    for name in required:
        if name not in arrays:
            raise ValueError(f"checkpoint missing array {name!r}")
    for name, expected in _named_param_blocks(kind, params):
        if name not in arrays:
            raise ValueError(f"checkpoint missing parameter block {name!r}")
        got = arrays[name]
        if got.shape != expected.shape:
            raise ValueError(f"block {name!r} has shape {got.shape}, expected {expected.shape}")
    blocks = dict(_named_blocks_tensors(kind, params))
    for name, t in blocks.items():
        t.value = arrays[name]
    reference = None
    if header.get("has_reference"):
        reference = load_kan(arrays["reference_kan"].tobytes())
    return TrainedModel(
        kind=kind, task=header["task"], config=cfg, params=params,
        target_mu=arrays["target_mu"], target_sd=arrays["target_sd"],
        input_mu=arrays.get("input_mu"), input_sd=arrays.get("input_sd"),
        feat_mu=arrays.get("feat_mu"), feat_sd=arrays.get("feat_sd"),
        threshold=header.get("threshold"), reference=reference,
        meta=dict(header.get("meta", {})))


def _named_blocks_tensors(kind: str, params) -> list[tuple[str, en.Tensor]]:
    if kind == "wskan":
        return _named_tensors(params)
    if kind == "deepsets":
        return [(f"{part}.{f}", getattr(getattr(params, part), f))
                for part in ("embed", "head")
                for f in ("w1", "b1", "w2", "b2", "w3", "b3")]
    return [(f"mlp.{f}", getattr(params.mlp, f)) for f in ("w1", "b1", "w2", "b2", "w3", "b3")]
