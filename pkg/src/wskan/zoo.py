"""Desk-scale model zoos: trained KAN populations with supervision targets.

Three pipelines share one artifact format. The sine-INR zoo trains small
KANs to reproduce 2D sine waves and stores the frequency vector as the
regression target. The blob-classifier zoo trains KANs under varying
label noise and stores held-out accuracy. Pruning masks are computed from
trained nets by a trace-average oracle and stored in a sidecar, keyed by
record id.

On disk a zoo is a directory:

    manifest.json    structured index (task, dims, spline meta, records)
    checkpoints.bin  concatenated binary KAN checkpoints, located by the
                     per-record (offset, length) pairs in the manifest
    masks.bin        optional container of uint8 edge masks keyed by id
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .containers import canonical_json, read_container, write_container
from .kan import KanNet, kan_forward_batch, kan_forward_trace, kan_init, load_kan, save_kan, train_kan
from .splines import SplineSpec, make_spec

__all__ = [
    "MASKS_MAGIC",
    "KanTrainConfig",
    "ZooRecord",
    "ZooManifest",
    "SineTask",
    "gen_sine_task",
    "coordinate_grid",
    "build_inr_zoo",
    "ClassificationData",
    "gen_blobs",
    "label_shuffle",
    "classifier_accuracy",
    "build_acc_zoo",
    "n_edges",
    "oracle_prune",
    "apply_mask",
    "compute_prune_masks",
    "save_zoo",
    "load_zoo",
]

MASKS_MAGIC = b"WMSK"


@dataclass(frozen=True)
class KanTrainConfig:
    """Settings for fitting the individual zoo KANs (fixed-lr minibatch descent).

    base_weight/spline_weight/coef_std seed the fresh nets. A zero
    base_weight starts every edge from its spline part alone, so edges the
    task never recruits keep small average activations; the classifier
    zoos rely on this to get informative pruning masks.
    """

    epochs: int = 300
    lr: float = 0.01
    batch_size: int = 128
    loss: str = "mse"
    base_weight: float = 1.0
    spline_weight: float = 1.0
    coef_std: float = 0.1

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "lr": self.lr,
                "batch_size": self.batch_size, "loss": self.loss,
                "base_weight": self.base_weight,
                "spline_weight": self.spline_weight,
                "coef_std": self.coef_std}

    def init_net(self, dims, spec, rng: np.random.Generator) -> KanNet:
        return kan_init(dims, spec, rng, base_weight=self.base_weight,
                        spline_weight=self.spline_weight, coef_std=self.coef_std)


@dataclass
class ZooRecord:
    """One trained net, its supervision target, and provenance."""

    record_id: int
    net: KanNet
    target: np.ndarray     # (2,) frequency | (1,) test accuracy
    split: str             # train | val | test
    seed: int
    meta: dict = field(default_factory=dict)


@dataclass
class ZooManifest:
    task: str              # "inr-sine" | "blob-acc"
    dims: list[int]
    spec: SplineSpec
    records: list[ZooRecord]
    config: dict = field(default_factory=dict)
    masks: dict[int, np.ndarray] | None = None   # record id -> uint8 edge mask

    def split_counts(self) -> dict[str, int]:
        counts = {"train": 0, "val": 0, "test": 0}
        for r in self.records:
            counts[r.split] += 1
        return counts

    def records_for(self, split: str) -> list[ZooRecord]:
        if split not in ("train", "val", "test"):
            raise ValueError(f"unknown split {split!r}")
        return [r for r in self.records if r.split == split]


def _split_labels(splits: tuple[int, int, int]) -> list[str]:
    n_train, n_val, n_test = splits
    if min(splits) < 0:
        raise ValueError(f"negative split size in {splits}")
    return ["train"] * n_train + ["val"] * n_val + ["test"] * n_test


def _model_seeds(rng: np.random.Generator, n: int) -> np.ndarray:
    # independent per-model seeds so models could be trained in parallel
    return rng.integers(0, 2**63 - 1, size=n, dtype=np.int64)


# ----------------------------------------------------------------- sine INRs


@dataclass(frozen=True)
class SineTask:
    """A 2D sine wave g(x) = sin(w . x) with its frequency vector."""

    w: np.ndarray

    def sample(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.sin(x @ self.w)[:, None]


def gen_sine_task(rng: np.random.Generator) -> SineTask:
    """Draw a frequency vector uniformly from [0.5, 10]^2."""
    return SineTask(w=rng.uniform(0.5, 10.0, size=2))


def coordinate_grid(n_side: int = 16, lo: float = -1.0, hi: float = 1.0) -> np.ndarray:
    """Fixed (n_side^2, 2) training grid shared by every INR in a zoo."""
    g = np.linspace(lo, hi, n_side)
    return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)


def build_inr_zoo(n_models: int, dims: list[int], spec: SplineSpec,
                  train_cfg: KanTrainConfig, splits: tuple[int, int, int],
                  rng: np.random.Generator, grid_side: int = 16) -> ZooManifest:
    """Train n_models sine-wave INRs; target is the 2-vector frequency.

    splits = (n_train, n_val, n_test) must sum to n_models. Per model a
    fresh frequency is drawn, a KAN is fit on the shared coordinate grid,
    and the final fit MSE lands in record meta.
    """
    if sum(splits) != n_models:
        raise ValueError(f"splits {splits} do not sum to n_models={n_models}")
    labels = _split_labels(splits)
    seeds = _model_seeds(rng, n_models)
    x = coordinate_grid(grid_side)
    records = []
    for i in range(n_models):
        mrng = np.random.default_rng(int(seeds[i]))
        task = gen_sine_task(mrng)
        y = task.sample(x)
        net = train_cfg.init_net(dims, spec, mrng)
        trained, log = train_kan(net, x, y, loss=train_cfg.loss, epochs=train_cfg.epochs,
                                 lr=train_cfg.lr, batch_size=train_cfg.batch_size, rng=mrng)
        records.append(ZooRecord(
            record_id=i, net=trained, target=task.w.copy(), split=labels[i],
            seed=int(seeds[i]),
            meta={"initial_fit_mse": log.epoch_losses[0],
                  "final_fit_mse": log.epoch_losses[-1]}))
    cfg = {"grid_side": grid_side, "train": train_cfg.to_dict(),
           "splits": list(splits)}
    return ZooManifest(task="inr-sine", dims=list(dims), spec=spec,
                       records=records, config=cfg)


# ------------------------------------------------------- noisy classifiers


@dataclass
class ClassificationData:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray


def gen_blobs(rng: np.random.Generator, n_train: int = 400, n_test: int = 200,
              center: float = 1.5) -> ClassificationData:
    """Two unit-variance Gaussian clusters at (+-center, +-center), balanced."""

    def draw(n):
        half = n // 2
        x0 = rng.standard_normal((half, 2)) + center
        x1 = rng.standard_normal((n - half, 2)) - center
        x = np.vstack([x0, x1])
        y = np.concatenate([np.zeros(half, dtype=np.int64),
                            np.ones(n - half, dtype=np.int64)])
        order = rng.permutation(n)
        return x[order], y[order]

    x_tr, y_tr = draw(n_train)
    x_te, y_te = draw(n_test)
    return ClassificationData(x_tr, y_tr, x_te, y_te)


def label_shuffle(y: np.ndarray, rho: float, rng: np.random.Generator) -> np.ndarray:
    """Permute the labels of a rho-fraction of points among themselves."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"noise fraction must be in [0, 1], got {rho}")
    y = np.asarray(y).copy()
    n_pick = int(round(rho * len(y)))
    idx = rng.choice(len(y), size=n_pick, replace=False)
    y[idx] = y[idx][rng.permutation(n_pick)]
    return y


def classifier_accuracy(net: KanNet, x: np.ndarray, y: np.ndarray) -> float:
    logits = kan_forward_batch(net, x)
    return float((logits.argmax(axis=1) == np.asarray(y)).mean())


def build_acc_zoo(n_models: int, dims: list[int], spec: SplineSpec,
                  base_dataset: ClassificationData, rng: np.random.Generator,
                  train_cfg: KanTrainConfig | None = None,
                  splits: tuple[int, int, int] | None = None) -> ZooManifest:
    """Train classifiers under per-model label noise; target is test accuracy.

    Each model draws rho ~ Uniform[0, 1], shuffles the labels of a
    rho-fraction of the training points, trains, and records accuracy on
    the untouched test set. Default split is 70/15/15.
    """
    if train_cfg is None:
        train_cfg = KanTrainConfig(epochs=150, loss="cross-entropy")
    if splits is None:
        n_train = int(round(0.7 * n_models))
        n_val = int(round(0.15 * n_models))
        splits = (n_train, n_val, n_models - n_train - n_val)
    if sum(splits) != n_models:
        raise ValueError(f"splits {splits} do not sum to n_models={n_models}")
    labels = _split_labels(splits)
    seeds = _model_seeds(rng, n_models)
    records = []
    for i in range(n_models):
        mrng = np.random.default_rng(int(seeds[i]))
        rho = float(mrng.uniform(0.0, 1.0))
        y_noisy = label_shuffle(base_dataset.y_train, rho, mrng)
        net = train_cfg.init_net(dims, spec, mrng)
        trained, log = train_kan(net, base_dataset.x_train, y_noisy,
                                 loss=train_cfg.loss, epochs=train_cfg.epochs,
                                 lr=train_cfg.lr, batch_size=train_cfg.batch_size, rng=mrng)
        acc = classifier_accuracy(trained, base_dataset.x_test, base_dataset.y_test)
        records.append(ZooRecord(
            record_id=i, net=trained, target=np.array([acc]), split=labels[i],
            seed=int(seeds[i]),
            meta={"noise_fraction": rho, "final_fit_loss": log.epoch_losses[-1]}))
    cfg = {"train": train_cfg.to_dict(), "splits": list(splits)}
    return ZooManifest(task="blob-acc", dims=list(dims), spec=spec,
                       records=records, config=cfg)


# ------------------------------------------------------------------ pruning


def n_edges(dims: list[int]) -> int:
    return int(sum(dims[i] * dims[i + 1] for i in range(len(dims) - 1)))


def oracle_prune(net: KanNet, train_inputs: np.ndarray, threshold: float = 0.01,
                 signed: bool = False) -> np.ndarray:
    """Edge keep-mask from average per-edge activation over training inputs.

    mask[e] = 0 iff the mean over inputs of |edge value| falls below the
    threshold, else 1. With signed=True the raw mean is used instead of
    the absolute value (a documented variant; signed means can cancel).
    Edge order matches the graph tables: layer outer, then destination,
    then source. Runs one traced forward pass per input.
    """
    train_inputs = np.asarray(train_inputs, dtype=np.float64)
    if train_inputs.ndim != 2 or train_inputs.shape[0] == 0:
        raise ValueError(f"train_inputs must be a nonempty (n, d0) array, got {train_inputs.shape}")
    sums = [np.zeros((lay.d_out, lay.d_in)) for lay in net.layers]
    for row in train_inputs:
        trace = kan_forward_trace(net, row)
        for s, ev in zip(sums, trace.edge_values):
            s += ev if signed else np.abs(ev)
    n = train_inputs.shape[0]
    parts = []
    for s in sums:
        stat = np.abs(s / n) if signed else s / n
        parts.append(stat >= threshold)
    return np.concatenate([p.reshape(-1) for p in parts]).astype(np.uint8)


def apply_mask(net: KanNet, mask: np.ndarray) -> KanNet:
    """Zero every parameter of masked-out edges; mask order as in oracle_prune."""
    mask = np.asarray(mask)
    if mask.shape != (n_edges(net.dims),):
        raise ValueError(f"mask length {mask.shape} does not match edge count {n_edges(net.dims)}")
    out = net.copy()
    off = 0
    for lay in out.layers:
        block = mask[off : off + lay.d_out * lay.d_in].reshape(lay.d_out, lay.d_in)
        lay.params[block == 0] = 0.0
        off += lay.d_out * lay.d_in
    return out


def compute_prune_masks(manifest: ZooManifest, inputs: np.ndarray,
                        threshold: float = 0.01, signed: bool = False) -> ZooManifest:
    """Attach an oracle mask for every record; returns a new manifest."""
    masks = {r.record_id: oracle_prune(r.net, inputs, threshold, signed)
             for r in manifest.records}
    cfg = dict(manifest.config)
    cfg["prune"] = {"threshold": threshold, "signed": signed}
    return replace(manifest, config=cfg, masks=masks)


# ------------------------------------------------------------ serialization


def _manifest_json(manifest: ZooManifest, offsets: list[tuple[int, int]]) -> str:
    recs = []
    for r, (off, length) in zip(manifest.records, offsets):
        recs.append({
            "id": r.record_id,
            "split": r.split,
            "seed": r.seed,
            "target": [float(t) for t in np.asarray(r.target).ravel()],
            "meta": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                     for k, v in sorted(r.meta.items())},
            "offset": off,
            "length": length,
        })
    doc = {
        "format_version": 1,
        "task": manifest.task,
        "dims": manifest.dims,
        "spline": {"a": manifest.spec.a, "b": manifest.spec.b,
                   "grid_size": manifest.spec.grid_size, "degree": manifest.spec.degree},
        "n_records": len(manifest.records),
        "split_counts": manifest.split_counts(),
        "config": manifest.config,
        "records": recs,
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save_zoo(manifest: ZooManifest, dirpath: str) -> None:
    """Write manifest.json, checkpoints.bin, and masks.bin (if masks present)."""
    os.makedirs(dirpath, exist_ok=True)
    blobs, offsets, pos = [], [], 0
    for r in manifest.records:
        blob = save_kan(r.net)
        blobs.append(blob)
        offsets.append((pos, len(blob)))
        pos += len(blob)
    with open(os.path.join(dirpath, "checkpoints.bin"), "wb") as f:
        f.write(b"".join(blobs))
    with open(os.path.join(dirpath, "manifest.json"), "w") as f:
        f.write(_manifest_json(manifest, offsets))
    if manifest.masks is not None:
        ids = sorted(manifest.masks)
        stacked = np.stack([manifest.masks[i] for i in ids]).astype(np.uint8)
        blob = write_container(MASKS_MAGIC, 1, {"format_version": 1, "ids": ids},
                               [("masks", stacked)])
        with open(os.path.join(dirpath, "masks.bin"), "wb") as f:
            f.write(blob)


def load_zoo(dirpath: str) -> ZooManifest:
    """Read a zoo directory back, validating checkpoint dims against the header."""
    with open(os.path.join(dirpath, "manifest.json")) as f:
        doc = json.load(f)
    if doc.get("format_version") != 1:
        raise ValueError(f"unsupported manifest format_version {doc.get('format_version')}")
    spec = make_spec(a=doc["spline"]["a"], b=doc["spline"]["b"],
                     grid_size=doc["spline"]["grid_size"], degree=doc["spline"]["degree"])
    dims = [int(d) for d in doc["dims"]]
    with open(os.path.join(dirpath, "checkpoints.bin"), "rb") as f:
        data = f.read()
    records = []
    for rd in doc["records"]:
        blob = data[rd["offset"] : rd["offset"] + rd["length"]]
        net = load_kan(blob)
        if net.dims != dims:
            raise ValueError(f"record {rd['id']}: checkpoint dims {net.dims} != manifest dims {dims}")
        if (net.spec.a, net.spec.b, net.spec.grid_size, net.spec.degree) != \
                (spec.a, spec.b, spec.grid_size, spec.degree):
            raise ValueError(f"record {rd['id']}: checkpoint spline meta disagrees with manifest")
        records.append(ZooRecord(
            record_id=int(rd["id"]), net=net, target=np.array(rd["target"], dtype=np.float64),
            split=rd["split"], seed=int(rd["seed"]), meta=dict(rd["meta"])))
    counts = doc["split_counts"]
    if sum(counts.values()) != len(records):
        raise ValueError("split counts do not sum to the record count")
    manifest = ZooManifest(task=doc["task"], dims=dims, spec=spec,
                           records=records, config=doc.get("config", {}))
    masks_path = os.path.join(dirpath, "masks.bin")
    if os.path.exists(masks_path):
        with open(masks_path, "rb") as f:
            _, header, arrays = read_container(f.read(), MASKS_MAGIC, 1)
        stacked = arrays["masks"]
        if stacked.shape[1] != n_edges(dims):
            raise ValueError(f"mask width {stacked.shape[1]} != edge count {n_edges(dims)}")
        manifest.masks = {int(i): stacked[j].astype(np.uint8)
                          for j, i in enumerate(header["ids"])}
    return manifest
