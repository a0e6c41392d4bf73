"""Command-line surface for zoos, weight-space training, and evaluation.

Subcommands: zoo-build, train-meta, eval, verify-symmetry, prune, ood-eval.

Conventions shared by every command:

- deterministic given --seed
- every printed summary and results file carries a config hash computed
  over the resolved settings (output paths excluded)
- results files are line-delimited JSON, one record per line
- relative --zoo/--out/--checkpoint paths resolve against WSKAN_DATA_ROOT
  when that variable is set
- exit codes: 0 success, 1 validation failure, 2 invalid config, 3 I/O
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from .kan import load_kan
from .metrics import mse, r2, roc_auc
from .splines import make_spec
from .symmetry import verify_invariance
from .training import (
    MODEL_KINDS,
    TASKS,
    TrainSettings,
    evaluate,
    load_model,
    predict,
    predict_mask_scores,
    save_model,
    task_target_matrix,
    train_model,
)
from .zoo import (
    KanTrainConfig,
    apply_mask,
    build_acc_zoo,
    build_inr_zoo,
    classifier_accuracy,
    compute_prune_masks,
    gen_blobs,
    load_zoo,
    n_edges,
    oracle_prune,
    save_zoo,
)

__all__ = ["main"]

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_IO = 3

DATA_ROOT_VAR = "WSKAN_DATA_ROOT"


class ConfigError(Exception):
    pass


class IoError(Exception):
    pass


def _resolve(path: str) -> str:
    root = os.environ.get(DATA_ROOT_VAR)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def config_hash(cfg: dict) -> str:
    """Stable short hash of a resolved configuration (paths excluded)."""
    slim = {k: v for k, v in sorted(cfg.items())
            if not k.endswith(("out", "path", "zoo", "checkpoint", "log"))}
    blob = json.dumps(slim, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _write_results(path: str, records: list[dict]) -> None:
    try:
        with open(path, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write results file {path}: {exc}") from exc


def _load_zoo(path: str):
    try:
        return load_zoo(_resolve(path))
    except FileNotFoundError as exc:
        raise IoError(f"zoo not found at {path}: {exc}") from exc


def _load_model(path: str):
    try:
        with open(_resolve(path), "rb") as fh:
            return load_model(fh.read())
    except FileNotFoundError as exc:
        raise IoError(f"checkpoint not found at {path}: {exc}") from exc


def _parse_ints(text: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok != ""]
    except ValueError as exc:
        raise ConfigError(f"{flag} expects comma-separated integers, got {text!r}") from exc


def _scaled(metrics: dict) -> dict:
    """Display-layer rescaling: MSE x1e3, R2 x1e2. Stored values stay raw."""
    out = {}
    if "mse" in metrics:
        out["mse_x1e3"] = metrics["mse"] * 1e3
    if "r2" in metrics:
        out["r2_x1e2"] = metrics["r2"] * 1e2
    return out


def _default_splits(n: int) -> tuple[int, int, int]:
    n_val = max(1, round(n * 0.1))
    n_test = max(1, round(n * 0.1))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ConfigError(f"n={n} too small to split into train/val/test")
    return (n_train, n_val, n_test)


# --------------------------------------------------------------- zoo-build


def cmd_zoo_build(args) -> int:
    if args.n <= 0:
        raise ConfigError("--n must be positive")
    if args.task not in TASKS:
        raise ConfigError(f"unknown task {args.task!r}")
    dims = _parse_ints(args.dims, "--dims")
    splits = _default_splits(args.n) if args.splits is None else \
        tuple(_parse_ints(args.splits, "--splits"))
    rng = np.random.default_rng(args.seed)
    cfg_dict = {
        "command": "zoo-build", "task": args.task, "n": args.n, "dims": dims,
        "grid": args.grid, "degree": args.degree, "domain": [args.a, args.b],
        "seed": args.seed, "splits": list(splits), "epochs": args.epochs,
        "lr": args.lr, "batch_size": args.batch_size, "threshold": args.threshold,
    }
    h = config_hash(cfg_dict)
    spec = make_spec(args.a, args.b, args.grid, args.degree)
    if args.task == "sine-inr":
        train_cfg = KanTrainConfig(epochs=args.epochs, lr=args.lr,
                                   batch_size=args.batch_size, loss="mse")
        zoo = build_inr_zoo(args.n, dims, spec, train_cfg, splits, rng)
    else:
        data = gen_blobs(np.random.default_rng(args.seed + 1))
        train_cfg = KanTrainConfig(epochs=args.epochs, lr=args.lr,
                                   batch_size=args.batch_size,
                                   loss="cross-entropy", base_weight=0.0)
        zoo = build_acc_zoo(args.n, dims, spec, data, rng, train_cfg=train_cfg,
                            splits=splits)
        zoo.config["dataset"] = {"kind": "blobs", "seed": args.seed + 1}
        if args.task == "prune-mask":
            zoo = compute_prune_masks(zoo, data.x_train, threshold=args.threshold)
    zoo.config["config_hash"] = h
    out = _resolve(args.out)
    try:
        save_zoo(zoo, out)
    except OSError as exc:
        raise IoError(f"cannot write zoo to {out}: {exc}") from exc
    counts = zoo.split_counts()
    print(f"zoo-build task={args.task} config={h}")
    print(f"records {len(zoo.records)} split train/val/test "
          f"{counts['train']}/{counts['val']}/{counts['test']}")
    if zoo.masks is not None:
        kept = float(np.mean([m.mean() for m in zoo.masks.values()]))
        print(f"masks attached, mean kept fraction {kept:.3f}")
    print(f"written to {out}")
    return EXIT_OK


# --------------------------------------------------------------- train-meta


def _infer_task(manifest, requested: str | None) -> str:
    if requested is not None:
        if requested not in TASKS:
            raise ConfigError(f"unknown task {requested!r}")
        return requested
    if manifest.task == "inr-sine":
        return "sine-inr"
    return "prune-mask" if manifest.masks is not None else "acc-pred"


def cmd_train_meta(args) -> int:
    if args.model not in MODEL_KINDS:
        raise ConfigError(f"unknown model {args.model!r}; expected one of {MODEL_KINDS}")
    zoo = _load_zoo(args.zoo)
    task = _infer_task(zoo, args.task)
    settings = TrainSettings(
        epochs=args.epochs, lr=args.lr, batch_size=args.batch_size,
        weight_decay=args.weight_decay, warmup_steps=args.warmup_steps,
        seed=args.seed, hidden_dim=args.hidden_dim, n_layers=args.n_layers,
        dropout_rate=args.dropout, use_pe=not args.no_pe,
        bidirectional=not args.no_bidirectional, aggregation=args.aggregation)
    cfg_dict = {"command": "train-meta", "model": args.model, "task": task,
                **settings.to_dict()}
    h = config_hash(cfg_dict)
    try:
        model, log = train_model(zoo, args.model, task, settings)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    model.meta["config_hash"] = h
    out = _resolve(args.out)
    try:
        with open(out, "wb") as fh:
            fh.write(save_model(model))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint to {out}: {exc}") from exc
    if args.log is not None:
        for entry in log:
            entry["config_hash"] = h
        _write_results(_resolve(args.log), log)
    best = ", ".join(f"{k}={v:.6g}" for k, v in model.meta["best_val"].items())
    print(f"train-meta model={args.model} task={task} config={h}")
    print(f"epochs {settings.epochs}, best validation: {best}")
    print(f"checkpoint written to {out}")
    return EXIT_OK


# --------------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    zoo = _load_zoo(args.zoo)
    models = [_load_model(p) for p in args.checkpoint]
    tasks = {m.task for m in models}
    if len(tasks) != 1:
        raise ConfigError(f"checkpoints disagree on task: {sorted(tasks)}")
    task = tasks.pop()
    if args.metrics:
        allowed = {"roc-auc", "mask-accuracy"} if task == "prune-mask" else {"mse", "r2"}
        wanted = set(args.metrics.split(","))
        bad = wanted - allowed
        if bad:
            raise ConfigError(f"metrics {sorted(bad)} not available for task {task!r}")
    if not zoo.records_for(args.split):
        raise ConfigError(f"split {args.split!r} is empty")
    cfg_dict = {"command": "eval", "split": args.split, "task": task,
                "n_checkpoints": len(models)}
    h = config_hash(cfg_dict)
    rows = []
    for path, model in zip(args.checkpoint, models):
        try:
            m = evaluate(model, zoo, args.split)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        rows.append({"checkpoint": os.path.basename(path), "kind": model.kind,
                     "seed": model.meta.get("settings", {}).get("seed"),
                     "split": args.split, "metrics": m, "scaled": _scaled(m),
                     "config_hash": h})
    print(f"eval task={task} split={args.split} config={h}")
    keys = sorted(rows[0]["metrics"])
    for row in rows:
        cells = [f"{k}={row['metrics'][k]:.6g}" for k in keys]
        cells += [f"{k}={v:.4g}" for k, v in row["scaled"].items()]
        print(f"  {row['kind']:10s} seed={row['seed']} " + " ".join(cells))
    summary = None
    if len(rows) > 1:
        summary = {"split": args.split, "n": len(rows), "config_hash": h,
                   "mean": {}, "std": {}}
        for k in keys:
            vals = np.array([row["metrics"][k] for row in rows])
            summary["mean"][k] = float(vals.mean())
            summary["std"][k] = float(vals.std())
            print(f"  {k}: mean {vals.mean():.6g} +/- {vals.std():.6g} over {len(rows)} runs")
    if args.out is not None:
        _write_results(_resolve(args.out), rows + ([summary] if summary else []))
        print(f"results written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------- verify-symmetry


def cmd_verify_symmetry(args) -> int:
    if args.tol <= 0:
        raise ConfigError("--tol must be positive")
    if (args.checkpoint is None) == (args.zoo is None):
        raise ConfigError("provide exactly one of --checkpoint or --zoo")
    if args.checkpoint is not None:
        try:
            with open(_resolve(args.checkpoint), "rb") as fh:
                nets = [load_kan(fh.read())]
        except FileNotFoundError as exc:
            raise IoError(str(exc)) from exc
    else:
        zoo = _load_zoo(args.zoo)
        nets = [r.net for r in zoo.records]
    cfg_dict = {"command": "verify-symmetry", "n_inputs": args.n_inputs,
                "tol": args.tol, "seed": args.seed, "n_nets": len(nets)}
    h = config_hash(cfg_dict)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for net in nets:
        rep = verify_invariance(net, args.n_inputs, args.tol, rng)
        worst = max(worst, rep.max_deviation)
    ok = worst < args.tol
    print(f"verify-symmetry config={h} nets={len(nets)} "
          f"max deviation {worst:.3e} tol {args.tol:.3e} -> "
          + ("PASS" if ok else "FAIL"))
    return EXIT_OK if ok else EXIT_FAIL


# -------------------------------------------------------------------- prune


def _noise_bin(rho: float) -> str:
    hi = min(int(rho * 5), 4)
    return f"[{hi * 20}%,{(hi + 1) * 20}%)"


def cmd_prune(args) -> int:
    zoo = _load_zoo(args.zoo)
    if zoo.task != "blob-acc":
        raise ConfigError("prune needs a classifier zoo (blob-acc task)")
    ds_info = zoo.config.get("dataset")
    if not ds_info or ds_info.get("kind") != "blobs":
        raise ConfigError("zoo does not record its dataset; rebuild with zoo-build")
    data = gen_blobs(np.random.default_rng(ds_info["seed"]))
    model = None
    if args.mode == "wskan":
        if args.checkpoint is None:
            raise ConfigError("wskan mode needs --checkpoint")
        model = _load_model(args.checkpoint)
        if model.task != "prune-mask":
            raise ConfigError("checkpoint was not trained for mask prediction")
    cfg_dict = {"command": "prune", "mode": args.mode, "split": args.split,
                "threshold": args.threshold, "seed": args.seed}
    h = config_hash(cfg_dict)
    records = zoo.records_for(args.split)
    if not records:
        raise ConfigError(f"split {args.split!r} is empty")
    rows = []
    for rec in records:
        t0 = time.perf_counter()
        if args.mode == "oracle":
            mask = oracle_prune(rec.net, data.x_train, threshold=args.threshold)
        elif args.mode == "wskan":
            scores = predict_mask_scores(model, [rec.net])[0]
            mask = (scores >= model.threshold).astype(np.uint8)
        else:
            mask = np.ones(n_edges(zoo.dims), dtype=np.uint8)
        wall = time.perf_counter() - t0
        pruned = apply_mask(rec.net, mask)
        acc = classifier_accuracy(pruned, data.x_test, data.y_test)
        rho = rec.meta.get("noise_fraction", 0.0)
        rows.append({"record_id": rec.record_id, "noise_fraction": rho,
                     "noise_bin": _noise_bin(rho),
                     "kept_weight_pct": float(mask.mean() * 100.0),
                     "post_prune_accuracy": acc, "wall_time": wall,
                     "mode": args.mode, "config_hash": h})
    print(f"prune mode={args.mode} split={args.split} config={h} n={len(rows)}")
    print(f"  mean kept weight {np.mean([r['kept_weight_pct'] for r in rows]):.1f}% "
          f"mean accuracy {np.mean([r['post_prune_accuracy'] for r in rows]):.3f} "
          f"mean wall {np.mean([r['wall_time'] for r in rows]):.4f}s")
    for b in sorted({r["noise_bin"] for r in rows}):
        sel = [r for r in rows if r["noise_bin"] == b]
        print(f"  bin {b}: n={len(sel)} kept "
              f"{np.mean([r['kept_weight_pct'] for r in sel]):.1f}% acc "
              f"{np.mean([r['post_prune_accuracy'] for r in sel]):.3f}")
    if args.out is not None:
        _write_results(_resolve(args.out), rows)
        print(f"results written to {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------- ood-eval


def cmd_ood_eval(args) -> int:
    model = _load_model(args.checkpoint)
    if model.kind not in ("wskan", "deepsets"):
        raise ConfigError(f"width-incompatible-model: {model.kind!r} is tied to "
                          "a fixed parameter vector and cannot change width")
    if model.task != "sine-inr":
        raise ConfigError("ood-eval supports sine-task checkpoints")
    widths = _parse_ints(args.widths, "--widths")
    if not widths or min(widths) < 1:
        raise ConfigError("--widths needs positive integers")
    a, b, grid, degree = model.meta["spec"]
    dims0 = model.meta["dims"]
    cfg_dict = {"command": "ood-eval", "widths": widths, "n": args.n,
                "seed": args.seed, "epochs": args.epochs, "train_dims": dims0}
    h = config_hash(cfg_dict)
    spec = make_spec(a, b, int(grid), int(degree))
    rows = []
    print(f"ood-eval kind={model.kind} trained-dims={dims0} config={h}")
    for w in widths:
        dims = [dims0[0]] + [w] * (len(dims0) - 2) + [dims0[-1]]
        zoo = build_inr_zoo(args.n, dims, spec,
                            KanTrainConfig(epochs=args.epochs),
                            (args.n, 0, 0), np.random.default_rng(args.seed + w))
        nets = [r.net for r in zoo.records]
        targets = np.stack([r.target for r in zoo.records])
        preds = predict(model, nets)
        m = {"mse": mse(preds, targets), "r2": r2(preds, targets)}
        rows.append({"width": w, "dims": dims, "n": args.n, "metrics": m,
                     "scaled": _scaled(m), "config_hash": h})
        print(f"  width {w:3d} dims={dims} mse={m['mse']:.6g} r2={m['r2']:.6g}")
    if args.out is not None:
        _write_results(_resolve(args.out), rows)
        print(f"results written to {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wskan",
                                description="weight-space learning on KANs")
    sub = p.add_subparsers(dest="command", required=True)

    zb = sub.add_parser("zoo-build", help="build a model zoo on disk")
    zb.add_argument("--task", required=True, choices=list(TASKS))
    zb.add_argument("--n", type=int, required=True)
    zb.add_argument("--dims", default=None)
    zb.add_argument("--grid", type=int, default=None)
    zb.add_argument("--degree", type=int, default=3)
    zb.add_argument("--a", type=float, default=None)
    zb.add_argument("--b", type=float, default=None)
    zb.add_argument("--seed", type=int, default=0)
    zb.add_argument("--splits", default=None)
    zb.add_argument("--epochs", type=int, default=None)
    zb.add_argument("--lr", type=float, default=0.01)
    zb.add_argument("--batch-size", type=int, default=128)
    zb.add_argument("--threshold", type=float, default=0.01)
    zb.add_argument("--out", required=True)
    zb.set_defaults(fn=cmd_zoo_build)

    dflt = TrainSettings()
    tm = sub.add_parser("train-meta", help="train a weight-space model on a zoo")
    tm.add_argument("--zoo", required=True)
    tm.add_argument("--model", required=True)
    tm.add_argument("--task", default=None)
    tm.add_argument("--epochs", type=int, default=dflt.epochs)
    tm.add_argument("--lr", type=float, default=dflt.lr)
    tm.add_argument("--batch-size", type=int, default=dflt.batch_size)
    tm.add_argument("--weight-decay", type=float, default=dflt.weight_decay)
    tm.add_argument("--warmup-steps", type=int, default=dflt.warmup_steps)
    tm.add_argument("--seed", type=int, default=0)
    tm.add_argument("--hidden-dim", type=int, default=dflt.hidden_dim)
    tm.add_argument("--n-layers", type=int, default=dflt.n_layers)
    tm.add_argument("--dropout", type=float, default=dflt.dropout_rate)
    tm.add_argument("--no-pe", action="store_true")
    tm.add_argument("--no-bidirectional", action="store_true")
    tm.add_argument("--aggregation", default="sum", choices=["sum", "mean"])
    tm.add_argument("--log", default=None)
    tm.add_argument("--out", required=True)
    tm.set_defaults(fn=cmd_train_meta)

    ev = sub.add_parser("eval", help="evaluate checkpoints on a zoo split")
    ev.add_argument("--zoo", required=True)
    ev.add_argument("--checkpoint", required=True, nargs="+")
    ev.add_argument("--split", default="test", choices=["train", "val", "test"])
    ev.add_argument("--metrics", default=None)
    ev.add_argument("--out", default=None)
    ev.set_defaults(fn=cmd_eval)

    vs = sub.add_parser("verify-symmetry", help="check permutation invariance")
    vs.add_argument("--checkpoint", default=None)
    vs.add_argument("--zoo", default=None)
    vs.add_argument("--n-inputs", type=int, default=50)
    vs.add_argument("--tol", type=float, default=1e-8)
    vs.add_argument("--seed", type=int, default=0)
    vs.set_defaults(fn=cmd_verify_symmetry)

    pr = sub.add_parser("prune", help="mask and re-evaluate classifier zoos")
    pr.add_argument("--zoo", required=True)
    pr.add_argument("--mode", required=True, choices=["oracle", "wskan", "baseline"])
    pr.add_argument("--checkpoint", default=None)
    pr.add_argument("--threshold", type=float, default=0.01)
    pr.add_argument("--split", default="test", choices=["train", "val", "test"])
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--out", default=None)
    pr.set_defaults(fn=cmd_prune)

    oe = sub.add_parser("ood-eval", help="evaluate a checkpoint on unseen widths")
    oe.add_argument("--checkpoint", required=True)
    oe.add_argument("--widths", required=True)
    oe.add_argument("--n", type=int, default=40)
    oe.add_argument("--epochs", type=int, default=600)
    oe.add_argument("--seed", type=int, default=0)
    oe.add_argument("--out", default=None)
    oe.set_defaults(fn=cmd_ood_eval)
    return p


TASK_DEFAULTS = {
    "sine-inr": {"dims": "2,8,8,1", "grid": 10, "a": -1.0, "b": 1.0, "epochs": 600},
    "acc-pred": {"dims": "2,8,8,2", "grid": 5, "a": -4.0, "b": 4.0, "epochs": 300},
    "prune-mask": {"dims": "2,8,8,2", "grid": 5, "a": -4.0, "b": 4.0, "epochs": 300},
}


def _fill_task_defaults(args) -> None:
    table = TASK_DEFAULTS.get(getattr(args, "task", None))
    if table is None:
        return
    for key, val in table.items():
        if getattr(args, key, None) is None:
            setattr(args, key, val)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "zoo-build":
        _fill_task_defaults(args)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
