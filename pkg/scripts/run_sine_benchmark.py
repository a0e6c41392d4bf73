"""Frequency regression from INR weights: every model kind on one sine zoo.

Builds (or loads) a zoo of KANs fit to sin(w.x), trains each weight-space
model kind for several seeds, and prints mean +- std of the test MSE.
"""

import argparse
import json
import time

import numpy as np

from wskan.splines import make_spec
from wskan.training import MODEL_KINDS, TrainSettings, evaluate, train_model
from wskan.zoo import KanTrainConfig, build_inr_zoo, load_zoo, save_zoo


def get_zoo(args):
    if args.zoo is not None:
        return load_zoo(args.zoo)
    splits = (args.n - 2 * (args.n // 10), args.n // 10, args.n // 10)
    print(f"building sine zoo n={args.n} splits={splits} (takes a while)")
    zoo = build_inr_zoo(args.n, [2, 8, 8, 1], make_spec(-1.0, 1.0, 10, 3),
                        KanTrainConfig(epochs=args.inr_epochs),
                        splits, np.random.default_rng(args.zoo_seed))
    if args.save_zoo:
        save_zoo(zoo, args.save_zoo)
    return zoo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--zoo", help="existing zoo directory; built fresh when omitted")
    ap.add_argument("--save-zoo", help="where to store a freshly built zoo")
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--zoo-seed", type=int, default=2026)
    ap.add_argument("--inr-epochs", type=int, default=600)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--kinds", nargs="+", default=list(MODEL_KINDS))
    ap.add_argument("--out", help="JSONL file for the per-run records")
    args = ap.parse_args()

    zoo = get_zoo(args)
    rows = []
    for kind in args.kinds:
        per_seed = []
        for seed in args.seeds:
            t0 = time.perf_counter()
            model, _ = train_model(zoo, kind, "sine-inr",
                                   TrainSettings(epochs=args.epochs, seed=seed))
            r = {"kind": kind, "seed": seed,
                 "val": evaluate(model, zoo, "val"),
                 "test": evaluate(model, zoo, "test"),
                 "wall_time": time.perf_counter() - t0}
            per_seed.append(r)
            rows.append(r)
            print(f"  {kind} seed={seed} test mse {r['test']['mse']:.4f} "
                  f"({r['wall_time']:.0f}s)", flush=True)
        t = np.array([r["test"]["mse"] for r in per_seed])
        print(f"{kind:10s} test mse {t.mean():.4f} +- {t.std():.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            for r in rows:
                fh.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main()
