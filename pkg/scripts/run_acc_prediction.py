"""Predict classifier test accuracy from weights on the label-noise blob zoo."""

import argparse
import json

import numpy as np

from wskan.splines import make_spec
from wskan.training import TrainSettings, evaluate, train_model
from wskan.zoo import KanTrainConfig, build_acc_zoo, gen_blobs, load_zoo, save_zoo


def get_zoo(args):
    if args.zoo is not None:
        return load_zoo(args.zoo)
    data = gen_blobs(np.random.default_rng(args.zoo_seed + 1))
    splits = (args.n - 2 * (args.n // 10), args.n // 10, args.n // 10)
    print(f"building blob zoo n={args.n} splits={splits} (takes a while)")
    zoo = build_acc_zoo(args.n, [2, 8, 8, 2], make_spec(-4.0, 4.0, 5, 3), data,
                        np.random.default_rng(args.zoo_seed), splits=splits,
                        train_cfg=KanTrainConfig(epochs=300, loss="cross-entropy",
                                                 base_weight=0.0))
    if args.save_zoo:
        save_zoo(zoo, args.save_zoo)
    return zoo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--zoo", help="existing blob zoo directory")
    ap.add_argument("--save-zoo")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--zoo-seed", type=int, default=2027)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--kinds", nargs="+",
                    default=["wskan", "deepsets", "mlp", "mlp-aug", "mlp-align"])
    ap.add_argument("--out", help="JSONL file for the per-run records")
    args = ap.parse_args()

    zoo = get_zoo(args)
    rows = []
    for kind in args.kinds:
        r2s = []
        for seed in args.seeds:
            model, _ = train_model(zoo, kind, "acc-pred",
                                   TrainSettings(epochs=args.epochs, seed=seed))
            r = {"kind": kind, "seed": seed, "test": evaluate(model, zoo, "test")}
            rows.append(r)
            r2s.append(r["test"].get("r2", float("nan")))
        print(f"{kind:10s} test r2 {np.mean(r2s):.3f} +- {np.std(r2s):.3f}")
    if args.out:
        with open(args.out, "w") as fh:
            for r in rows:
                fh.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main()
