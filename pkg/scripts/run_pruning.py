"""Mask prediction on the blob zoo: predicted masks vs the activation oracle.

Trains a WS-KAN mask predictor, reports ROC-AUC against the oracle masks,
and compares post-prune accuracy and per-net wall time for the oracle,
the predictor, and the keep-everything baseline.
"""

import argparse
import time

import numpy as np

from wskan.splines import make_spec
from wskan.training import (TrainSettings, evaluate, predict_mask_scores,
                            train_model)
from wskan.zoo import (KanTrainConfig, apply_mask, build_acc_zoo,
                       classifier_accuracy, compute_prune_masks, gen_blobs,
                       load_zoo, oracle_prune, save_zoo)


def get_zoo(args):
    if args.zoo is not None:
        zoo = load_zoo(args.zoo)
        if zoo.masks is None:
            raise SystemExit("zoo has no mask sidecar; build with prune-mask task")
        return zoo
    data = gen_blobs(np.random.default_rng(args.zoo_seed + 1))
    splits = (args.n - 2 * (args.n // 10), args.n // 10, args.n // 10)
    print(f"building blob zoo n={args.n} splits={splits} (takes a while)")
    zoo = build_acc_zoo(args.n, [2, 8, 8, 2], make_spec(-4.0, 4.0, 5, 3), data,
                        np.random.default_rng(args.zoo_seed),
                        train_cfg=KanTrainConfig(epochs=300, loss="cross-entropy",
                                                 base_weight=0.0),
                        splits=splits)
    zoo = compute_prune_masks(zoo, data.x_train, threshold=args.threshold)
    if args.save_zoo:
        save_zoo(zoo, args.save_zoo)
    return zoo


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--zoo", help="existing blob zoo directory with masks")
    ap.add_argument("--save-zoo")
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--zoo-seed", type=int, default=2027)
    ap.add_argument("--threshold", type=float, default=0.01)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    zoo = get_zoo(args)
    data = gen_blobs(np.random.default_rng(zoo.config["dataset"]["seed"]))

    model, _ = train_model(zoo, "wskan", "prune-mask",
                           TrainSettings(epochs=args.epochs, seed=args.seed))
    print("test metrics:", evaluate(model, zoo, "test"))

    test = zoo.records_for("test")
    nets = [r.net for r in test]
    t0 = time.perf_counter()
    scores = predict_mask_scores(model, nets)
    t_pred = (time.perf_counter() - t0) / len(nets)
    pred_masks = (scores >= model.threshold).astype(np.int64)

    t0 = time.perf_counter()
    oracle_masks = [oracle_prune(n, data.x_train, args.threshold) for n in nets]
    t_oracle = (time.perf_counter() - t0) / len(nets)

    rows = {"oracle": [], "wskan": [], "baseline": []}
    for i, r in enumerate(test):
        for mode, mask in (("oracle", oracle_masks[i]), ("wskan", pred_masks[i]),
                           ("baseline", np.ones_like(pred_masks[i]))):
            acc = classifier_accuracy(apply_mask(r.net, mask), data.x_test, data.y_test)
            rows[mode].append((mask.mean(), acc))
    print(f"per-net wall time: wskan {t_pred*1e3:.1f} ms, oracle {t_oracle*1e3:.1f} ms")
    for mode, vals in rows.items():
        kept = np.mean([v[0] for v in vals])
        acc = np.mean([v[1] for v in vals])
        print(f"{mode:9s} kept {kept*100:5.1f}%  post-prune acc {acc:.3f}")


if __name__ == "__main__":
    main()
