"""Tests for the shared weight-space training loop and its checkpoint format."""

import numpy as np
import pytest

from wskan.graph import induced_edge_permutation
from wskan.splines import make_spec
from wskan.symmetry import act, sample_group_element
from wskan.training import (
    MODEL_KINDS,
    TrainSettings,
    evaluate,
    load_model,
    predict,
    predict_mask_scores,
    save_model,
    task_target_matrix,
    train_model,
)
from wskan.zoo import (
    KanTrainConfig,
    build_acc_zoo,
    build_inr_zoo,
    compute_prune_masks,
    gen_blobs,
)

FAST = TrainSettings(epochs=3, batch_size=4, hidden_dim=16, n_layers=2,
                     warmup_steps=5, seed=11)


@pytest.fixture(scope="module")
def sine_zoo():
    return build_inr_zoo(12, [2, 3, 1], make_spec(-1, 1, 5, 3),
                         KanTrainConfig(epochs=20), (8, 2, 2),
                         np.random.default_rng(5))


@pytest.fixture(scope="module")
def blob_zoo():
    data = gen_blobs(np.random.default_rng(1), n_train=80, n_test=40)
    zoo = build_acc_zoo(12, [2, 3, 2], make_spec(-4, 4, 5, 3), data,
                        np.random.default_rng(5),
                        train_cfg=KanTrainConfig(epochs=40, loss="cross-entropy",
                                                 base_weight=0.0),
                        splits=(8, 2, 2))
    return compute_prune_masks(zoo, data.x_train, threshold=0.01)


def test_target_matrix_shapes(sine_zoo, blob_zoo):
    assert task_target_matrix(sine_zoo, "sine-inr", "train").shape == (8, 2)
    assert task_target_matrix(blob_zoo, "acc-pred", "val").shape == (2, 1)
    masks = task_target_matrix(blob_zoo, "prune-mask", "test")
    assert masks.shape == (2, 12) and set(np.unique(masks)) <= {0.0, 1.0}


def test_task_zoo_mismatch_rejected(sine_zoo, blob_zoo):
    with pytest.raises(ValueError):
        task_target_matrix(sine_zoo, "acc-pred", "train")
    with pytest.raises(ValueError):
        task_target_matrix(blob_zoo, "sine-inr", "train")
    with pytest.raises(ValueError):
        task_target_matrix(sine_zoo, "prune-mask", "train")  # no masks
    with pytest.raises(ValueError):
        train_model(sine_zoo, "wskan", "made-up-task", FAST)
    with pytest.raises(ValueError):
        train_model(sine_zoo, "made-up-kind", "sine-inr", FAST)


def test_augmented_kinds_reject_equivariant_task(blob_zoo):
    for kind in ("mlp-aug", "mlp-align"):
        with pytest.raises(ValueError):
            train_model(blob_zoo, kind, "prune-mask", FAST)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_smoke_train_and_roundtrip(sine_zoo, kind):
    model, log = train_model(sine_zoo, kind, "sine-inr", FAST)
    assert len(log) == 2 * FAST.epochs
    for entry in log:
        assert set(entry) == {"epoch", "split", "loss", "metrics", "wall_time"}
        assert np.isfinite(entry["loss"])
    val_mses = [e["metrics"]["mse"] for e in log if e["split"] == "val"]
    assert model.meta["best_val"]["mse"] == pytest.approx(min(val_mses))

    nets = [r.net for r in sine_zoo.records_for("test")]
    preds = predict(model, nets)
    assert preds.shape == (2, 2)
    restored = load_model(save_model(model))
    assert np.array_equal(predict(restored, nets), preds)
    ev = evaluate(model, sine_zoo, "test")
    assert ev["mse"] == pytest.approx(float(np.mean((preds - np.stack(
        [r.target for r in sine_zoo.records_for("test")])) ** 2)))


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_training_deterministic(sine_zoo, kind):
    nets = [r.net for r in sine_zoo.records_for("val")]
    m1, log1 = train_model(sine_zoo, kind, "sine-inr", FAST)
    m2, log2 = train_model(sine_zoo, kind, "sine-inr", FAST)
    assert np.array_equal(predict(m1, nets), predict(m2, nets))
    assert [e["loss"] for e in log1] == [e["loss"] for e in log2]


def test_graph_kinds_predict_invariantly(sine_zoo):
    net = sine_zoo.records[0].net
    rng = np.random.default_rng(33)
    for kind in ("wskan", "deepsets"):
        model, _ = train_model(sine_zoo, kind, "sine-inr", FAST)
        base = predict(model, [net])
        for _ in range(3):
            moved = act(sample_group_element([2, 3, 1], rng), net)
            assert np.allclose(predict(model, [moved]), base, atol=1e-9)


def test_aligned_mlp_prediction_survives_relabeling(sine_zoo):
    model, _ = train_model(sine_zoo, "mlp-align", "sine-inr", FAST)
    assert model.reference is not None
    net = sine_zoo.records_for("train")[0].net
    base = predict(model, [net])
    g = sample_group_element([2, 3, 1], np.random.default_rng(4))
    moved = predict(model, [act(g, net)])
    assert np.allclose(moved, base, atol=1e-7)


def test_mask_model_scores_and_equivariance(blob_zoo):
    model, _ = train_model(blob_zoo, "wskan", "prune-mask", FAST)
    assert model.threshold is not None and 0.0 <= model.threshold <= 1.0
    net = blob_zoo.records[0].net
    scores = predict_mask_scores(model, [net])
    assert scores.shape == (1, 12)
    assert np.all(scores >= 0.0) and np.all(scores <= 1.0)

    g = sample_group_element([2, 3, 2], np.random.default_rng(9))
    eperm = induced_edge_permutation([2, 3, 2], g)
    moved = predict_mask_scores(model, [act(g, net)])
    assert np.allclose(moved[0], scores[0][eperm], atol=1e-9)

    ev = evaluate(model, blob_zoo, "test")
    assert set(ev) == {"roc_auc", "mask_accuracy"}
    assert 0.0 <= ev["roc_auc"] <= 1.0 and 0.0 <= ev["mask_accuracy"] <= 1.0


def test_mask_scores_require_mask_model(sine_zoo):
    model, _ = train_model(sine_zoo, "mlp", "sine-inr", FAST)
    with pytest.raises(ValueError):
        predict_mask_scores(model, [sine_zoo.records[0].net])


def test_flat_checkpoint_keeps_standardization(sine_zoo):
    model, _ = train_model(sine_zoo, "mlp", "sine-inr", FAST)
    blob = save_model(model)
    restored = load_model(blob)
    assert np.array_equal(restored.input_mu, model.input_mu)
    assert np.array_equal(restored.input_sd, model.input_sd)
    assert np.array_equal(restored.target_mu, model.target_mu)
    # corrupting a parameter block name is rejected
    bad = blob.replace(b"target_mu", b"target_xx", 1)
    with pytest.raises(ValueError):
        load_model(bad)
