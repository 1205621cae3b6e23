import io
import math

import numpy as np
import pytest

from lshnet.data import synth_clustered
from lshnet.errors import DataError
from lshnet.layers import DENSE_INFER, RELU, SOFTMAX, SPARSE_INFER
from lshnet.model import Model
from lshnet.training import (
    SparseAdamState,
    TrainConfig,
    Trainer,
    evaluate,
    lazy_adam_update,
    predict,
    train,
)
from lshnet.vectors import SparseVector, sparsify


def hand_model():
    model = Model.create([2, 3], [1.0], [RELU], seed=0)
    model.layers[0].weights[:] = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    model.layers[0].biases[:] = 0.0
    return model


# -- lazy Adam --------------------------------------------------------------


def test_adam_first_touch_closed_form():
    model = Model.create([4, 6], [1.0], [SOFTMAX], seed=1)
    layer = model.layers[0]
    w0 = layer.weights[2].copy()
    state = SparseAdamState(model, lr=0.01)
    g = np.arange(1.0, 5.0)
    lazy_adam_update(state, model, 0, row=2, grad_w_row=g, grad_b=0.5, t=1)
    st = state.layers[0]
    assert np.allclose(st.m_w[2], 0.1 * g)
    assert np.allclose(st.v_w[2], 0.001 * g**2)
    # bias-corrected first step: m_hat = g, v_hat = g^2
    expected = w0 - 0.01 * g / (np.abs(g) + 1e-8)
    assert np.allclose(layer.weights[2], expected)
    assert st.last_step[2] == 1


def test_adam_zero_grad_moves_by_momentum():
    model = Model.create([4, 6], [1.0], [SOFTMAX], seed=2)
    layer = model.layers[0]
    state = SparseAdamState(model, lr=0.01)
    g = np.ones(4)
    lazy_adam_update(state, model, 0, row=1, grad_w_row=g, grad_b=1.0, t=1)
    w_after_1 = layer.weights[1].copy()
    lazy_adam_update(state, model, 0, row=1, grad_w_row=np.zeros(4), grad_b=0.0, t=2)
    st = state.layers[0]
    assert np.allclose(st.m_w[1], 0.9 * 0.1 * g)  # decayed, no new signal
    assert not np.allclose(layer.weights[1], w_after_1)  # momentum still moves it


def test_adam_untouched_rows_not_decayed():
    model = Model.create([4, 6], [1.0], [SOFTMAX], seed=3)
    state = SparseAdamState(model, lr=0.01)
    lazy_adam_update(state, model, 0, row=0, grad_w_row=np.ones(4), grad_b=1.0, t=1)
    m_before = state.layers[0].m_w[0].copy()
    lazy_adam_update(state, model, 0, row=3, grad_w_row=np.ones(4), grad_b=1.0, t=5)
    assert np.array_equal(state.layers[0].m_w[0], m_before)  # pure-lazy: no catch-up
    assert state.layers[0].last_step[0] == 1
    assert state.layers[0].last_step[3] == 5


def reference_adam(w0, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook Adam oracle over a fixed gradient sequence."""
    w = w0.copy()
    m = np.zeros_like(w0)
    v = np.zeros_like(w0)
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g**2
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        w = w - lr * m_hat / (np.sqrt(v_hat) + eps)
    return w


def test_lazy_adam_equals_textbook_when_all_rows_touched():
    rng = np.random.default_rng(4)
    model = Model.create([4, 6], [1.0], [SOFTMAX], seed=5)
    layer = model.layers[0]
    w0 = layer.weights.copy()
    state = SparseAdamState(model, lr=0.003)
    grads = [rng.standard_normal((6, 4)) for _ in range(100)]
    rows = np.arange(6)
    for t, g in enumerate(grads, start=1):
        state.t = t
        state.update_rows(model, 0, rows, g, np.zeros(6))
    expected = reference_adam(w0, grads, lr=0.003)
    assert np.max(np.abs(layer.weights - expected)) < 1e-10


# -- training loop ----------------------------------------------------------


def toy_dataset(num_classes=8, seed=0):
    return synth_clustered(num_classes, 4, 16, 0.05, seed=seed)


def test_dense_toy_loss_decreases():
    ds = toy_dataset()
    model = Model.create([16, 8], [1.0], [SOFTMAX], seed=6)
    cfg = TrainConfig(batch_size=len(ds), epochs=50, lr=0.01, seed=0)
    report = train(model, ds, cfg)
    losses = [e.loss for e in report.epochs]
    assert all(b < a for a, b in zip(losses, losses[1:]))
    assert losses[-1] < 0.5 * losses[0]


def test_label_out_of_range_rejected_before_training():
    ds = toy_dataset()
    ds.examples[3].labels[0] = 99
    model = Model.create([16, 8], [1.0], [SOFTMAX], seed=7)
    w_before = model.layers[0].weights.copy()
    with pytest.raises(DataError):
        train(model, ds, TrainConfig(epochs=1))
    assert np.array_equal(model.layers[0].weights, w_before)


def model_bytes(model):
    buf = io.BytesIO()
    model.save(buf)
    return buf.getvalue()


def sparse_toy(seed=8, num_classes=400):
    ds = synth_clustered(num_classes, 3, 32, 0.1, seed=seed)
    model = Model.create([32, num_classes], [0.05], [SOFTMAX], seed=seed)
    return ds, model


def test_deterministic_runs_bit_identical():
    cfg = TrainConfig(batch_size=32, epochs=2, lr=0.01, seed=9,
                      deterministic=True, rebuild_interval=5, aln_enabled=True)
    outs = []
    for _ in range(2):
        ds, model = sparse_toy()
        train(model, ds, cfg)
        outs.append(model_bytes(model))
    assert outs[0] == outs[1]


def test_worker_count_does_not_change_deterministic_result():
    base = None
    for workers in (1, 3):
        cfg = TrainConfig(batch_size=32, epochs=1, lr=0.01, seed=10,
                          deterministic=True, workers=workers)
        ds, model = sparse_toy()
        train(model, ds, cfg)
        if base is None:
            base = model_bytes(model)
        else:
            assert model_bytes(model) == base


def test_update_locality():
    ds, model = sparse_toy(seed=11)
    batch = ds.examples[:16]
    active_union = set()
    for ex in batch:
        res = model.forward(ex.features, "train", ex.labels)
        active_union.update(res[-1].active.ids.tolist())
    w_before = model.layers[0].weights.copy()
    b_before = model.layers[0].biases.copy()
    ds.examples = batch
    ds.num_points = len(batch)
    cfg = TrainConfig(batch_size=16, epochs=1, lr=0.01, seed=12,
                      rebuild_interval=1000)
    train(model, ds, cfg)
    untouched = np.array([i for i in range(model.output_dim) if i not in active_union])
    assert np.array_equal(model.layers[0].weights[untouched], w_before[untouched])
    assert np.array_equal(model.layers[0].biases[untouched], b_before[untouched])
    touched = sorted(active_union)
    assert not np.array_equal(model.layers[0].weights[touched], w_before[touched])


def test_dense_trainer_matches_reference_trajectory():
    ds = toy_dataset(num_classes=6, seed=13)
    model = Model.create([16, 6], [1.0], [SOFTMAX], seed=14)
    w0 = model.layers[0].weights.copy()
    b0 = model.layers[0].biases.copy()
    steps = 20
    cfg = TrainConfig(batch_size=len(ds), epochs=steps, lr=0.005, seed=15)
    train(model, ds, cfg)

    # independent dense reference: vectorized full-batch softmax-CE + textbook Adam
    w = w0.copy()
    b = b0.copy()
    mw = np.zeros_like(w)
    vw = np.zeros_like(w)
    mb = np.zeros_like(b)
    vb = np.zeros_like(b)
    X = np.stack([np.asarray([0.0] * 16) + _dense(ex.features) for ex in ds.examples])
    Y = np.array([ex.labels[0] for ex in ds.examples])
    lr, b1, b2, eps = 0.005, 0.9, 0.999, 1e-8
    for t in range(1, steps + 1):
        Z = X @ w.T + b
        Z -= Z.max(axis=1, keepdims=True)
        P = np.exp(Z)
        P /= P.sum(axis=1, keepdims=True)
        D = P.copy()
        D[np.arange(len(Y)), Y] -= 1.0
        gw = D.T @ X / len(Y)
        gb = D.mean(axis=0)
        mw = b1 * mw + (1 - b1) * gw
        vw = b2 * vw + (1 - b2) * gw**2
        mb = b1 * mb + (1 - b1) * gb
        vb = b2 * vb + (1 - b2) * gb**2
        w -= lr * (mw / (1 - b1**t)) / (np.sqrt(vw / (1 - b2**t)) + eps)
        b -= lr * (mb / (1 - b1**t)) / (np.sqrt(vb / (1 - b2**t)) + eps)
    assert np.max(np.abs(model.layers[0].weights - w)) < 1e-8
    assert np.max(np.abs(model.layers[0].biases - b)) < 1e-8


def _dense(v):
    out = np.zeros(v.dim)
    out[v.indices] = v.values
    return out


def test_aln_flush_respects_cap():
    ds, model = sparse_toy(seed=16)
    cfg = TrainConfig(batch_size=32, epochs=1, lr=0.01, seed=17,
                      aln_enabled=True, rebuild_interval=10**6)
    train(model, ds, cfg)
    layer = model.layers[-1]
    cap = layer.plan.bucket_cap
    for table in layer.index.tables:
        assert all(len(b) <= cap for b in table.buckets)


# -- predict / evaluate -----------------------------------------------------


def test_dense_predict_ranking():
    model = hand_model()
    ranked = predict(model, sparsify([2.0, -1.0]), TrainConfig(), DENSE_INFER)
    assert ranked.tolist() == [0, 2, 1]  # activations 2, 0, 1; tie none


def test_full_inference_sparsity_matches_dense():
    ds, model = sparse_toy(seed=18)
    cfg = TrainConfig(inference_sparsity=1.0)
    for ex in ds.examples[:10]:
        sparse = predict(model, ex.features, cfg, SPARSE_INFER)
        dense = predict(model, ex.features, cfg, DENSE_INFER)
        assert sparse.tolist() == dense.tolist()


def test_evaluate_trivial_precision():
    model = hand_model()
    from lshnet.data import Example, XcDataset
    x = sparsify([2.0, -1.0])
    ds_hit = XcDataset(1, 2, 3, [Example([0], x)])
    ds_miss = XcDataset(1, 2, 3, [Example([1], x)])
    cfg = TrainConfig()
    p_hit, _ = evaluate(model, ds_hit, 1, cfg, DENSE_INFER)
    p_miss, _ = evaluate(model, ds_miss, 1, cfg, DENSE_INFER)
    assert p_hit == 1.0
    assert p_miss == 0.0


def test_report_records_complete():
    ds = toy_dataset()
    model = Model.create([16, 8], [1.0], [SOFTMAX], seed=19)
    cfg = TrainConfig(batch_size=8, epochs=3, lr=0.01, seed=20)
    report = train(model, ds, cfg)
    batches_per_epoch = math.ceil(len(ds) / 8)
    assert len(report.records) == 3 * batches_per_epoch
    assert len(report.epochs) == 3
    assert [e.epoch for e in report.epochs] == [1, 2, 3]
    line = report.records[0].line()
    for key in ("epoch=", "batch=", "loss=", "p_at_1=", "seconds="):
        assert key in line
