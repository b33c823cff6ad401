from dataclasses import replace

import numpy as np
import pytest

from timediscount import baselines, model, tdconv
from timediscount.model import Model, ModelConfig, build_model
from timediscount.optim import AdamState, adam_step, grad_check


def test_zero_network_outputs_bias():
    for task in ("autoreg", "classify"):
        m = build_model(ModelConfig(task=task, D=2, history=8), 0)
        for p in m.params.values():
            p[...] = 0.0
        m.b_f[...] = [0.3, -0.2]
        out = m.predict(np.random.default_rng(0).normal(size=(2, 8)))
        expected = [0.3, -0.2] if task == "autoreg" else model.softmax(np.array([0.3, -0.2]))
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)


def test_softmax_properties():
    np.testing.assert_array_equal(model.softmax(np.zeros(2)), [0.5, 0.5])
    rng = np.random.default_rng(1)
    f = rng.normal(0, 20, size=(50, 5))
    p = model.softmax(f)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    perm = rng.permutation(5)
    np.testing.assert_allclose(model.softmax(f[:, perm]), p[:, perm], rtol=1e-14, atol=1e-15)


def test_hand_composed_pipeline():
    cfg = ModelConfig(D=1, K=2, history=4, pool1_l0=2, pool1_l=1, pool2_l0=2, pool2_l=1)
    params = tdconv.TdConvParams(np.array([[1.0]]), [np.array([[1.0], [0.0]])], np.zeros(2), 0.5, 0.5, (1, 1))
    m = Model(cfg, tdconv.TdConvLayer(params), np.array([[[1.0], [2.0]]]), np.array([0.1]))
    X = np.array([[0.0, 0.0, 1.0, 0.0]])  # spike at lag 3 -> pooled [0, 1]
    tr = m.forward(X)
    np.testing.assert_array_equal(tr.pooled_in.values, [[[0.0, 1.0]]])
    np.testing.assert_array_equal(tr.g, [[[0.25, 0.25], [0.0, 0.25]]])
    np.testing.assert_array_equal(tr.z, [[[0.25], [0.25]]])
    assert m.predict(X)[0] == pytest.approx(0.85, abs=1e-15)


def test_losses():
    assert model.loss_autoreg([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert model.loss_autoreg([1.0, -1.0], [0.0, 0.0]) == 2.0
    assert model.loss_autoreg([3.0], [0.0]) == 9.0
    assert model.loss_classify([1.0, 0.0], [1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert model.loss_classify([0.0, 1.0], [0.5, 0.5]) == pytest.approx(np.log(2), abs=1e-15)
    assert model.loss_classify([1.0, 0.0], [0.0, 1.0]) == pytest.approx(-np.log(1e-12))
    with pytest.raises(ValueError):
        model.loss_classify([0.5, 0.5], [0.5, 0.5])
    with pytest.raises(ValueError):
        model.loss_autoreg([1.0], [1.0, 2.0])


def test_softmax_cross_entropy_gradient():
    _, d = model.output_loss("classify", np.zeros((1, 2)), np.array([[1.0, 0.0]]))
    np.testing.assert_array_equal(d, [[-0.5, 0.5]])


def test_l1_penalty_on_hidden_units():
    cfg = ModelConfig(D=1, K=2, history=4, pool2_l0=4, l1=0.1)
    m = build_model(cfg, 0)
    X, Y = np.zeros((1, 1, 4)), np.zeros((1, 1))
    tr = replace(m.forward(X), z=np.array([[[1.0], [-2.0]]]))
    plain = model.loss_autoreg(Y, tr.f).mean()
    assert m.objective(X, Y, tr) - plain == pytest.approx(0.3, abs=1e-15)
    m.config.l1 = 0.2
    assert m.objective(X, Y, tr) - plain == pytest.approx(0.6, abs=1e-15)
    m.config.l1 = 0.0
    assert m.objective(X, Y, tr) == plain


def test_zero_upstream_gives_zero_gradient():
    m = build_model(ModelConfig(D=2, history=10), 3)
    X = np.random.default_rng(3).normal(size=(4, 2, 10))
    _, grads = m.loss_and_grad(X, m.predict(X))
    assert all(not np.any(g) for g in grads.values())


def test_full_model_gradient_small_instance():
    rng = np.random.default_rng(4)
    cfg = ModelConfig(D=2, K=2, history=16, pool1_l0=2, pool1_l=1.2, pool2_l0=2, pool2_l=1.1, l1=0.01)
    m = build_model(cfg, rng)
    for p in m.params.values():
        p += rng.normal(0, 0.3, p.shape)
    X = rng.normal(size=(3, 2, 16))
    rep = grad_check(m, X, rng.normal(size=(3, 2)))
    assert rep.passed, str(rep)


def test_dybm_pipeline_reduction():
    rng = np.random.default_rng(5)
    D, T, K = 3, 12, 4
    cfg = ModelConfig(task="classify", D=D, K=K, lam=0.8, mu=0.8, history=T, patch_lengths=(0,))
    td = build_model(cfg, rng)
    p = td.layer.p
    p.U += rng.normal(size=p.U.shape)
    p.b += rng.normal(size=K)
    U = np.vstack([p.U] + [v[:1] for v in p.V])
    dy = build_model(replace(cfg, kind="dybm"), rng)
    dy.layer.p = baselines.DybmParams(U, p.lam, p.b.copy())
    dy.W_f[...] = td.W_f
    dy.b_f[...] = td.b_f
    X = rng.normal(size=(6, D, T))
    np.testing.assert_allclose(td.forward(X).f, dy.forward(X).f, rtol=0, atol=1e-12)


def test_objective_trends_down_under_adam():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(64, 2, 12))
    Y = X[:, :, 0] * 0.8 + 0.1
    m = build_model(ModelConfig(D=2, history=12, K=4), 6)
    state = AdamState.zeros_like(m.params, alpha=1e-2)
    objs = []
    for it in range(50):
        idx = np.arange(it * 16, it * 16 + 16) % 64
        obj, g = m.loss_and_grad(X[idx], Y[idx])
        objs.append(obj)
        adam_step(m.params, g, state)
    assert np.mean(objs[-10:]) < 0.7 * np.mean(objs[:10])


def test_loss_invariant_to_batch_order():
    rng = np.random.default_rng(7)
    m = build_model(ModelConfig(task="classify", D=2, history=10, l1=0.05), 7)
    X = rng.normal(size=(9, 2, 10))
    y = rng.integers(0, 2, 9)
    perm = rng.permutation(9)
    assert m.objective(X, y) == pytest.approx(m.objective(X[perm], y[perm]), rel=1e-14)


def test_input_validation():
    m = build_model(ModelConfig(D=2, history=10), 0)
    with pytest.raises(ValueError):
        m.forward(np.zeros((1, 3, 10)))
    with pytest.raises(ValueError):
        m.forward(np.zeros((1, 2, 12)))  # history mismatch without a final infinite window
    with pytest.raises(ValueError):
        ModelConfig(K=1)
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"kind": "tdconv", "depth": 3})


def test_final_infinite_window_accepts_longer_histories():
    m = build_model(ModelConfig(D=1, history=20, final_infinite=True, pool1_l0=2, pool1_l=1.5), 0)
    X = np.random.default_rng(8).normal(size=(2, 1, 50))
    assert m.predict(X).shape == (2, 1)
    assert m.plans(50)[0].n_windows == m.plans(20)[0].n_windows


def test_missing_cells_are_resolved_by_first_pool():
    cfg = ModelConfig(D=2, history=8, pool1_l0=2)
    m = build_model(cfg, 0)
    X = np.random.default_rng(9).normal(size=(1, 2, 8))
    X[0, 0, :4] = cfg.sentinel
    tr = m.forward(X)
    assert not np.any(tr.pooled_in.values == cfg.sentinel)
    assert tr.pooled_in.empty[0, 0, :2].all()
