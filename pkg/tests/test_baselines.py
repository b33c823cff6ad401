import numpy as np
import pytest

from timediscount import baselines, cli, datasets, synth
from timediscount.model import ModelConfig


def test_var_examples():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5, 3, 4))
    V = np.zeros((1, 3, 3))
    V[0] = np.eye(3)
    np.testing.assert_array_equal(baselines.var_predict(X, baselines.VarParams(V, np.zeros(3))), X[:, :, 0])
    b = np.array([0.5, -1.0, 2.0])
    np.testing.assert_array_equal(baselines.var_predict(X, baselines.VarParams(np.zeros((4, 3, 3)), b)),
                                  np.broadcast_to(-b, (5, 3)))
    with pytest.raises(ValueError):
        baselines.var_predict(X, baselines.VarParams(np.zeros((5, 3, 3)), b))


def test_var_matches_summation():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(4, 2, 6))
    p = baselines.VarParams(rng.normal(size=(5, 2, 3)), rng.normal(size=3))
    want = np.zeros((4, 3))
    for n in range(4):
        for j in range(3):
            want[n, j] = sum(X[n, i, tau - 1] * p.V[tau - 1, i, j] for i in range(2) for tau in range(1, 6)) - p.b[j]
    np.testing.assert_allclose(baselines.var_predict(X, p), want, rtol=1e-13, atol=1e-13)


def test_dybm_examples():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(2, 7))
    p = baselines.DybmParams(rng.normal(size=(3, 2)), 0.0, np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(baselines.dybm_predict(X, p), -p.b[:, None] * np.ones((1, 7)))
    p.lam = 0.7
    want = np.array([[sum(X[i, d - 1] * 0.7**d * p.U[k, i] for i in range(2)) - p.b[k]
                      for d in range(1, 8)] for k in range(3)])
    np.testing.assert_allclose(baselines.dybm_predict(X, p), want, rtol=1e-13, atol=1e-14)
    with pytest.raises(ValueError):
        baselines.DybmParams(p.U, 1.0, p.b)


def test_cnn_examples():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(1, 6))
    p = baselines.ConvParams([np.array([[1.0]])], np.array([0.4]))
    np.testing.assert_array_equal(baselines.cnn_forward(X, p), X - 0.4)
    W = [rng.normal(size=(3, 1)), rng.normal(size=(1, 1))]
    p = baselines.ConvParams(W, np.zeros(2))
    want = np.array([[sum(W[k][tau, 0] * X[0, d + tau] for tau in range(W[k].shape[0]) if d + tau < 6)
                      for d in range(6)] for k in range(2)])
    np.testing.assert_allclose(baselines.cnn_forward(X, p), want, rtol=1e-13, atol=1e-14)


def test_ols_recovers_noiseless_var1():
    A = np.array([[0.5, 0.2], [-0.1, 0.7]])
    c = np.array([0.3, -0.2])
    rng = np.random.default_rng(4)
    X, Y = rng.normal(size=(40, 2, 1)), None
    Y = X[:, :, 0] @ A.T + c
    p = baselines.var_fit_ols(X, Y, 1)
    np.testing.assert_allclose(p.V[0].T, A, atol=1e-8)
    np.testing.assert_allclose(-p.b, c, atol=1e-8)


def test_ols_constant_series_and_single_sample():
    X = np.full((10, 1, 3), 2.0)
    p = baselines.var_fit_ols(X, np.full((10, 1), 2.0), 3)
    np.testing.assert_allclose(baselines.var_predict(X, p), 2.0, atol=1e-6)
    p = baselines.var_fit_ols(np.array([[[1.5]]]), np.array([[4.0]]), 1)
    assert baselines.var_predict(np.array([[[1.5]]]), p)[0, 0] == pytest.approx(4.0, abs=1e-6)


def test_var_from_patches_matches_summed_maps():
    from timediscount import tdconv

    rng = np.random.default_rng(5)
    D, T = 2, 5
    V = [rng.normal(size=(T + 1, D)), rng.normal(size=(2, D))]
    b = rng.normal(size=2)
    p = tdconv.UnitDecayParams(np.zeros((0, D)), V, b, 0.0, 1.0, (T, 1), strict_proportion=False)
    X = rng.normal(size=(3, D, T))
    np.testing.assert_allclose(tdconv.forward(X, p).sum(-1),
                               baselines.var_predict(X, baselines.var_from_patches(V, b, T)), atol=1e-12)


def test_sgd_var_approaches_ols_on_noiseless_data():
    th = 0.1
    A = 0.995 * np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    x, rows = np.array([1.0, 0.0]), []
    for _ in range(600):
        rows.append(x)
        x = A @ x
    split = datasets.SeriesData(np.array(rows).T, ("a", "b")).split(0.67, 5, "minmax")
    mcfg = ModelConfig(kind="var", task="autoreg", D=2, history=5, var_lag=1)
    sgd = cli.fit_one(mcfg, cli.RunConfig(iterations=5000, eval_every=5000, shuffle=True), split, 0)
    ols = cli.fit_one(mcfg, cli.RunConfig(var_solver="ols"), split, 0)
    spread = split.test[1].std()
    assert abs(sgd.log.final - ols.log.final) <= 0.02 * spread


def test_var_model_persistence_with_sgd():
    rng = np.random.default_rng(6)
    levels = rng.uniform(-1, 1, (200, 1))
    X = np.repeat(levels[:, :, None], 3, axis=2)
    split = datasets.Split((X[:150], levels[:150]), (X[150:], levels[150:]), None)
    mcfg = ModelConfig(kind="var", task="autoreg", D=1, history=3, var_lag=1)
    res = cli.fit_one(mcfg, cli.RunConfig(iterations=3000, eval_every=3000, shuffle=True), split, 0)
    assert res.log.final < 1e-3


def test_var_series_generator_is_stable_and_seeded():
    s1, A = synth.var_series(50, 3, seed=1)
    s2, _ = synth.var_series(50, 3, seed=1)
    assert s1.tobytes() == s2.tobytes()
    assert np.max(np.abs(np.linalg.eigvals(A))) < 1
