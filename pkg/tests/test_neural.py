import numpy as np
import pytest

from footprint.errors import ContractError, DataError, DivergenceError, OptimizationError, ParameterError
from footprint.neural import (
    AdamState, MlpModel, TrainConfig, adam_step, backward, dead_relu_ratio, evaluate_nn, forward,
    init_model, keep_probabilities, loss_mse, lr_schedule, predict_nn, train,
)


def test_init_shapes_seed_and_zero_bias():
    m = init_model([128, 512, 8], seed=3)
    assert [w.shape for w in m.weights] == [(128, 512), (512, 8)]
    assert all(np.all(b == 0) for b in m.biases)
    m2 = init_model([128, 512, 8], seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(m.params(), m2.params()))
    with pytest.raises(ParameterError):
        init_model([4, 0, 2])


def test_hand_forward_2_2_1():
    m = MlpModel((2, 2, 1), [np.array([[1.0, -1.0], [2.0, 1.0]]), np.array([[1.0], [3.0]])],
                 [np.array([0.5, 0.0]), np.array([-1.0])])
    out = predict_nn(m, [[1.0, 1.0], [1.0, -2.0]])
    # row 1: h = relu([3.5, 0]) -> 3.5 - 1; row 2: h = relu([-2.5, -3]) -> 0 - 1
    assert out.tolist() == [[2.5], [-1.0]]


def test_keep_one_train_equals_eval():
    m = init_model([5, 7, 3], seed=1)
    X = np.random.default_rng(0).standard_normal((10, 5))
    tr = forward(m, X, [1.0], np.random.default_rng(0), train=True)
    assert np.array_equal(tr.output, forward(m, X).output)


def test_all_negative_preactivations_give_zero_layer():
    m = init_model([3, 4, 2], seed=0)
    m.biases[0][:] = -1e6
    c = forward(m, np.ones((5, 3)))
    assert np.all(c.hidden[0] == 0)
    assert dead_relu_ratio(c.hidden) == [1.0]
    m.biases[0][:] = 1e6
    assert dead_relu_ratio(forward(m, np.ones((5, 3))).hidden) == [0.0]


def test_forward_errors():
    m = init_model([3, 4, 2])
    with pytest.raises(DataError):
        forward(m, [[np.nan, 0, 0]])
    with pytest.raises(ParameterError):
        forward(m, np.ones((2, 4)))


def test_inverted_dropout_expectation():
    m = init_model([4, 300, 2], seed=2)
    X = np.random.default_rng(1).standard_normal((1, 4))
    rng = np.random.default_rng(3)
    runs = [forward(m, X, [0.5], rng, train=True).output for _ in range(4000)]
    assert np.allclose(np.mean(runs, axis=0), forward(m, X).output, rtol=0.05, atol=0.05)


def test_keep_probability_schemes():
    assert keep_probabilities(3, "a", 0.5) == [0.5, 0.5, 0.5]
    assert keep_probabilities(4, "b") == [1.0, 0.25, 1.0, 0.5]
    with pytest.raises(ParameterError):
        keep_probabilities(2, "c")


def test_loss_examples():
    assert loss_mse([[1.0, 2.0]], [[1.0, 2.0]]) == 0
    assert loss_mse(np.ones((3, 2)) + 1, np.ones((3, 2))) == 1.0
    assert loss_mse([[0.0, 2.0]], [[1.0, 0.0]]) == 2.5
    assert loss_mse([[0.0, 2.0]], [[1.0, np.nan]], [[1, 0]]) == 1.0
    with pytest.raises(DataError):
        loss_mse([[0.0]], [[1.0]], [[0]])


def _numeric_grads(model, X, Y, M, keep, seed, h=1e-5):
    def loss():
        rng = np.random.default_rng(seed)
        return loss_mse(forward(model, X, keep, rng, train=True).output, Y, M)

    out = []
    for p in model.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss()
            p[idx] = old - h
            down = loss()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out.append(g)
    return out


@pytest.mark.parametrize("keep", [[1.0, 1.0], [0.5, 0.8]])
def test_gradient_check(keep):
    rng = np.random.default_rng(11)
    model = init_model([5, 4, 3, 8], seed=4)
    for b in model.biases:
        b[:] = rng.standard_normal(b.shape) * 0.1
    X = rng.standard_normal((6, 5))
    Y = rng.standard_normal((6, 8))
    M = (rng.random((6, 8)) < 0.8).astype(float)
    cache = forward(model, X, keep, np.random.default_rng(99), train=True)
    dW, db = backward(model, cache, Y, M)
    analytic = [g for pair in zip(dW, db) for g in pair]
    numeric = _numeric_grads(model, X, Y, M, keep, 99)
    for a, n in zip(analytic, numeric):
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
        assert rel.max() <= 1e-4


def test_zero_error_zero_grad_and_duplicate_invariance():
    model = init_model([3, 5, 2], seed=0)
    X = np.random.default_rng(0).standard_normal((4, 3))
    c = forward(model, X)
    dW, db = backward(model, c, c.output)
    assert all(np.all(g == 0) for g in dW + db)
    Y = np.random.default_rng(1).standard_normal((4, 2))
    dW1, db1 = backward(model, c, Y)
    c2 = forward(model, np.vstack([X, X]))
    dW2, db2 = backward(model, c2, np.vstack([Y, Y]))
    assert all(np.allclose(a, b, atol=1e-14) for a, b in zip(dW1 + db1, dW2 + db2))


def test_backward_cache_mismatch():
    model = init_model([3, 5, 2])
    c = forward(model, np.ones((4, 3)))
    with pytest.raises(ContractError):
        backward(model, c, np.ones((3, 2)))


def test_adam_first_step_closed_form():
    p = [np.array([0.0])]
    st = AdamState.zeros_like(p)
    adam_step(p, [np.array([4.0])], st, t=1, lr=0.1)
    assert st.m[0][0] == pytest.approx(0.4, abs=1e-15) and st.v[0][0] == pytest.approx(0.016, abs=1e-15)
    assert abs(p[0][0] - (-0.1 * 4 / (4 + 1e-8))) <= 1e-9


def test_adam_scale_invariant_first_step_and_zero_grad():
    p = [np.zeros(2), np.zeros(2)]
    g = np.array([0.3, -2.0])
    adam_step(p, [g, 100 * g], AdamState.zeros_like(p), 1, 1e-3)
    assert np.allclose(np.abs(p[0]), np.abs(p[1]), atol=1e-12)
    q = [np.array([1.5])]
    adam_step(q, [np.zeros(1)], AdamState.zeros_like(q), 1, 1e-3)
    assert q[0][0] == 1.5


def test_adam_non_finite():
    p = [np.zeros(2), np.zeros(1)]
    with pytest.raises(OptimizationError, match="layer 0"):
        adam_step(p, [np.zeros(2), np.array([np.inf])], AdamState.zeros_like(p), 1, 1e-3)


def test_lr_schedule_values():
    assert lr_schedule(1e-4, 0) == 1e-4
    assert abs(lr_schedule(1e-4, 10000) - 9.6e-5) <= 1e-12
    assert abs(lr_schedule(1e-4, 20000) - 1e-4 * 0.9216) <= 1e-12


def test_train_requires_hidden_layer():
    with pytest.raises(ParameterError, match="hidden"):
        train(np.zeros((10, 3)), np.zeros((10, 8)), [3, 8])


def linear_data(n=2000, k=50, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, k))
    Y = X @ rng.standard_normal((k, 8)) / np.sqrt(k) + 0.05 * rng.standard_normal((n, 8))
    return X, Y


def test_train_converges_on_realizable_signal():
    X, Y = linear_data()
    cfg = TrainConfig(gamma0=1e-3, max_iterations=2000, keep_prob=1.0, log_every=500)
    res = train(X, Y, [50, 512, 8], cfg, binary_columns=())
    tr = res.trace
    assert tr.rows[0].train_loss >= 10 * tr.final.train_loss
    assert [r.iteration for r in tr.rows] == [0, 500, 1000, 1500, 2000]
    assert all(0.0 < d < 1.0 for d in tr.final.dead_relu)
    assert min(s.value for s in evaluate_nn(res.model, X[res.test_idx], Y[res.test_idx],
                                             trait_names=[f"t{i}" for i in range(8)])) > 0.95


def test_train_deterministic_and_split():
    X, Y = linear_data(n=400)
    cfg = TrainConfig(max_iterations=50, log_every=10)
    a = train(X, Y, [50, 16, 8], cfg, binary_columns=())
    b = train(X, Y, [50, 16, 8], cfg, binary_columns=())
    assert a.trace.rows == b.trace.rows
    assert (len(a.train_idx), len(a.val_idx), len(a.test_idx)) == (320, 40, 40)
    assert not set(a.train_idx) & set(a.val_idx)


def test_train_divergence_raises_with_trace():
    X, Y = linear_data(n=400)
    X = X * 1e150
    with pytest.raises(OptimizationError):
        train(X, Y, [50, 16, 8], TrainConfig(max_iterations=20, log_every=1, standardize_inputs=False),
              binary_columns=())
    with pytest.raises(DivergenceError) as info:
        train(X * 1e10, Y, [50, 16, 8], TrainConfig(max_iterations=20, log_every=1, standardize_inputs=False),
              binary_columns=())
    assert info.value.trace is not None and len(info.value.trace.rows) >= 1


def test_model_save_load(tmp_path):
    m = init_model([4, 6, 8], seed=1)
    m.input_mean, m.input_scale = np.ones(4), 2 * np.ones(4)
    m.save(tmp_path / "m.npz")
    m2 = MlpModel.load(tmp_path / "m.npz")
    X = np.random.default_rng(0).standard_normal((3, 4))
    assert np.array_equal(predict_nn(m, X), predict_nn(m2, X))


def test_perfect_outputs_score_one():
    rng = np.random.default_rng(0)
    m = init_model([3, 4, 8], seed=0)
    X = rng.standard_normal((40, 3))
    Y = predict_nn(m, X).copy()
    Y[:, 0] = Y[:, 0] > np.median(Y[:, 0])
    Y[:, 2] = Y[:, 2] > np.median(Y[:, 2])
    assert all(s.value == pytest.approx(1.0) for s in evaluate_nn(m, X, Y))
