import numpy as np
import pytest

from fairmatch.data import Dataset
from fairmatch.model import (
    AdamState,
    ModelParams,
    adam_step,
    backward,
    cross_entropy,
    forward,
    forward_cache,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from fairmatch.trainer import TrainConfig, train
from oracles import backprop_vs_finite_differences


@pytest.mark.parametrize("seed", range(5))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    params = init_params(4, seed=seed)
    params = params.with_flat(rng.normal(0.0, 0.5, params.flat().size))
    X = rng.normal(size=(12, 4))
    s = rng.integers(0, 2, 12)
    w = rng.normal(size=12)
    assert backprop_vs_finite_differences(params, X, s, w) <= 1e-4


def test_backward_without_sensitive_input():
    params = init_params(3, include_sensitive=False, seed=1)
    X = np.random.default_rng(2).normal(size=(8, 3))
    assert backprop_vs_finite_differences(params, X, 0, np.ones(8)) <= 1e-4


def test_architecture():
    params = init_params(5, seed=0)
    assert [w.shape for w in params.weights] == [(6, 6), (6, 6), (6, 1)]
    assert all(np.all(b == 0) for b in params.biases)
    bound = np.sqrt(6 / 6)
    assert all(np.abs(w).max() <= bound for w in params.weights)
    assert params.n_features == 5


def test_zero_weights_score_half():
    params = init_params(3, seed=0)
    params = params.with_flat(np.zeros_like(params.flat()))
    np.testing.assert_array_equal(forward(params, np.ones((4, 3)), [0, 1, 0, 1]), 0.5)


def test_forward_rejects_wrong_width():
    with pytest.raises(ValueError, match="columns"):
        forward(init_params(3, seed=0), np.ones((2, 4)), 0)


def test_sigmoid_is_stable_for_large_logits():
    params = init_params(1, include_sensitive=False, n_hidden=0, seed=0)
    params.weights[0][:] = 1.0
    out = forward(params, np.array([[-1000.0], [1000.0]]), 0)
    assert out[0] == 0.0 and out[1] == 1.0


def test_cross_entropy_values():
    loss, grad = cross_entropy([0.5, 0.9, 0.0], [1, 0, 0])
    np.testing.assert_allclose(loss[:2], [np.log(2), -np.log(0.1)])
    assert loss[2] == pytest.approx(-np.log1p(-1e-7))
    assert grad[0] == pytest.approx(-2.0)
    assert grad[1] == pytest.approx(1 / 0.1)
    # the clamp keeps the loss finite at a confident wrong prediction
    assert np.isfinite(cross_entropy([1.0], [0])[0][0])


def test_adam_first_step_by_hand():
    params = ModelParams([np.array([[1.0]])], [np.array([0.0])], include_sensitive=False)
    state = AdamState.for_params(params, lr=0.1)
    adam_step(params, [(np.array([[2.0]]), np.array([-3.0]))], state)
    # after bias correction the first step is lr * g / (|g| + eps)
    assert params.weights[0][0, 0] == pytest.approx(1.0 - 0.1 * 2 / (2 + 1e-8))
    assert params.biases[0][0] == pytest.approx(0.1 * 3 / (3 + 1e-8))
    state.end_epoch()
    assert state.lr == pytest.approx(0.095)


def test_adam_second_step_by_hand():
    params = ModelParams([np.array([[0.0]])], [np.array([0.0])], include_sensitive=False)
    state = AdamState.for_params(params, lr=1.0)
    g1, g2 = 1.0, 3.0
    adam_step(params, [(np.array([[g1]]), np.array([0.0]))], state)
    adam_step(params, [(np.array([[g2]]), np.array([0.0]))], state)
    m = (0.9 * 0.1 * g1 + 0.1 * g2) / (1 - 0.9 ** 2)
    v = (0.999 * 0.001 * g1 ** 2 + 0.001 * g2 ** 2) / (1 - 0.999 ** 2)
    expected = -1.0 / (1 + 1e-8) - m / (np.sqrt(v) + 1e-8)
    assert params.weights[0][0, 0] == pytest.approx(expected, rel=1e-9)


def test_checkpoint_roundtrip(tmp_path):
    params = init_params(4, seed=3)
    path = tmp_path / "ck.json"
    save_checkpoint(path, params, {"lam": 1.0})
    back = load_checkpoint(path)
    np.testing.assert_array_equal(back.flat(), params.flat())
    X = np.random.default_rng(0).normal(size=(5, 4))
    np.testing.assert_array_equal(back(X, 1), params(X, 1))


def test_checkpoint_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": "other"}')
    with pytest.raises(ValueError, match="not a"):
        load_checkpoint(bad)
    with pytest.raises(ValueError, match="variant"):
        load_checkpoint("uniform-pair:nope")


def test_separable_data_is_learned():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(400, 2))
    y = (X[:, 0] + X[:, 1] > 0).astype(float)
    keep = np.abs(X[:, 0] + X[:, 1]) > 0.1
    data = Dataset(X[keep], y[keep], rng.integers(0, 2, keep.sum()))
    params, hist = train(data, TrainConfig(method="unfair", epochs=200, batch_size=32, lr=1e-2))
    assert hist[-1]["train_acc"] >= 0.99
    assert hist[-1]["loss"] < hist[0]["loss"]


def test_forward_cache_matches_forward():
    params = init_params(3, seed=5)
    X = np.random.default_rng(1).normal(size=(6, 3))
    scores, cache = forward_cache(params, X, 1)
    np.testing.assert_array_equal(scores, forward(params, X, 1))
    assert len(backward(params, cache, np.ones(6))) == 3
