import numpy as np
import pytest

from phonolid import nn
from phonolid.selftest import layer_gradient_error, numeric_grad, relative_error


@pytest.fixture
def rng():
    return np.random.default_rng(1)


def test_conv_identity_kernel(rng):
    conv = nn.Conv2d(1, 1)
    conv.params["kernel"][:] = 0.0
    conv.params["kernel"][0, 0, 1, 1] = 1.0
    conv.params["bias"][:] = 0.0
    x = rng.normal(size=(1, 1, 5, 7))
    assert np.allclose(conv.forward(x), x)


def test_conv_shape_error(rng):
    conv = nn.Conv2d(3, 4)
    with pytest.raises(ValueError, match="conv2d"):
        conv.forward(rng.normal(size=(1, 2, 5, 5)))


def test_maxpool_block_maxima():
    ramp = np.arange(24, dtype=float).reshape(1, 1, 4, 6)
    out = nn.MaxPool2d((2, 3)).forward(ramp)
    assert out.shape == (1, 1, 2, 2)
    assert np.array_equal(out[0, 0], [[8.0, 11.0], [20.0, 23.0]])


def test_maxpool_floor_division(rng):
    out = nn.MaxPool2d((2, 3)).forward(rng.normal(size=(1, 2, 5, 8)))
    assert out.shape == (1, 2, 2, 2)


def test_bilstm_zero_weights_zero_output(rng):
    lstm = nn.BiLSTM(3, 4)
    for key in lstm.params:
        lstm.params[key][:] = 0.0
    out = lstm.forward(rng.normal(size=(2, 5, 3)))
    assert np.all(out == 0.0)


def test_bilstm_output_concatenates_directions(rng):
    lstm = nn.BiLSTM(3, 4, rng=rng)
    out = lstm.forward(rng.normal(size=(2, 6, 3)))
    assert out.shape == (2, 6, 8)


def test_bilstm_masked_batch_matches_per_sample(rng):
    lstm = nn.BiLSTM(3, 4, rng=rng)
    lengths = np.array([5, 2, 7])
    xs = [rng.normal(size=(n, 3)) for n in lengths]
    padded = np.zeros((3, 7, 3))
    for i, x in enumerate(xs):
        padded[i, : len(x)] = x
    out = lstm.forward(padded, lengths=lengths)
    for i, x in enumerate(xs):
        ref = lstm.forward(x[None])[0]
        assert np.allclose(out[i, : lengths[i]], ref, atol=1e-12)


def test_backward_before_forward_raises():
    with pytest.raises(RuntimeError, match="before forward"):
        nn.Dense(3, 2).backward(np.zeros((1, 2)))


def test_dense_gradient_closed_form(rng):
    dense = nn.Dense(4, 3, rng=rng)
    x = rng.normal(size=(5, 4))
    dense.forward(x)
    dense.zero_grads()
    dy = rng.normal(size=(5, 3))
    dx = dense.backward(dy)
    assert np.allclose(dx, dy @ dense.params["weight"].T)
    assert np.allclose(dense.grads["weight"], x.T @ dy)


def test_dropout_eval_mode_passthrough(rng):
    drop = nn.Dropout(0.5)
    x = rng.normal(size=(3, 4))
    assert np.array_equal(drop.forward(x, train=False), x)
    dy = rng.normal(size=(3, 4))
    assert np.array_equal(drop.backward(dy), dy)


def test_dropout_inverted_scaling(rng):
    drop = nn.Dropout(0.25)
    x = np.ones((2000, 10))
    out = drop.forward(x, train=True, rng=rng)
    kept = out[out != 0]
    assert np.allclose(kept, 1.0 / 0.75)
    assert abs(out.mean() - 1.0) < 0.05


def test_dropout_requires_rng_in_train_mode():
    with pytest.raises(ValueError, match="rng"):
        nn.Dropout(0.5).forward(np.ones((2, 2)), train=True)


def test_softmax_rows_normalized(rng):
    x = rng.normal(size=(20, 7)) * 10
    probs = nn.softmax(x, axis=1)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    assert probs.min() >= 0.0 and probs.max() <= 1.0


def test_weighted_xent_values():
    assert nn.weighted_xent(np.array([0.0, 1.0]), 1, np.array([1.0, 3.0])) == pytest.approx(0.0, abs=1e-9)
    assert nn.weighted_xent(np.array([0.5, 0.5]), 0, np.array([1.0, 1.0])) == pytest.approx(0.6931, abs=1e-4)
    assert nn.weighted_xent(np.array([0.5, 0.5]), 0, np.array([2.5, 1.0])) == pytest.approx(1.7329, abs=1e-4)


def test_weighted_xent_invalid_target():
    with pytest.raises(ValueError):
        nn.weighted_xent(np.array([0.5, 0.5]), 2, np.array([1.0, 1.0]))


def test_weighted_xent_from_logits_matches_probs_form(rng):
    logits = rng.normal(size=5)
    weights = np.array([1.0, 2.0, 0.5, 1.5, 1.0])
    loss, grad = nn.weighted_xent_from_logits(logits, 2, weights)
    probs = nn.softmax(logits)
    assert loss == pytest.approx(nn.weighted_xent(probs, 2, weights, floor=0.0), abs=1e-12)

    def scalar():
        return nn.weighted_xent_from_logits(logits, 2, weights)[0]

    assert relative_error(grad, numeric_grad(scalar, logits)) < 1e-6


def test_adam_first_step_is_lr_times_sign():
    params = {"w": np.array([1.0])}
    opt = nn.Adam(lr=1e-3)
    opt.step(params, {"w": np.array([1.0])})
    assert params["w"][0] == pytest.approx(0.999, abs=1e-6)


def test_adam_zero_grad_keeps_params():
    params = {"w": np.array([5.0, -2.0])}
    opt = nn.Adam()
    opt.step(params, {"w": np.zeros(2)})
    assert np.array_equal(params["w"], [5.0, -2.0])
    assert opt.step_count == 1


def test_adam_deterministic():
    def run():
        params = {"w": np.array([1.0, 2.0])}
        opt = nn.Adam(lr=0.01)
        for i in range(5):
            opt.step(params, {"w": np.array([0.1 * i, -0.2])})
        return params["w"]

    assert np.array_equal(run(), run())


def test_adam_shape_mismatch():
    opt = nn.Adam()
    with pytest.raises(ValueError):
        opt.step({"w": np.zeros(3)}, {"w": np.zeros(4)})


def test_all_layer_gradients_pass_finite_differences():
    results = nn_gradient_summary()
    for name, (count, worst) in results.items():
        assert worst < 1e-4, f"{name}: {worst}"


def nn_gradient_summary():
    from phonolid.selftest import check_layer_gradients

    return check_layer_gradients(seed=123, instances_per_layer=3)


def test_float32_mode_runs_and_keeps_dtype(rng):
    conv = nn.Conv2d(3, 4, rng=rng).astype(np.float32)
    out = conv.forward(rng.normal(size=(1, 3, 6, 6)).astype(np.float32))
    assert out.dtype == np.float32
    lstm = nn.BiLSTM(4, 3, rng=rng).astype(np.float32)
    assert lstm.forward(rng.normal(size=(1, 5, 4))).dtype == np.float32
