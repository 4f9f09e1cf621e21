import numpy as np
import pytest

from spoofaudit.neural import (Adam, ShapeError, TrainConfig, bce_with_logits, build_network,
                               cnn1_spec, cnn2_spec, dnn_spec, gradient_check, loss_and_gradients,
                               network_forward, network_train, score_utterance, sigmoid)


def small_conv_spec(shape=(1, 12, 10)):
    return {"input_shape": list(shape),
            "layers": [{"type": "conv2d", "filters": 3, "kernel": [3, 3], "stride": 1},
                       {"type": "activation", "fn": "relu"},
                       {"type": "maxpool", "pool": [2, 2]},
                       {"type": "flatten"},
                       {"type": "dense", "units": 4},
                       {"type": "activation", "fn": "sigmoid"},
                       {"type": "dense", "units": 1}]}


def test_sigmoid_and_bce_stable():
    assert sigmoid(np.array([0.0]))[0] == 0.5
    assert np.all(np.isfinite(sigmoid(np.array([-1000.0, 1000.0]))))
    loss, grad = bce_with_logits(np.array([800.0]), np.array([0.0]))
    assert loss == pytest.approx(800.0) and grad[0] == pytest.approx(1.0)


def test_zero_weights_give_one_half():
    net = build_network(dnn_spec(5, (4,), 0.0), seed=0)
    for _, _, p in net.parameters():
        p[...] = 0.0
    x = np.random.default_rng(0).standard_normal((7, 5))
    np.testing.assert_array_equal(network_forward(net, x), 0.5)


def test_single_dense_closed_form():
    net = build_network({"input_shape": [1], "layers": [{"type": "dense", "units": 1}]})
    net.layers[0].params["W"][...] = 1.7
    net.layers[0].params["b"][...] = 0.0
    x = np.array([[0.3], [-2.0]])
    np.testing.assert_allclose(network_forward(net, x), 1 / (1 + np.exp(-1.7 * x[:, 0])))


def test_conv_delta_kernel_shifts_input():
    spec = {"input_shape": [1, 6, 7],
            "layers": [{"type": "conv2d", "filters": 1, "kernel": [3, 3]},
                       {"type": "flatten"}, {"type": "dense", "units": 1}]}
    net = build_network(spec)
    conv = net.layers[0]
    conv.params["W"][...] = 0.0
    conv.params["W"][0, 0, 2, 1] = 1.0  # picks x[i + 2, j + 1]
    conv.params["b"][...] = 0.0
    x = np.random.default_rng(1).standard_normal((2, 1, 6, 7))
    out = conv.forward(x)
    np.testing.assert_array_equal(out[:, 0], x[:, 0, 2:6, 1:6])


def test_shape_errors():
    net = build_network(dnn_spec(4, (3,), 0.0))
    with pytest.raises(ShapeError):
        net.logits(np.zeros((2, 5)))
    with pytest.raises(ShapeError):
        build_network({"input_shape": [4], "layers": [{"type": "dense", "units": 2}]})
    with pytest.raises(ShapeError):
        score_utterance(build_network(small_conv_spec()), "cnn", np.zeros((1, 5, 5)))


# -- gradients ---------------------------------------------------------------------

def test_gradcheck_dense_relu_sigmoid():
    spec = {"input_shape": [4],
            "layers": [{"type": "dense", "units": 5}, {"type": "activation", "fn": "relu"},
                       {"type": "dense", "units": 3}, {"type": "activation", "fn": "sigmoid"},
                       {"type": "dense", "units": 1}]}
    net = build_network(spec, seed=2)
    rng = np.random.default_rng(3)
    assert gradient_check(net, rng.standard_normal((6, 4)), rng.integers(0, 2, 6)) < 1e-4


def test_gradcheck_conv_maxpool():
    net = build_network(small_conv_spec(), seed=4)
    rng = np.random.default_rng(5)
    # continuous random input: pooling ties have probability zero
    assert gradient_check(net, rng.standard_normal((3, 1, 12, 10)), np.array([1, 0, 1])) < 1e-4


def test_gradcheck_strided_conv():
    spec = small_conv_spec((2, 13, 11))
    spec["layers"][0]["stride"] = 2
    net = build_network(spec, seed=6)
    rng = np.random.default_rng(7)
    assert gradient_check(net, rng.standard_normal((2, 2, 13, 11)), np.array([0, 1])) < 1e-4


def test_gradcheck_parameter_free_path():
    # only the output unit has parameters; the rest is fixed plumbing
    spec = {"input_shape": [1, 4, 4],
            "layers": [{"type": "maxpool", "pool": [2, 2]}, {"type": "flatten"},
                       {"type": "dense", "units": 1}]}
    net = build_network(spec)
    rng = np.random.default_rng(8)
    _, grads = loss_and_gradients(net, rng.standard_normal((2, 1, 4, 4)), np.array([1, 0]))
    assert all(np.all(np.isfinite(g)) for g in grads)
    assert gradient_check(net, rng.standard_normal((2, 1, 4, 4)), np.array([1, 0])) < 1e-4


@pytest.mark.parametrize("make", [
    lambda: dnn_spec(60),
    lambda: cnn2_spec((1, 40, 36), width=0.25),
    lambda: cnn1_spec((1, 300, 450), width=0.25),
], ids=["dnn", "cnn2", "cnn1"])
def test_gradcheck_default_architectures(make):
    # default layer stacks at reduced width/input so central differences stay cheap;
    # dropout is inactive in the check (inference mode)
    spec = make()
    net = build_network(spec, seed=9)
    rng = np.random.default_rng(10)
    x = rng.standard_normal((2, *spec["input_shape"]))
    assert gradient_check(net, x, np.array([1, 0]), max_params=300) < 1e-4


def test_one_adam_step_matches_closed_form():
    net = build_network({"input_shape": [3], "layers": [{"type": "dense", "units": 1}]}, seed=11)
    w0 = net.layers[0].params["W"].copy()
    b0 = net.layers[0].params["b"].copy()
    x = np.array([[0.5, -1.0, 2.0], [1.5, 0.2, -0.3]])
    y = np.array([1.0, 0.0])
    cfg = TrainConfig(learning_rate=0.01)
    loss, grads = loss_and_gradients(net, x, y)
    # hand-derived gradient of mean BCE for a single logistic unit
    p = 1 / (1 + np.exp(-(x @ w0[:, 0] + b0[0])))
    gw = x.T @ (p - y) / 2
    gb = np.sum(p - y) / 2
    np.testing.assert_allclose(grads[0][:, 0], gw, atol=1e-12)
    np.testing.assert_allclose(grads[1], [gb], atol=1e-12)
    params = [p_ for _, _, p_ in net.parameters()]
    Adam(params, cfg).step(params, grads)
    # first Adam step moves every coordinate by lr * g / (|g| + eps)
    expect_w = w0[:, 0] - 0.01 * gw / (np.abs(gw) + 1e-8)
    expect_b = b0[0] - 0.01 * gb / (abs(gb) + 1e-8)
    np.testing.assert_allclose(net.layers[0].params["W"][:, 0], expect_w, atol=1e-9)
    np.testing.assert_allclose(net.layers[0].params["b"][0], expect_b, atol=1e-9)


def test_xor_learned():
    rng = np.random.default_rng(12)
    x = rng.uniform(-1, 1, (400, 2))
    y = ((x[:, 0] > 0) ^ (x[:, 1] > 0)).astype(float)
    spec = {"input_shape": [2], "layers": [{"type": "dense", "units": 8},
                                           {"type": "activation", "fn": "relu"},
                                           {"type": "dense", "units": 1}]}
    net = network_train(spec, x, y, TrainConfig(learning_rate=0.02, max_epochs=300, seed=1))
    acc = np.mean((network_forward(net, x) > 0.5) == (y > 0.5))
    assert acc >= 0.95


def test_training_deterministic_and_loss_falls():
    rng = np.random.default_rng(13)
    x = rng.standard_normal((200, 6))
    y = (x[:, 0] + 0.5 * x[:, 1] > 0).astype(float)
    cfg = TrainConfig(max_epochs=5, seed=3)
    a = network_train(dnn_spec(6, (16,), 0.3), x, y, cfg)
    b = network_train(dnn_spec(6, (16,), 0.3), x, y, cfg)
    for (_, _, p), (_, _, q) in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p, q)
    losses = [loss for _, loss, _ in a.log]
    assert losses[-1] < losses[0]  # dropout makes single epochs noisy


def test_train_rejects_single_class():
    with pytest.raises(ValueError):
        network_train(dnn_spec(2, (2,)), np.zeros((4, 2)), np.ones(4))


# -- utterance scoring -------------------------------------------------------------

def test_dnn_score_examples():
    net = build_network(dnn_spec(3, (4,), 0.0))
    for _, _, p in net.parameters():
        p[...] = 0.0
    assert score_utterance(net, "dnn", np.ones((5, 3))) == 0.0
    net = build_network(dnn_spec(3, (4,), 0.0), seed=14)
    frames = np.random.default_rng(15).standard_normal((50, 3))
    s = score_utterance(net, "dnn", frames)
    assert s == score_utterance(net, "dnn", frames[::-1])
    assert s == pytest.approx(float(np.mean(net.logits(frames))), abs=1e-12)
    with pytest.raises(ValueError):
        score_utterance(net, "dnn", np.zeros((0, 3)))


def test_cnn_score_is_forward_probability():
    net = build_network(small_conv_spec(), seed=16)
    x = np.random.default_rng(17).standard_normal((1, 12, 10))
    assert score_utterance(net, "cnn", x) == float(network_forward(net, x[None])[0])


def test_serialisation_round_trip(tmp_path):
    net = build_network(small_conv_spec(), seed=18)
    net.save(tmp_path / "n.json")
    import json
    from spoofaudit.neural import Network
    back = Network.from_dict(json.load(open(tmp_path / "n.json")))
    x = np.random.default_rng(19).standard_normal((2, 1, 12, 10))
    np.testing.assert_array_equal(back.logits(x), net.logits(x))
