import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adafnn.micronet import (
    Adam,
    DecayingSGD,
    GradientTape,
    LayerSpec,
    MicroNet,
    NonFiniteError,
    TapeReuseError,
    adam_step,
    load_json,
    make_rng,
    mlp_layers,
    save_json,
    sgd_step,
    weight_norm_penalty,
)
from adafnn.model import default_basis_layers, head_layers
from oracles import forward_reference, micronet_fd_error


def set_params(net, **values):
    for k, v in values.items():
        net.params[k] = np.array(v, dtype=np.float64)


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec(0)
    with pytest.raises(ValueError):
        LayerSpec(3, activation="gelu")
    with pytest.raises(ValueError):
        LayerSpec(3, dropout_rate=1.0)
    with pytest.raises(ValueError):
        LayerSpec(3, normalization="batch-norm")
    with pytest.raises(ValueError):
        MicroNet(2, [LayerSpec(3, skip=True)])


def test_identity_layer():
    net = MicroNet(3, [LayerSpec(3, activation="identity")])
    set_params(net, W0=np.eye(3), b0=np.zeros(3))
    v = np.array([0.5, -2.0, 7.0])
    np.testing.assert_array_equal(net.forward(v), v)


def test_relu_layer():
    net = MicroNet(1, [LayerSpec(1, activation="relu")])
    set_params(net, W0=[[-1.0]], b0=[0.0])
    np.testing.assert_array_equal(net.forward(np.array([2.0])), [0.0])


@pytest.mark.parametrize("layers", [
    [LayerSpec(4, "tanh"), LayerSpec(1, "identity")],
    default_basis_layers(),
    [LayerSpec(5, "sigmoid", "layer-norm"), LayerSpec(5, "tanh", skip=True), LayerSpec(2, "identity")],
])
def test_forward_matches_reference(layers):
    net = MicroNet(1, layers, seed=3)
    x = np.array([[0.3], [-0.7], [1.2]])
    np.testing.assert_allclose(net.forward(x), forward_reference(net.params, layers, x), rtol=1e-12, atol=1e-12)


def test_linear_backward():
    net = MicroNet(1, [LayerSpec(1, activation="identity")])
    set_params(net, W0=[[0.7]], b0=[0.0])
    tape = GradientTape()
    net.forward(np.array([2.0]), tape=tape)
    grads, gin = net.backward(tape, np.array([1.0]))
    assert grads["W0"][0, 0] == 2.0
    assert gin[0] == pytest.approx(0.7)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("preset", ["basis", "head", "tanh-ln"])
def test_gradients_match_finite_differences(seed, preset):
    if preset == "basis":
        net, x = MicroNet(1, default_basis_layers(), seed=seed), make_rng(seed).uniform(0, 1, (5, 1))
    elif preset == "head":
        net, x = MicroNet(3, head_layers("large"), seed=seed), make_rng(seed).normal(size=(4, 3))
    else:
        layers = [LayerSpec(6, "tanh", "layer-norm"), LayerSpec(6, "sigmoid", skip=True), LayerSpec(2, "identity")]
        net, x = MicroNet(2, layers, seed=seed), make_rng(seed).normal(size=(4, 2))
    proj = make_rng(seed + 50).normal(size=(x.shape[0], net.output_dim))
    err, where = micronet_fd_error(net, x, proj, seed=seed)
    assert err < 1e-4, where


def test_dropout_eval_mode_matches_dropout_free():
    with_do = [LayerSpec(8, "tanh", dropout_rate=0.5), LayerSpec(1, "identity")]
    without = [LayerSpec(8, "tanh"), LayerSpec(1, "identity")]
    a, b = MicroNet(2, with_do, seed=1).eval(), MicroNet(2, without, seed=1)
    x = make_rng(0).normal(size=(3, 2))
    grads = []
    for net in (a, b):
        tape = GradientTape()
        net.forward(x, tape=tape)
        grads.append(net.backward(tape, np.ones((3, 1)))[0])
    for k in grads[0]:
        np.testing.assert_array_equal(grads[0][k], grads[1][k])


def test_dropout_train_mode_gradient():
    net = MicroNet(2, [LayerSpec(16, "tanh", dropout_rate=0.3), LayerSpec(1, "identity")], seed=4).train()
    x = make_rng(2).normal(size=(4, 2))
    tape = GradientTape()
    out = net.forward(x, tape=tape, rng=make_rng(9))
    grads, _ = net.backward(tape, np.ones_like(out))
    twin = copy.deepcopy(net)
    h = 1e-6
    for idx in [(0, 0), (5, 1), (11, 0)]:
        twin.params["W0"][idx] += h
        up = twin.forward(x, rng=make_rng(9)).sum()
        twin.params["W0"][idx] -= 2 * h
        dn = twin.forward(x, rng=make_rng(9)).sum()
        twin.params["W0"][idx] += h
        assert (up - dn) / (2 * h) == pytest.approx(grads["W0"][idx], rel=1e-6, abs=1e-9)


def test_eval_forward_is_pure():
    net = MicroNet(1, default_basis_layers(0.2), seed=0).eval()
    x = np.linspace(0, 1, 11)[:, None]
    np.testing.assert_array_equal(net.forward(x), net.forward(x))


def test_layer_norm_standardizes():
    net = MicroNet(3, [LayerSpec(7, "identity", "layer-norm")], seed=2)
    x = make_rng(1).normal(size=(20, 3)) * 5
    out = net.forward(x)  # g = 1, s = 0 at init
    np.testing.assert_allclose(out.mean(axis=1), 0, atol=1e-6)
    np.testing.assert_allclose(out.var(axis=1), 1, atol=1e-6)


def test_zero_inner_weights_skip_is_identity():
    net = MicroNet(4, [LayerSpec(4, "relu", skip=True), LayerSpec(4, "tanh", skip=True)], seed=0)
    for i in range(2):
        net.params[f"W{i}"][:] = 0
        net.params[f"b{i}"][:] = 0
    x = make_rng(3).normal(size=(5, 4))
    np.testing.assert_array_equal(net.forward(x), x)


def test_tape_reuse_rejected():
    net = MicroNet(1, [LayerSpec(1, "identity")])
    tape = GradientTape()
    net.forward(np.array([1.0]), tape=tape)
    net.backward(tape, np.array([1.0]))
    with pytest.raises(TapeReuseError):
        net.backward(tape, np.array([1.0]))
    with pytest.raises(TapeReuseError):
        net.forward(np.array([1.0]), tape=tape)


def test_non_finite_names_layer():
    net = MicroNet(1, [LayerSpec(2, "identity"), LayerSpec(1, "identity")])
    net.params["W1"][:] = np.inf
    with pytest.raises(NonFiniteError) as exc:
        net.forward(np.array([1.0]))
    assert exc.value.layer == 1


def test_mlp_layers_skip_only_on_equal_widths():
    layers = mlp_layers([8, 8, 4], output_dim=1, skip=True, input_dim=8)
    assert [l.skip for l in layers] == [True, True, False, False]
    assert layers[-1].activation == "identity"


def test_checkpoint_round_trip(tmp_path):
    net = MicroNet(2, default_basis_layers()[:1] + [LayerSpec(1, "identity")], seed=5)
    save_json(tmp_path / "net.json", net.to_dict())
    back = MicroNet.from_dict(load_json(tmp_path / "net.json"))
    for k in net.params:
        assert back.params[k].tobytes() == net.params[k].tobytes()


def test_from_dict_rejects_shape_mismatch():
    d = MicroNet(2, [LayerSpec(3)]).to_dict()
    d["params"]["W0"] = [[1.0, 2.0]]
    with pytest.raises(ValueError):
        MicroNet.from_dict(d)


# -- optimizers ---------------------------------------------------------------


def test_adam_zero_gradient_is_noop():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, lr=0.1)
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_is_lr_times_sign():
    p = {"w": np.array([0.0])}
    adam_step(p, {"w": np.array([1.0])}, lr=0.1)
    assert p["w"][0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_converges_on_quadratic():
    p = {"w": np.array([0.0])}
    opt = Adam(lr=0.1)
    for _ in range(100):
        opt.step(p, {"w": 2 * (p["w"] - 3)})
    assert abs(p["w"][0] - 3) < 0.1


def test_sgd_step_example():
    p = {"w": np.array([0.0])}
    sgd_step(p, {"w": np.array([1.0])}, t=10, c=1.0)
    assert p["w"][0] == pytest.approx(-0.1)


def test_sgd_rates_non_increasing_and_capped():
    opt = DecayingSGD(c=1.0, max_lr=0.05)
    rates = [opt.rate(t) for t in range(1, 101)]
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    assert max(rates) == 0.05


def test_sgd_decreases_convex_loss():
    p = {"w": np.array([5.0, -4.0])}
    f = lambda w: float(np.sum((w - 1) ** 2))
    start = f(p["w"])
    opt = DecayingSGD(c=0.5)
    for _ in range(500):
        opt.step(p, {"w": 2 * (p["w"] - 1)})
    assert f(p["w"]) < start


def test_optimizer_shape_mismatch():
    with pytest.raises(ValueError):
        Adam().step({"w": np.zeros(2)}, {"w": np.zeros(3)})


# -- weight-norm penalty -----------------------------------------------------


def test_weight_norm_examples():
    v, g = weight_norm_penalty({"a": np.zeros(3)})
    assert v == 0 and np.all(g["a"] == 0)
    v, g = weight_norm_penalty({"a": np.array([3.0])})
    assert v == 3 and g["a"][0] == 1
    v, g = weight_norm_penalty({"a": np.array([3.0]), "b": np.array([[4.0]])})
    assert v == 5
    assert g["a"][0] == pytest.approx(0.6) and g["b"][0, 0] == pytest.approx(0.8)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=10), st.floats(0.1, 10))
def test_weight_norm_homogeneous(values, scale):
    v1, _ = weight_norm_penalty({"a": np.array(values)})
    v2, _ = weight_norm_penalty({"a": scale * np.array(values)})
    assert math.isclose(v2, scale * v1, rel_tol=1e-12, abs_tol=1e-300)
