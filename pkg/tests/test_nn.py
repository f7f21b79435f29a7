import numpy as np
import pytest
from hypothesis import given, strategies as st

from latent_roadmap import nn
from latent_roadmap.errors import DimensionMismatch, ShapeMismatch
from oracles import adam_reference, central_diff, rel_err


def test_zero_net_outputs_zero():
    net = nn.MLP([4, 3, 2], [nn.RELU, nn.IDENTITY], weights=[np.zeros((4, 3)), np.zeros((3, 2))],
                 biases=[np.zeros(3), np.zeros(2)])
    assert np.array_equal(net(np.arange(4.0)), np.zeros(2))


def test_identity_net():
    net = nn.MLP([3, 3], [nn.IDENTITY], weights=[np.eye(3)], biases=[np.zeros(3)])
    x = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(net(x), x)


def test_forward_matches_hand_rolled(rng):
    net = nn.MLP([5, 4, 3, 2], [nn.RELU, nn.RELU, nn.IDENTITY], rng)
    x = rng.normal(size=5)
    h = list(x)
    for W, b, act in zip(net.weights, net.biases, net.activations):
        out = []
        for j in range(W.shape[1]):
            a = b[j] + sum(h[i] * W[i, j] for i in range(W.shape[0]))
            out.append(max(a, 0.0) if act == nn.RELU else a)
        h = out
    assert np.allclose(net(x), h, rtol=1e-13, atol=1e-13)
    batch = rng.normal(size=(7, 5))
    assert np.allclose(net(batch)[3], net(batch[3]))


def test_dimension_errors(rng):
    net = nn.MLP([3, 2], [nn.IDENTITY], rng)
    with pytest.raises(DimensionMismatch):
        net(np.zeros(4))
    _, tape = net.forward(np.zeros(3))
    with pytest.raises(DimensionMismatch):
        net.backward(tape, np.zeros(3))
    with pytest.raises(DimensionMismatch):
        nn.MLP([3, 2], [nn.RELU, nn.RELU])


def test_linear_backward_row():
    W = np.arange(6.0).reshape(3, 2)
    net = nn.MLP([3, 2], [nn.IDENTITY], weights=[W], biases=[np.zeros(2)])
    x = np.array([0.5, -1.0, 2.0])
    _, tape = net.forward(x)
    (gW, gb), gx = net.backward(tape, np.array([1.0, 0.0]))
    # output_0 = x . W[:, 0]
    assert np.array_equal(gW[:, 0], x) and np.array_equal(gW[:, 1], np.zeros(3))
    assert np.array_equal(gb, [1.0, 0.0])
    assert np.array_equal(gx, W[:, 0])


def test_relu_blocks_negative_unit():
    net = nn.MLP([1, 1], [nn.RELU], weights=[np.array([[1.0]])], biases=[np.array([-5.0])])
    _, tape = net.forward(np.array([1.0]))
    (gW, gb), gx = net.backward(tape, np.array([1.0]))
    assert gW[0, 0] == 0.0 and gb[0] == 0.0 and gx[0] == 0.0


def test_backward_matches_finite_differences(rng):
    net = nn.MLP([6, 5, 4, 3], [nn.RELU, nn.RELU, nn.IDENTITY], rng)
    x = rng.normal(size=(8, 6))
    gout = rng.normal(size=(8, 3))
    _, tape = net.forward(x)
    grads, gx = net.backward(tape, gout)
    for k, p in enumerate(net.params()):
        def f(v, k=k):
            saved = net.params()[k].copy()
            net.params()[k][...] = v
            val = float((net(x) * gout).sum())
            net.params()[k][...] = saved
            return val
        assert rel_err(grads[k], central_diff(f, p, 1e-4)) < 1e-5
    assert rel_err(gx, central_diff(lambda v: float((net(v) * gout).sum()), x, 1e-4)) < 1e-5


def test_grad_check_quadratic(rng):
    net = nn.MLP([4, 3], [nn.IDENTITY], rng)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 3))

    def loss_and_grads():
        y, tape = net.forward(x)
        r = y - target
        grads, _ = net.backward(tape, 2 * r)
        return float((r ** 2).sum()), grads

    assert nn.grad_check(net.params(), loss_and_grads) < 1e-7


def test_grad_check_detects_wrong_gradient(rng):
    net = nn.MLP([3, 2], [nn.IDENTITY], rng)
    x = rng.normal(size=(4, 3))

    def wrong():
        y, tape = net.forward(x)
        grads, _ = net.backward(tape, np.ones_like(y))
        return float(y.sum() ** 2), grads

    assert nn.grad_check(net.params(), wrong) > 0.1


def test_adam_zero_gradient():
    p = [np.array([1.0, -2.0])]
    st_ = nn.AdamState()
    nn.adam_step(st_, p, [np.zeros(2)])
    assert np.array_equal(p[0], [1.0, -2.0]) and st_.t == 1


def test_adam_hand_recurrence():
    p = [np.array([0.3])]
    st_ = nn.AdamState(lr=0.01)
    for _ in range(3):
        nn.adam_step(st_, p, [np.array([1.0])])
    assert p[0][0] == pytest.approx(adam_reference([0.3], [[1.0]] * 3, lr=0.01)[0], abs=1e-15)
    # with a constant gradient every bias-corrected step is lr * 1/(1+eps)
    assert p[0][0] == pytest.approx(0.3 - 3 * 0.01, abs=1e-9)


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=30))
def test_adam_matches_reference(gs):
    p = [np.array([0.0])]
    st_ = nn.AdamState(lr=1e-3)
    for g in gs:
        nn.adam_step(st_, p, [np.array([g])])
    assert p[0][0] == pytest.approx(adam_reference([0.0], [[g] for g in gs])[0], abs=1e-12)


def test_adam_constant_gradient_step_bound():
    p = [np.zeros(3)]
    st_ = nn.AdamState(lr=1e-3)
    for _ in range(100):
        before = p[0].copy()
        nn.adam_step(st_, p, [np.array([0.1, -3.0, 50.0])])
        assert np.all(np.abs(p[0] - before) <= 2e-3)


def test_adam_shape_errors():
    st_ = nn.AdamState()
    with pytest.raises(ShapeMismatch):
        nn.adam_step(st_, [np.zeros(2)], [np.zeros(3)])
    with pytest.raises(ShapeMismatch):
        nn.adam_step(st_, [np.zeros(2)], [])


def test_train_config_validation():
    with pytest.raises(ValueError):
        nn.TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        nn.TrainConfig(batch_size=1)


def test_copy_is_deep(rng):
    net = nn.MLP([2, 2], [nn.IDENTITY], rng)
    c = net.copy()
    c.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != c.weights[0][0, 0]


def test_assert_finite():
    assert nn.assert_finite([np.zeros(2)])
    assert not nn.assert_finite([np.array([np.nan])])
