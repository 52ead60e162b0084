import os

import numpy as np
import pytest

from hippozoo import nnkit, signals


def _check_grads(build_loss, params, tol=1e-5):
    for p in params:
        p.grad = None
    build_loss().backward()
    fd = nnkit.finite_difference_grads(lambda: float(build_loss().value), params)
    for p, g in zip(params, fd):
        scale = max(np.abs(g).max(), 1e-8)
        assert np.abs(p.grad - g).max() / scale < tol


def test_elementwise_op_gradients():
    rng = signals.make_rng(0)
    a = nnkit.parameter(rng.standard_normal((3, 4)))
    b = nnkit.parameter(rng.standard_normal((3, 4)) + 2.0)

    def loss():
        return ((a * b + a / b - b) * (a + 1.5)).sum()

    _check_grads(loss, [a, b])


def test_broadcast_gradients():
    rng = signals.make_rng(1)
    a = nnkit.parameter(rng.standard_normal((3, 4)))
    row = nnkit.parameter(rng.standard_normal(4))

    def loss():
        return ((a + row) * (a * row)).sum()

    _check_grads(loss, [a, row])


def test_matmul_gradients_all_shapes():
    rng = signals.make_rng(2)
    M = nnkit.parameter(rng.standard_normal((3, 4)))
    N = nnkit.parameter(rng.standard_normal((4, 2)))
    v = nnkit.parameter(rng.standard_normal(4))
    u = nnkit.parameter(rng.standard_normal(3))

    _check_grads(lambda: (M @ N).sum(), [M, N])
    _check_grads(lambda: (M @ v).sum(), [M, v])
    _check_grads(lambda: (u @ M).sum(), [u, M])
    _check_grads(lambda: (v @ v), [v])


def test_structural_op_gradients():
    rng = signals.make_rng(3)
    a = nnkit.parameter(rng.standard_normal(6))
    b = nnkit.parameter(rng.standard_normal(3))

    def loss():
        c = nnkit.concat([a, b])
        o = nnkit.outer(b, a)
        return (c * c).sum() + o.reshape(18)[2:10].mean() + o.mean(axis=0).sum()

    _check_grads(loss, [a, b])


def test_activation_gradients():
    rng = signals.make_rng(4)
    x = nnkit.parameter(rng.standard_normal(8))

    def loss():
        y = nnkit.tanh(x) + nnkit.sigmoid(x) + nnkit.softplus(x) \
            + nnkit.scaled_sigmoid(x, 2.0) + nnkit.relu(x + 0.05)
        return (y * y).sum()

    _check_grads(loss, [x])


def test_scaled_sigmoid_range():
    y = nnkit.scaled_sigmoid(nnkit.Tensor(np.array([-20.0, 0.0, 20.0])), 2.0)
    assert np.all(y.value > 0.0) and np.all(y.value < 2.0)
    assert abs(y.value[1] - 1.0) < 1e-12


def test_mlp_gradients_with_residual_and_scaled_sigmoid():
    rng = signals.make_rng(5)
    net = nnkit.Mlp([6, 6, 6, 1],
                    ["tanh", "softplus", ("scaled_sigmoid", 2.0)],
                    rng, residual=True)
    x = rng.standard_normal(6)

    def loss():
        out = net(nnkit.Tensor(x))
        return (out * out).sum()

    _check_grads(loss, net.parameters(), tol=1e-4)


def test_mlp_validation():
    rng = signals.make_rng(0)
    with pytest.raises(ValueError):
        nnkit.Mlp([4, 4], ["tanh", "tanh"], rng)
    net = nnkit.Mlp([4, 4], [("not_scaled", 1.0)], rng)
    with pytest.raises(ValueError):
        net(nnkit.Tensor(np.zeros(4)))


def test_detach_blocks_gradient():
    a = nnkit.parameter(np.array([2.0, 3.0]))
    out = (nnkit.detach(a * a) * a).sum()
    out.backward()
    # With the square detached, d/da (a^2 * a) reduces to a^2.
    assert np.allclose(a.grad, a.value ** 2)


def test_grad_accumulates_on_reuse():
    a = nnkit.parameter(np.array([1.0, 2.0]))
    ((a * a).sum() + a.sum()).backward()
    assert np.allclose(a.grad, 2 * a.value + 1.0)


def test_backward_requires_scalar():
    a = nnkit.parameter(np.zeros(3))
    with pytest.raises(ValueError):
        (a * a).backward()


def test_sgd_step():
    p = nnkit.parameter(np.array([1.0, -2.0]))
    p.grad = np.array([0.5, 0.5])
    opt = nnkit.Sgd([p], lr=0.1)
    opt.step()
    assert np.allclose(p.value, [0.95, -2.05])
    opt.zero_grad()
    assert p.grad is None


def test_adamw_first_step_is_signed_lr():
    p = nnkit.parameter(np.array([1.0, 1.0]))
    p.grad = np.array([3.0, -0.2])
    opt = nnkit.AdamW([p], lr=0.01)
    opt.step()
    assert np.allclose(p.value, [1.0 - 0.01, 1.0 + 0.01], atol=1e-6)


def test_adamw_decoupled_decay_without_grad():
    p = nnkit.parameter(np.array([10.0]))
    opt = nnkit.AdamW([p], lr=0.1, weight_decay=0.5)
    opt.step()
    assert np.allclose(p.value, [10.0 * (1.0 - 0.05)])


def test_checkpoint_roundtrip(tmp_path):
    rng = signals.make_rng(6)
    net = nnkit.Mlp([4, 5, 2], ["tanh", "identity"], rng)
    path = os.path.join(tmp_path, "ckpt.bin")
    originals = [p.value.copy() for p in net.parameters()]
    nnkit.save_params(path, net.parameters())
    for p in net.parameters():
        p.value = np.zeros_like(p.value)
    nnkit.load_params(path, net.parameters())
    for p, orig in zip(net.parameters(), originals):
        assert np.array_equal(p.value, orig)


def test_checkpoint_validation(tmp_path):
    p = nnkit.parameter(np.zeros((2, 3)))
    path = os.path.join(tmp_path, "ckpt.bin")
    nnkit.save_params(path, [p])
    with pytest.raises(ValueError):
        nnkit.load_params(path, [p, p])
    q = nnkit.parameter(np.zeros((3, 2)))
    with pytest.raises(ValueError):
        nnkit.load_params(path, [q])
    bad = os.path.join(tmp_path, "bad.bin")
    with open(bad, "wb") as fh:
        fh.write(b"NOPE" + b"\0" * 16)
    with pytest.raises(ValueError):
        nnkit.load_params(bad, [p])
