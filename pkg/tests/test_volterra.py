import os

import numpy as np
import pytest

from hippozoo import hippo, orthopoly, signals, volterra


def test_readout_trivials():
    N = 6
    s = np.arange(1.0, N + 1.0)
    lin = volterra.VolterraReadout.create(volterra.LINEAR, N)
    assert volterra.readout(lin, s) == 0.0
    quad = volterra.VolterraReadout.create(volterra.QUADRATIC, N)
    quad.beta2 = np.eye(N)
    assert abs(volterra.readout(quad, s) - float(s @ s)) < 1e-12
    mlp = volterra.VolterraReadout.create(volterra.MLP, N,
                                          rng=signals.make_rng(0), hidden=8)
    assert np.isfinite(volterra.readout(mlp, s))
    with pytest.raises(ValueError):
        volterra.VolterraReadout.create("cubic", N)


def test_polynomial_gradients_finite_difference():
    N = 4
    rng = signals.make_rng(1)
    s = rng.standard_normal(N)
    y = 0.7
    r = volterra.VolterraReadout.create(volterra.QUADRATIC, N)
    r.beta0 = 0.3
    r.beta1 = rng.standard_normal(N)
    r.beta2 = rng.standard_normal((N, N))
    residual = volterra.readout(r, s) - y
    grads = volterra.readout_grad(r, s, residual)
    h = 1e-6

    def loss():
        return (volterra.readout(r, s) - y) ** 2

    r.beta0 += h
    up = loss()
    r.beta0 -= 2 * h
    down = loss()
    r.beta0 += h
    assert abs(grads["beta0"] - (up - down) / (2 * h)) < 1e-6
    for name in ("beta1", "beta2"):
        arr = getattr(r, name)
        g = grads[name]
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss()
            flat[i] = old - h
            down = loss()
            flat[i] = old
            assert abs(gflat[i] - (up - down) / (2 * h)) < 1e-5


def test_mlp_gradient_finite_difference():
    N = 5
    rng = signals.make_rng(2)
    s = rng.standard_normal(N)
    r = volterra.VolterraReadout.create(volterra.MLP, N, rng=rng, hidden=6)
    residual = volterra.readout(r, s) - 1.2
    grads = volterra.readout_grad(r, s, residual)["mlp"]
    import hippozoo.nnkit as nnkit
    fd = nnkit.finite_difference_grads(
        lambda: (volterra.readout(r, s) - 1.2) ** 2, r.mlp.parameters())
    for g, ref in zip(grads, fd):
        assert np.abs(g - ref).max() < 1e-5 * max(np.abs(ref).max(), 1e-8)


def test_sgd_update_reduces_error():
    N = 4
    rng = signals.make_rng(3)
    s = rng.standard_normal(N)
    y = 2.0
    for variant in (volterra.LINEAR, volterra.QUADRATIC, volterra.MLP):
        r = volterra.VolterraReadout.create(variant, N, rng=rng, hidden=6)
        before = (volterra.readout(r, s) - y) ** 2
        residual = volterra.readout(r, s) - y
        volterra.sgd_update(r, volterra.readout_grad(r, s, residual), 1e-2)
        after = (volterra.readout(r, s) - y) ** 2
        assert after < before


def test_infer_kernel_formula_and_symmetry():
    N = 8
    spec = hippo.HippoSpec(hippo.LEGS, N, tau=0.375)
    dt = 1e-2
    rng = signals.make_rng(4)
    beta2 = rng.standard_normal((N, N))
    K = volterra.infer_kernel(beta2, spec, dt)
    assert K.shape == (50, 50)
    assert np.abs(K - K.T).max() < 1e-12
    # Antisymmetric parts of beta2 must not contribute.
    K2 = volterra.infer_kernel(beta2 + 3.0 * (beta2 - beta2.T), spec, dt)
    assert np.abs(K - K2).max() < 1e-10
    # Direct transcription of the decode formula.
    tau = np.arange(50) * dt
    x = np.exp(-tau / spec.tau)
    p = (dt / spec.tau) * x
    P = orthopoly.eval_basis(hippo.basis_for(spec), x)
    B = 0.5 * (beta2 + beta2.T)
    ref = (P * p[:, None]) @ B @ (P * p[:, None]).T
    assert np.abs(K - ref).max() < 1e-12


def test_infer_kernel_requires_exponential_family():
    spec = hippo.HippoSpec(hippo.LEGT, 4, tau=1.0)
    with pytest.raises(ValueError):
        volterra.infer_kernel(np.eye(4), spec, 0.01)


def test_true_kernel_rank_one():
    K = volterra.true_kernel()
    assert K.shape == (50, 50)
    assert np.abs(K - K.T).max() == 0.0
    s = np.linalg.svd(K, compute_uv=False)
    assert s[1] < 1e-12 * s[0]


def test_kernel_correlation_properties():
    rng = signals.make_rng(5)
    K = rng.standard_normal((10, 10))
    assert abs(volterra.kernel_correlation(K, 7.3 * K) - 1.0) < 1e-12
    assert volterra.kernel_correlation(K, np.zeros_like(K)) == 0.0
    assert abs(volterra.kernel_correlation(K, -K) + 1.0) < 1e-12


def test_run_volterra_schema(tmp_path):
    out = os.path.join(tmp_path, "v")
    T = 300
    rep = volterra.run_volterra({"T": T, "N": 8, "mlp_hidden": 8,
                                 "trailing_window": 100, "log_every": 1}, out)
    with open(rep.files["cumulative_error"]) as fh:
        lines = fh.read().splitlines()
    assert lines[0] == "step,cum_err_linear,cum_err_quadratic,cum_err_mlp"
    assert len(lines) == 1 + T          # one row per step at log_every=1
    cum = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert np.all(np.diff(cum[:, 1]) >= 0)
    assert np.all(np.diff(cum[:, 2]) >= 0)
    for name in ("inferred_kernel", "true_kernel", "summary"):
        assert os.path.exists(rep.files[name])
    assert os.path.exists(os.path.join(out, "config.json"))
    assert set(rep.trailing_mse) == {volterra.LINEAR, volterra.QUADRATIC,
                                     volterra.MLP}


def test_run_volterra_rejects_unknown_key(tmp_path):
    with pytest.raises(ValueError):
        volterra.run_volterra({"bogus": 1}, os.path.join(tmp_path, "x"))
