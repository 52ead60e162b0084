import numpy as np
import pytest

from hippozoo import signals


def test_make_rng_reproducible_and_disjoint():
    a = signals.make_rng(3, stream=1).standard_normal(8)
    b = signals.make_rng(3, stream=1).standard_normal(8)
    c = signals.make_rng(3, stream=2).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_bandlimited_noise_spectrum_and_variance():
    rng = signals.make_rng(0)
    T, dt, cutoff = 65536, 1e-2, 10.0
    x = signals.bandlimited_noise(T, dt, cutoff, rng)
    spec = np.abs(np.fft.rfft(x))
    freqs = np.fft.rfftfreq(T, d=dt)
    assert spec[freqs > cutoff].max() < 1e-10 * spec.max()
    assert abs(np.var(x) - 1.0) < 0.1


def test_bandlimited_noise_rejects_cutoff_above_nyquist():
    with pytest.raises(ValueError):
        signals.bandlimited_noise(100, 1e-2, 60.0, signals.make_rng(0))


def test_wray_green_against_brute_force():
    rng = signals.make_rng(1)
    f = rng.standard_normal(120)
    y = signals.wray_green(f)
    p = signals.WrayGreenParams()
    n_lag = int(p.tau_max)
    mu = signals.wray_green_mu(np.arange(n_lag + 1), p)
    ref = np.zeros_like(f)
    for t in range(len(f)):
        z = 0.0
        for lag in range(n_lag + 1):
            if t - lag < 0:
                break
            w = 0.5 if lag in (0, n_lag) else 1.0
            z += w * mu[lag] * f[t - lag]
        ref[t] = p.alpha * z * z
    assert np.abs(y - ref).max() < 1e-10


def test_wray_green_mu_basics():
    p = signals.WrayGreenParams()
    assert signals.wray_green_mu(0.0) == 0.0
    tau = np.array([1.0, 5.0])
    ref = (p.a / p.m) * np.exp(-p.k * tau) * np.sin(p.m * tau)
    assert np.allclose(signals.wray_green_mu(tau), ref)


def test_ou_mixture_stationary_moments():
    rng = signals.make_rng(2)
    x = signals.ou_mixture(40_000, 8, (2.0, 200.0), rng)
    assert abs(np.mean(x)) < 0.2
    assert 0.6 < np.var(x) < 1.4
    r1 = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert 0.5 < r1 < 1.0


def test_ou_mixture_rejects_bad_range():
    with pytest.raises(ValueError):
        signals.ou_mixture(100, 2, (0.0, 10.0), signals.make_rng(0))


def test_gp_kernel_normalized():
    assert abs(signals.gp_rbf_kernel(np.array([0.0]))[0] - 1.0) < 1e-14
    d = np.linspace(0.0, 100.0, 50)
    k = signals.gp_rbf_kernel(d)
    assert np.all(np.diff(k) <= 1e-12)


def test_gp_mixture_covariance_monte_carlo():
    # Average lagged products across many independent draws against the
    # closed-form kernel.
    lags = np.array([0, 1, 8, 32])
    T, reps = 512, 200
    acc = np.zeros(len(lags))
    for i in range(reps):
        x, floored = signals.gp_rbf_mixture(T, signals.make_rng(100 + i))
        assert floored < 1e-6
        for j, lag in enumerate(lags):
            acc[j] += np.mean(x[:T - lag] * x[lag:])
    emp = acc / reps
    ref = signals.gp_rbf_kernel(lags.astype(float))
    assert np.abs(emp - ref).max() < 0.1


def test_token_table_unit_norm_distinct():
    t = signals.token_table(18, 32, signals.make_rng(0))
    assert np.allclose(np.linalg.norm(t, axis=1), 1.0)
    gram = t @ t.T
    off = gram - np.eye(18)
    assert np.abs(off).max() < 0.999


def test_selective_copy_episode_structure():
    tokens = signals.SelectiveCopyTokens.sample(signals.make_rng(0))
    for trial in range(20):
        rng = signals.make_rng(1, stream=trial)
        ep = signals.selective_copy_episode(tokens, rng)
        assert len(ep.inputs) == 30
        assert np.count_nonzero(ep.phases == signals.PHASE_INFORMATIVE) == 10
        assert np.count_nonzero(ep.phases == signals.PHASE_UNINFORMATIVE) == 10
        assert np.count_nonzero(ep.phases == signals.PHASE_WRITE) == 10
        # Write steps present the write token; targets replay the
        # informative tokens in presentation order.
        order = ep.meta["order"]
        inf_steps = ep.meta["informative_steps"]
        for slot in range(10):
            t = 20 + slot
            assert np.array_equal(ep.inputs[t], tokens.write)
            assert np.array_equal(ep.targets[t], tokens.informative[order[slot]])
            assert np.array_equal(ep.inputs[inf_steps[slot]],
                                  tokens.informative[order[slot]])
        # Uninformative steps present the uninformative token, zero target.
        for t in np.flatnonzero(ep.phases == signals.PHASE_UNINFORMATIVE):
            assert np.array_equal(ep.inputs[t], tokens.uninformative)
        assert np.abs(ep.targets[:20]).max() == 0.0


def test_assoc_recall_episode_structure():
    tokens = signals.AssocRecallTokens.sample(signals.make_rng(0))
    for trial in range(30):
        rng = signals.make_rng(2, stream=trial)
        ep = signals.assoc_recall_episode(tokens, rng, T=12)
        a_idx, b_idx = ep.meta["a_idx"], ep.meta["b_idx"]
        query = ep.meta["query"]
        assert query in a_idx
        last = max(i for i, a in enumerate(a_idx) if a == query)
        assert ep.meta["target_b"] == b_idx[last]
        for i in range(5):
            assert np.array_equal(ep.inputs[2 * i], tokens.set_a[a_idx[i]])
            assert np.array_equal(ep.inputs[2 * i + 1], tokens.set_b[b_idx[i]])
        assert np.array_equal(ep.inputs[10], tokens.set_a[query])
        assert np.array_equal(ep.inputs[11], tokens.write)
        assert np.array_equal(ep.targets[11], tokens.set_b[b_idx[last]])
        assert ep.phases[11] == signals.PHASE_WRITE


def test_assoc_recall_episode_validation():
    tokens = signals.AssocRecallTokens.sample(signals.make_rng(0))
    with pytest.raises(ValueError):
        signals.assoc_recall_episode(tokens, signals.make_rng(0), T=7)
    with pytest.raises(ValueError):
        signals.assoc_recall_episode(tokens, signals.make_rng(0), T=2)


def test_episode_length_validation():
    with pytest.raises(ValueError):
        signals.Episode(inputs=np.zeros((3, 2)), targets=np.zeros((2, 2)),
                        phases=np.zeros(3, dtype=int))
