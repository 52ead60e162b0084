"""Synthetic data generators for all experiments.

Everything is driven by a counter-based (Philox) generator so that
parallel trials can carve out disjoint, reproducible streams by seed.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.signal


def make_rng(seed, stream=0):
    """Seeded counter-based generator; distinct streams never collide."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


def bandlimited_noise(T, dt, cutoff, rng):
    """White Gaussian noise low-pass filtered in the frequency domain.

    The spectrum above ``cutoff`` (Hz) is zeroed and the result rescaled
    so the retained band carries unit variance in expectation.
    """
    nyquist = 0.5 / dt
    if cutoff >= nyquist:
        raise ValueError(f"cutoff {cutoff:g} must be below Nyquist {nyquist:g}")
    white = rng.standard_normal(T)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(T, d=dt)
    keep = freqs <= cutoff
    spec[~keep] = 0.0
    kept_fraction = np.count_nonzero(keep) / freqs.size
    return np.fft.irfft(spec, n=T) / np.sqrt(kept_fraction)


@dataclass(frozen=True)
class WrayGreenParams:
    a: float = 2.0
    m: float = 0.3
    k: float = 0.08
    tau_max: float = 50.0
    alpha: float = 0.004


def wray_green_mu(tau, params=WrayGreenParams()):
    """Impulse response mu(tau) = (a/m) exp(-k tau) sin(m tau)."""
    tau = np.asarray(tau, dtype=float)
    return (params.a / params.m) * np.exp(-params.k * tau) * np.sin(params.m * tau)


def wray_green(f, params=WrayGreenParams()):
    """Second-order Volterra benchmark: y = alpha * z^2, z = mu * f.

    The convolution is a trapezoid rule over integer sample lags
    0..tau_max (mu's decay constants are calibrated to that grid);
    history before the start of ``f`` is taken as zero.
    """
    if min(params.a, params.m, params.k, params.tau_max, params.alpha) <= 0:
        raise ValueError("Wray-Green parameters must be positive")
    f = np.asarray(f, dtype=float)
    n_lag = int(round(params.tau_max))
    kernel = wray_green_mu(np.arange(n_lag + 1), params)
    kernel[0] *= 0.5
    kernel[-1] *= 0.5
    z = scipy.signal.lfilter(kernel, [1.0], f)
    return params.alpha * z * z


def ou_mixture(T, K, tau_range, rng, dt=1.0):
    """Equal-weight mixture of K stationary OU (AR(1)) components.

    Component timescales are log-uniform over ``tau_range``; each AR(1)
    starts from its stationary law, so the mixture has unit variance.
    """
    lo, hi = tau_range
    if lo <= 0 or hi <= 0:
        raise ValueError("timescale range must be positive")
    taus = np.exp(rng.uniform(np.log(lo), np.log(hi), size=K))
    a = np.exp(-dt / taus)
    b = np.sqrt(1.0 - a * a)
    z0 = rng.standard_normal(K)
    eps = rng.standard_normal((K, T))
    x = np.zeros(T)
    for k in range(K):
        drive = b[k] * eps[k]
        drive[0] = 0.0
        zk, _ = scipy.signal.lfilter([1.0], [1.0, -a[k]], drive, zi=[a[k] * z0[k]])
        x += zk
    return x / np.sqrt(K)


GP_LENGTHSCALES = (0.1, 3.0, 16.0, 32.0, 64.0)
GP_RAW_WEIGHTS = (0.5, 2.0, 5.0, 5.0, 5.0)


def gp_rbf_kernel(delta, lengthscales=GP_LENGTHSCALES, weights=GP_RAW_WEIGHTS):
    """Stationary covariance of the RBF-mixture GP, normalized to kappa(0)=1."""
    delta = np.asarray(delta, dtype=float)
    w2 = np.asarray(weights, dtype=float) ** 2
    w2 = w2 / w2.sum()
    out = np.zeros_like(delta)
    for wi, li in zip(w2, lengthscales):
        out = out + wi * np.exp(-0.5 * (delta / li) ** 2)
    return out


def gp_rbf_mixture(T, rng, lengthscales=GP_LENGTHSCALES, weights=GP_RAW_WEIGHTS):
    """Sample the RBF-mixture GP on an integer grid via circulant embedding.

    Negative circulant eigenvalues (an artifact of plain embedding) are
    floored at zero; the floored mass fraction is returned alongside the
    samples.
    """
    if min(lengthscales) <= 0:
        raise ValueError("lengthscales must be positive")
    n = 2 * T
    dist = np.minimum(np.arange(n), n - np.arange(n))
    c = gp_rbf_kernel(dist, lengthscales, weights)
    lam = np.fft.fft(c).real
    floored_mass = float(np.abs(lam[lam < 0]).sum() / np.abs(lam).sum())
    lam = np.maximum(lam, 0.0)
    xi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    # xi has E|xi_k|^2 = 2, so the real part of F(sqrt(lam/n) xi) carries
    # covariance c exactly.
    z = np.fft.fft(np.sqrt(lam / n) * xi)
    return z.real[:T], floored_mass


def token_table(n_tokens, dim, rng):
    """Fixed random token table: unit-norm rows, pairwise distinct."""
    tokens = rng.standard_normal((n_tokens, dim))
    tokens /= np.linalg.norm(tokens, axis=1, keepdims=True)
    return tokens


# Phase labels shared by the episode generators.
PHASE_UNINFORMATIVE = 0
PHASE_INFORMATIVE = 1
PHASE_WRITE = 2
PHASE_TOKEN_A = 3
PHASE_TOKEN_B = 4


@dataclass
class Episode:
    inputs: np.ndarray
    targets: np.ndarray
    phases: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.inputs) == len(self.targets) == len(self.phases)):
            raise ValueError("episode fields must have equal length")


@dataclass(frozen=True)
class SelectiveCopyTokens:
    """18 unit-norm tokens: 16 informative, 1 uninformative, 1 write."""

    informative: np.ndarray
    uninformative: np.ndarray
    write: np.ndarray

    @classmethod
    def sample(cls, rng, n_informative=16, dim=32):
        table = token_table(n_informative + 2, dim, rng)
        return cls(informative=table[:n_informative],
                   uninformative=table[n_informative],
                   write=table[n_informative + 1])


def selective_copy_episode(tokens, rng, n_informative_steps=10,
                           n_uninformative_steps=10):
    """One selective-copy episode: interleaved input phase then write phase.

    10 informative tokens (sampled from the table) are randomly interleaved
    with 10 uninformative steps; the final 10 steps present the write token
    and target the informative tokens in presentation order.
    """
    n_in = n_informative_steps
    n_un = n_uninformative_steps
    input_len = n_in + n_un
    T = input_len + n_in
    dim = tokens.informative.shape[1]
    positions = rng.permutation(input_len)[:n_in]
    informative_mask = np.zeros(input_len, dtype=bool)
    informative_mask[positions] = True
    choices = rng.integers(0, tokens.informative.shape[0], size=n_in)

    inputs = np.zeros((T, dim))
    targets = np.zeros((T, dim))
    phases = np.full(T, PHASE_UNINFORMATIVE, dtype=int)
    order = []
    k = 0
    for t in range(input_len):
        if informative_mask[t]:
            inputs[t] = tokens.informative[choices[k]]
            phases[t] = PHASE_INFORMATIVE
            order.append(choices[k])
            k += 1
        else:
            inputs[t] = tokens.uninformative
    for slot in range(n_in):
        t = input_len + slot
        inputs[t] = tokens.write
        targets[t] = tokens.informative[order[slot]]
        phases[t] = PHASE_WRITE
    return Episode(inputs=inputs, targets=targets, phases=phases,
                   meta={"order": np.array(order),
                         "informative_steps": np.flatnonzero(informative_mask)})


@dataclass(frozen=True)
class AssocRecallTokens:
    """Two disjoint 12-token sets plus a write token, all unit norm."""

    set_a: np.ndarray
    set_b: np.ndarray
    write: np.ndarray

    @classmethod
    def sample(cls, rng, n_per_set=12, dim=24):
        table = token_table(2 * n_per_set + 1, dim, rng)
        return cls(set_a=table[:n_per_set], set_b=table[n_per_set:2 * n_per_set],
                   write=table[2 * n_per_set])


def assoc_recall_episode(tokens, rng, T=12, max_retries=1000):
    """One associative-recall episode of even length T.

    Even timesteps present A tokens, odd timesteps (before T-2) B tokens,
    T-1 presents Write.  The A token at T-2 is resampled until it occurred
    earlier; the target at T-1 is the B token that followed its most
    recent prior occurrence.
    """
    if T < 4 or T % 2:
        raise ValueError("episode length must be even and >= 4")
    n_a = tokens.set_a.shape[0]
    n_b = tokens.set_b.shape[0]
    n_pairs = (T - 2) // 2
    a_idx = rng.integers(0, n_a, size=n_pairs)
    b_idx = rng.integers(0, n_b, size=n_pairs)
    for attempt in range(max_retries):
        query = int(rng.integers(0, n_a))
        if query in a_idx:
            break
    else:
        raise RuntimeError("could not sample a previously seen query token")
    # Most recent prior occurrence of the queried A token.
    last = max(i for i, a in enumerate(a_idx) if a == query)
    target_b = b_idx[last]

    dim = tokens.set_a.shape[1]
    inputs = np.zeros((T, dim))
    targets = np.zeros((T, dim))
    phases = np.empty(T, dtype=int)
    for i in range(n_pairs):
        inputs[2 * i] = tokens.set_a[a_idx[i]]
        inputs[2 * i + 1] = tokens.set_b[b_idx[i]]
        phases[2 * i] = PHASE_TOKEN_A
        phases[2 * i + 1] = PHASE_TOKEN_B
    inputs[T - 2] = tokens.set_a[query]
    phases[T - 2] = PHASE_TOKEN_A
    inputs[T - 1] = tokens.write
    phases[T - 1] = PHASE_WRITE
    targets[T - 1] = tokens.set_b[target_b]
    return Episode(inputs=inputs, targets=targets, phases=phases,
                   meta={"a_idx": a_idx, "b_idx": b_idx,
                         "query": query, "target_b": int(target_b)})
