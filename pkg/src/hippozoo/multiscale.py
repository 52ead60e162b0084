"""A single state matrix that represents history over a continuum of
timescales.

The state S is N x M: N history coefficients crossed with M coefficients
in a polynomial basis over the scale variable g (or u = log g).  The
coupled dynamics dS/dt = A S G + B f decouple in the eigenbasis of the
scale-coupling matrix into M independent N-dimensional systems, which is
how stepping is implemented.  Querying a horizon L evaluates the scale
basis at g = tau0/L (clipped) and contracts along the scale axis.

Three variants:
  - basic:     polynomial in g, uniform weight on [0, 1];
  - jeffreys:  polynomial in g, 1/g weight on [eps, 1];
  - log:       polynomial in u = log g, uniform on [log eps, 0], with the
               multiplication-by-g operator realized as exp(J).
"""

import concurrent.futures
import os
from dataclasses import dataclass, field

import numpy as np

from . import hippo, numkit, orthopoly, reports, signals

BASIC = "basic"
JEFFREYS = "jeffreys"
LOG = "log"
VARIANTS = (BASIC, JEFFREYS, LOG)


@dataclass
class MultiscaleSystem:
    variant: str
    N: int
    M: int
    tau0: float
    eps: float
    hippo_sys: hippo.ContinuousLTI
    scale_basis: orthopoly.OrthoBasis
    coupling: np.ndarray        # M x M symmetric (tridiagonal or exp(J))
    r: np.ndarray               # scale-basis coefficients of the gain function
    spectral: numkit.SymEig
    clip_lo: float
    clip_hi: float
    _banks: dict = field(default_factory=dict, repr=False)

    @property
    def injection(self):
        """Rank-one input injection B = b r^T."""
        return np.outer(self.hippo_sys.b, self.r)


@dataclass
class MultiscaleState:
    S: np.ndarray               # N x M


def build(variant, N, M, tau0=16.0, eps=1e-3):
    """Construct the coupled system for one of the three scale bases."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if N < 1 or M < 1:
        raise ValueError("N and M must be >= 1")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    cont = hippo.make_hippo(hippo.HippoSpec(hippo.LEGT, N, tau=tau0))
    if variant == BASIC:
        basis = orthopoly.legendre_shifted(M)
        coupling = orthopoly.jacobi_matrix(basis)
        clip_lo, clip_hi = 0.0, 1.0
    elif variant == JEFFREYS:
        basis = orthopoly.jeffreys_basis(M, eps)
        coupling = orthopoly.jacobi_matrix(basis)
        clip_lo, clip_hi = eps, 1.0
    else:
        basis = orthopoly.stieltjes_basis(
            lambda u: np.ones_like(u), (np.log(eps), 0.0), M,
            weight_name=f"uniform-log({eps:g})")
        J = orthopoly.jacobi_matrix(basis)
        eig = numkit.sym_eig(J)
        coupling = eig.vectors @ (np.exp(eig.values)[:, None] * eig.vectors.T)
        coupling = 0.5 * (coupling + coupling.T)
        clip_lo, clip_hi = eps, 1.0
    # r holds the scale-basis coefficients of the gain function (g, or e^u
    # for the log variant): the constant 1 has coefficients sqrt(mass)*e0,
    # so multiplying by the coupling operator gives the gain's expansion.
    r = np.sqrt(basis.mass) * coupling[:, 0]
    return MultiscaleSystem(
        variant=variant, N=N, M=M, tau0=float(tau0), eps=float(eps),
        hippo_sys=cont, scale_basis=basis, coupling=coupling, r=r,
        spectral=numkit.sym_eig(coupling), clip_lo=clip_lo, clip_hi=clip_hi)


def zero_state(sys):
    return MultiscaleState(S=np.zeros((sys.N, sys.M)))


def _bank(sys, dt):
    """Per-eigenvalue ZOH systems for the decoupled spectral columns."""
    key = float(dt)
    if key not in sys._banks:
        V = sys.spectral.vectors
        lam = sys.spectral.values
        c = V.T @ sys.r
        A_bank = np.empty((sys.M, sys.N, sys.N))
        b_bank = np.empty((sys.M, sys.N))
        for m in range(sys.M):
            if abs(lam[m]) < 1e-300:
                A_bank[m] = np.eye(sys.N)
                b_bank[m] = 0.0
                continue
            A_bank[m], b_d = numkit.zoh_discretize(
                lam[m] * sys.hippo_sys.A, sys.hippo_sys.b, dt)
            b_bank[m] = c[m] * b_d
        sys._banks[key] = (A_bank, b_bank)
    return sys._banks[key]


def ms_step(sys, state, f, dt):
    """One exact ZOH step of dS/dt = A S G + B f, via the spectral frame."""
    A_bank, b_bank = _bank(sys, dt)
    V = sys.spectral.vectors
    St = state.S @ V
    St = np.einsum("mij,jm->im", A_bank, St) + f * b_bank.T
    S = St @ V.T
    if not np.all(np.isfinite(S)):
        raise FloatingPointError("multiscale state became non-finite")
    return MultiscaleState(S=S)


def run_spectral(sys, signal, dt=1.0):
    """Roll the full signal keeping the state in the spectral frame.

    Equivalent to repeated ms_step but avoids the per-step rotations.
    """
    A_bank, b_bank = _bank(sys, dt)
    St = np.zeros((sys.N, sys.M))
    for f in signal:
        St = np.einsum("mij,jm->im", A_bank, St) + f * b_bank.T
    S = St @ sys.spectral.vectors.T
    if not np.all(np.isfinite(S)):
        raise FloatingPointError("multiscale state became non-finite")
    return MultiscaleState(S=S)


def query(sys, state, L):
    """History coefficients for the window [t - L, t]: c(L) = S q(L)."""
    if not L > 0:
        raise ValueError("horizon must be positive")
    g = np.clip(sys.tau0 / L, sys.clip_lo, sys.clip_hi)
    arg = np.log(g) if sys.variant == LOG else g
    q = orthopoly.eval_basis(sys.scale_basis, arg)
    return state.S @ q


# -- variable-horizon experiment --------------------------------------------

DEFAULT_CONFIG = {
    "n_trials": 16,
    "T": 30_000,
    "n_components": 8,          # OU mixture size
    "tau_range": (2.0, 2000.0),
    "N": 16,
    "M": 128,
    "tau0": 16.0,
    "eps": 1e-3,
    "baseline_taus": (10.0, 100.0, 1000.0, 10000.0),
    "horizons": tuple(float(h) for h in np.geomspace(10.0, 1e4, 13)),
    "R": 128,                   # reconstruction grid points per horizon
    "seed": 0,
    "threads": 1,
}


def _reconstruction_mse(signal, coeffs, basis, window, horizon, R):
    """MSE of the decoded window against linearly interpolated truth.

    ``coeffs`` live on the system's own window; queries at normalized
    position s of the requested horizon map to s*horizon/window, with
    zero prediction outside [0, 1].
    """
    T = len(signal)
    s_grid = np.linspace(0.0, 1.0, R)
    t_query = (T - 1) - s_grid * horizon
    truth = np.interp(t_query, np.arange(T), signal)
    s_own = s_grid * horizon / window
    inside = s_own <= 1.0
    pred = np.zeros(R)
    pred[inside] = orthopoly.eval_basis(basis, s_own[inside]) @ coeffs
    return float(np.mean((pred - truth) ** 2)), pred, truth


def _run_trial(cfg, trial, systems, collect_dumps):
    rng = signals.make_rng(cfg["seed"], stream=trial)
    x = signals.ou_mixture(cfg["T"], cfg["n_components"], cfg["tau_range"], rng)
    basis = orthopoly.legendre_shifted(cfg["N"])
    mse = {}
    dumps = []
    states = {name: run_spectral(sys, x) for name, sys in systems.items()}
    for horizon in cfg["horizons"]:
        for name, sys in systems.items():
            c = query(sys, states[name], horizon)
            err, pred, truth = _reconstruction_mse(
                x, c, basis, horizon, horizon, cfg["R"])
            mse[(horizon, name)] = err
            if collect_dumps:
                dumps.append((horizon, name, pred, truth))
    for tau in cfg["baseline_taus"]:
        spec = hippo.HippoSpec(hippo.LEGT, cfg["N"], tau=tau)
        sys_d = hippo.make_discrete(spec, 1.0)
        s = np.zeros(cfg["N"])
        for f in x:
            s = hippo.step(sys_d, s, f)
        name = f"single_tau_{tau:g}"
        for horizon in cfg["horizons"]:
            err, pred, truth = _reconstruction_mse(
                x, s, basis, tau, horizon, cfg["R"])
            mse[(horizon, name)] = err
            if collect_dumps:
                dumps.append((horizon, name, pred, truth))
    return mse, dumps


def run_multiscale(config, outdir):
    """Reconstruction error across horizons, multiscale vs fixed-window."""
    cfg = dict(DEFAULT_CONFIG)
    for key in config:
        if key not in cfg:
            raise ValueError(f"unknown config key {key!r}")
    cfg.update(config)
    if cfg["T"] < 2 or cfg["n_trials"] < 1:
        raise ValueError("need a positive trial count and signal length")

    systems = {f"multiscale_{v}": build(v, cfg["N"], cfg["M"],
                                        cfg["tau0"], cfg["eps"])
               for v in VARIANTS}
    n_trials = int(cfg["n_trials"])
    results = [None] * n_trials

    def work(i):
        return _run_trial(cfg, i, systems, collect_dumps=(i == 0))

    threads = int(cfg["threads"])
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(threads) as pool:
            for i, out in enumerate(pool.map(work, range(n_trials))):
                results[i] = out
    else:
        for i in range(n_trials):
            results[i] = work(i)

    system_names = ([f"multiscale_{v}" for v in VARIANTS]
                    + [f"single_tau_{tau:g}" for tau in cfg["baseline_taus"]])
    rows = []
    mse_table = {}
    for horizon in cfg["horizons"]:
        for name in system_names:
            vals = np.array([res[0][(horizon, name)] for res in results])
            mean = float(vals.mean())
            sem = float(vals.std(ddof=1) / np.sqrt(n_trials)) if n_trials > 1 else 0.0
            rows.append((horizon, name, mean, sem))
            mse_table[(horizon, name)] = mean
    files = {"mse": os.path.join(outdir, "mse_by_horizon.csv"),
             "reconstructions": os.path.join(outdir, "reconstructions.csv")}
    reports.write_csv(files["mse"], ["horizon", "system", "mse_mean", "mse_sem"],
                      rows)
    dump_rows = []
    s_grid = np.linspace(0.0, 1.0, cfg["R"])
    for horizon, name, pred, truth in results[0][1]:
        for s, p, tr in zip(s_grid, pred, truth):
            dump_rows.append((horizon, name, s, p, tr))
    reports.write_csv(files["reconstructions"],
                      ["horizon", "system", "s", "reconstruction", "truth"],
                      dump_rows)
    reports.write_run_log(os.path.join(outdir, "config.json"),
                          {k: list(v) if isinstance(v, tuple) else v
                           for k, v in cfg.items()})
    return {"config": cfg, "files": files, "mse": mse_table}
