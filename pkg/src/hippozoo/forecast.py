"""Forecasting through history states: streaming second moments,
least-squares and reduced-rank forecast maps, and the induced metric on
histories.

Architecture (three finite-window history systems, order N):
  System 1 summarizes the window [t - H, t] (the forecast target, read
  H steps later as a summary of the "future");
  System 2 is driven by u(t) = System 1's reconstruction at the far end
  of its window (a delayed copy of the input) and summarizes [t - H - tau23, t - H];
  System 3 shares System 2's dynamics but is driven by the raw input, so
  at read time it summarizes [t - tau23, t].
A map T fit from System 2 states to System 1 states therefore forecasts
a future-window summary from a history summary, and applies to System 3
at inference time.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import hippo, numkit, orthopoly, reports, signals


@dataclass
class ForecastStats:
    """Running uncentered second moments of paired (x, y) samples."""

    sxx: np.ndarray
    syy: np.ndarray
    syx: np.ndarray
    count: int = 0

    @classmethod
    def create(cls, n, p):
        return cls(sxx=np.zeros((n, n)), syy=np.zeros((p, p)),
                   syx=np.zeros((p, n)))


def update_stats(stats, x, y):
    """Exact running means of x x', y y', y x'."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != stats.sxx.shape[0] or y.shape[0] != stats.syy.shape[0]:
        raise ValueError("sample dimensions changed mid-stream")
    stats.count += 1
    w = 1.0 / stats.count
    stats.sxx += w * (np.outer(x, x) - stats.sxx)
    stats.syy += w * (np.outer(y, y) - stats.syy)
    stats.syx += w * (np.outer(y, x) - stats.syx)
    return stats


WHITEN_FLOOR = 1e-8


@dataclass
class RRRMap:
    """Rank-constrained linear forecast map with its input-side projector."""

    T: np.ndarray
    rank: int
    P_x: np.ndarray
    floor_used: float
    singular_values: np.ndarray


def fit(stats, d, ridge=1e-6):
    """Reduced-rank regression of y on x from accumulated moments.

    Whitens x by the inverse symmetric square root of the (ridge-shifted,
    eigenvalue-floored) second moment, truncates the SVD of the whitened
    cross-covariance at rank d, and maps back.  d = min(n, p) reproduces
    plain least squares; the returned projector P_x satisfies
    T P_x = T and P_x^2 = P_x.
    """
    n = stats.sxx.shape[0]
    if stats.count < n:
        raise ValueError(f"need at least {n} samples, have {stats.count}")
    if d < 0:
        raise ValueError("rank must be nonnegative")
    eig = numkit.sym_eig(stats.sxx)
    lam = eig.values + ridge
    floor = WHITEN_FLOOR * lam.max()
    if ridge == 0.0 and lam.min() < floor:
        raise ValueError("degenerate covariance below floor with ridge = 0")
    lam = np.maximum(lam, floor)
    V = eig.vectors
    sqrt_inv = V @ (V / np.sqrt(lam)).T
    sqrt_fwd = V @ (V * np.sqrt(lam)).T

    Mw = stats.syx @ sqrt_inv          # whitened cross-covariance
    U, sv, W = numkit.svd(Mw)
    d = min(d, sv.shape[0])
    Ud, svd_d, Wd = U[:, :d], sv[:d], W[:, :d]
    T = (Ud * svd_d) @ Wd.T @ sqrt_inv
    P_x = sqrt_fwd @ Wd @ Wd.T @ sqrt_inv
    return RRRMap(T=T, rank=d, P_x=P_x, floor_used=floor, singular_values=sv)


def weighted_error(stats, T):
    """Training objective E|y - Tx|^2 evaluated from the moments."""
    return float(np.trace(stats.syy) - 2.0 * np.sum(T * stats.syx)
                 + np.sum((T @ stats.sxx) * T))


def history_metric(T, basis, lag_grid, top_k=3):
    """Quadratic form on histories induced by the forecast objective.

    Q = T'T acts on history coefficients; the lag-domain kernel
    K(tau, tau') = phi(tau)' Q phi(tau') shows which parts of the past
    the objective actually distinguishes.  Top eigenvectors of Q are
    decoded to lag functions on the grid.
    """
    T = np.asarray(T, dtype=float)
    Q = T.T @ T
    x = np.asarray(lag_grid, dtype=float)
    Phi = orthopoly.eval_basis(basis, x)
    kernel = Phi @ Q @ Phi.T
    eig = numkit.sym_eig(Q)
    idx = np.argsort(eig.values)[::-1][:top_k]
    eigenvalues = eig.values[idx]
    eigenfunctions = Phi @ eig.vectors[:, idx]
    return Q, kernel, (eigenvalues, eigenfunctions)


def dirichlet_energy(values, grid):
    """Mean squared finite-difference derivative of a sampled function."""
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    return float(np.mean((np.diff(values) / np.diff(grid)) ** 2))


DEFAULT_CONFIG = {
    "T": 20_000,
    "N": 64,
    "H_short": 4.0,
    "H_long": 32.0,
    "sys23_timescale": 32.0,
    "rank": 8,
    "rank_sweep": (0, 1, 2, 4, 8, 16, 32, 64),
    "ridge": 1e-6,
    "burn_in": None,            # defaults to 2 * (H + sys23 window)
    "seed": 0,
    "subtract_mean": False,
    # Enough grid points to resolve the top metric eigenfunctions, whose
    # highest-degree components oscillate ~N/2 times over the window.
    "lag_points": 257,
}


def _run_horizon(cfg, x, H):
    """Stream one horizon's three systems and accumulate (S2, S1) stats."""
    N = int(cfg["N"])
    tau23 = float(cfg["sys23_timescale"])
    spec1 = hippo.HippoSpec(hippo.LEGT, N, tau=H)
    spec23 = hippo.HippoSpec(hippo.LEGT, N, tau=tau23)
    sys1 = hippo.make_discrete(spec1, 1.0)
    sys23 = hippo.make_discrete(spec23, 1.0)
    # Reading System 1's window at its far end reproduces the input H ago.
    far_end = orthopoly.eval_basis(hippo.basis_for(spec1), 1.0)

    burn = cfg["burn_in"]
    if burn is None:
        burn = int(2 * (H + tau23))
    s1 = np.zeros(N)
    s2 = np.zeros(N)
    s3 = np.zeros(N)
    stats = ForecastStats.create(N, N)
    # S2 is driven by a delayed copy of the input, so S2(t) summarizes
    # [t - H - tau23, t - H] while S1(t) summarizes [t - H, t]: pairing
    # them at equal times regresses a future-window summary on a
    # history-window summary.
    delay = int(round(H))
    mean = float(np.mean(x)) if cfg["subtract_mean"] else 0.0
    u_err = []
    for t in range(len(x)):
        f = x[t] - mean
        s1 = hippo.step(sys1, s1, f)
        u = float(far_end @ s1)
        s2 = hippo.step(sys23, s2, u)
        s3 = hippo.step(sys23, s3, f)
        if t >= burn:
            u_err.append((u - (x[t - delay] - mean)) ** 2)
            update_stats(stats, s2, s1)
    lag_rmse = float(np.sqrt(np.mean(u_err))) if u_err else float("nan")
    return {"stats": stats, "s1": s1, "s3": s3, "spec1": spec1,
            "spec23": spec23, "lag_rmse": lag_rmse}


def run_forecast(config, outdir):
    """Fit forecast maps for both horizons and dump the induced metrics."""
    cfg = dict(DEFAULT_CONFIG)
    for key in config:
        if key not in cfg:
            raise ValueError(f"unknown config key {key!r}")
    cfg.update(config)
    if cfg["T"] < 4 * (cfg["H_long"] + cfg["sys23_timescale"]):
        raise ValueError("stream too short for the requested horizons")
    rng = signals.make_rng(cfg["seed"], stream=0)
    x, _ = signals.gp_rbf_mixture(int(cfg["T"]), rng)

    rows_sweep, rows_forecast, rows_memory, rows_eigen = [], [], [], []
    summary = []
    tau23 = float(cfg["sys23_timescale"])
    results = {}
    for label, H in (("short", float(cfg["H_short"])),
                     ("long", float(cfg["H_long"]))):
        out = _run_horizon(cfg, x, H)
        stats = out["stats"]
        rmap = fit(stats, int(cfg["rank"]), ridge=cfg["ridge"])
        for d in cfg["rank_sweep"]:
            sub = fit(stats, int(d), ridge=cfg["ridge"])
            rows_sweep.append((label, int(d), weighted_error(stats, sub.T)))
        basis23 = hippo.basis_for(out["spec23"])
        basis1 = hippo.basis_for(out["spec1"])
        lag_grid = np.linspace(0.0, 1.0, int(cfg["lag_points"]))
        Q, kernel, (eigvals, eigfuns) = history_metric(rmap.T, basis23, lag_grid)
        energy = dirichlet_energy(eigfuns[:, 0], lag_grid * tau23)
        # Decode the forecast of the future window and the predictive memory.
        s_future = rmap.T @ out["s3"]
        future_curve = orthopoly.eval_basis(basis1, lag_grid) @ s_future
        memory_curve = (orthopoly.eval_basis(basis23, lag_grid)
                        @ (rmap.P_x @ out["s3"]))
        t_end = len(x) - 1
        truth_future = np.interp(t_end + (1.0 - lag_grid) * H,
                                 np.arange(len(x)), x,
                                 right=float("nan"))
        truth_history = np.interp(t_end - lag_grid * tau23,
                                  np.arange(len(x)), x)
        for i, s in enumerate(lag_grid):
            rows_forecast.append((label, s, future_curve[i], truth_future[i]))
            rows_memory.append((label, s, memory_curve[i], truth_history[i]))
            rows_eigen.append((label, s * tau23, eigfuns[i, 0], eigfuns[i, 1],
                               eigfuns[i, 2]))
        summary.append((f"dirichlet_energy_{label}", energy))
        summary.append((f"lag_tracking_rmse_{label}", out["lag_rmse"]))
        summary.append((f"top_eigenvalue_{label}", float(eigvals[0])))
        results[label] = {"rmap": rmap, "stats": stats, "Q": Q,
                          "dirichlet_energy": energy,
                          "lag_rmse": out["lag_rmse"]}

    files = {name: os.path.join(outdir, f"{name}.csv")
             for name in ("rank_sweep", "forecasts", "predictive_memory",
                          "metric_eigenfunctions", "summary")}
    reports.write_csv(files["rank_sweep"],
                      ["horizon", "rank", "weighted_error"], rows_sweep)
    reports.write_csv(files["forecasts"],
                      ["horizon", "s", "forecast", "truth"], rows_forecast)
    reports.write_csv(files["predictive_memory"],
                      ["horizon", "s", "memory", "truth"], rows_memory)
    reports.write_csv(files["metric_eigenfunctions"],
                      ["horizon", "lag", "eig0", "eig1", "eig2"], rows_eigen)
    reports.write_csv(files["summary"], ["metric", "value"], summary)
    reports.write_run_log(os.path.join(outdir, "config.json"),
                          {k: list(v) if isinstance(v, tuple) else v
                           for k, v in cfg.items()})
    return {"config": cfg, "files": files, "results": results}
