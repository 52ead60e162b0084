"""Salience-modulated memory: a positive scalar g(t) multiplicatively
scales the history dynamics, ds/dt = g(t) [A s + b f].

For piecewise-constant g this is exactly a standard system run on the
warped time axis phi(t) = integral of g, which gives both the stepping
rule (a ZOH step of size g*dt) and the interpretability machinery: the
static history measure in warped time pushes forward to a g-reweighted
measure in real time, and linear readouts become explicit functionals
over real history.

The selective-copy harness trains a small network to emit g from the
current token and a pooled state summary, with per-slot linear readouts
during the write phase.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import hippo, nnkit, numkit, orthopoly, reports, signals


def salience_step(cont, s, f, g, dt):
    """One exact step of the g-scaled system (g constant over the step)."""
    if not (np.isfinite(g) and g > 0):
        raise ValueError("salience must be positive and finite")
    A_d, b_d = numkit.zoh_discretize(cont.A, cont.b, g * dt)
    return A_d @ np.asarray(s, dtype=float) + b_d * f


@dataclass(frozen=True)
class SalienceTrace:
    """Per-step salience values g[k] held constant on [k*dt, (k+1)*dt)."""

    g: np.ndarray
    dt: float

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("trace must be a nonempty vector")
        if not (np.all(np.isfinite(g)) and np.all(g > 0)):
            raise ValueError("salience values must be positive and finite")
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class WarpMap:
    """Piecewise-linear cumulative warp phi with its knot times."""

    times: np.ndarray
    phi: np.ndarray
    g: np.ndarray

    def phi_at(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.times[0] - 1e-12) or np.any(t > self.times[-1] + 1e-12):
            raise ValueError("time outside the recorded trace")
        return np.interp(t, self.times, self.phi)

    def g_at(self, t):
        """Left-continuous step lookup of the per-interval salience."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1,
                      0, self.g.size - 1)
        return self.g[idx]

    def inverse(self, tau):
        """phi^{-1}; well defined since g > 0 makes phi strictly increasing."""
        return np.interp(np.asarray(tau, dtype=float), self.phi, self.times)


def warp(trace):
    phi = np.concatenate([[0.0], np.cumsum(trace.g * trace.dt)])
    times = trace.dt * np.arange(trace.g.size + 1)
    return WarpMap(times=times, phi=phi, g=trace.g)


def _warped_weight(spec, tau):
    """Static history density of the family, as a function of warped lag."""
    tau = np.asarray(tau, dtype=float)
    if spec.family == hippo.LEGS:
        return np.exp(-tau / spec.tau) / spec.tau
    return np.where((tau >= 0) & (tau <= spec.tau), 1.0 / spec.tau, 0.0)


def induced_measure(spec, warpmap, t, grid):
    """Real-time history density at time t over past times ``grid``.

    Pushforward of the static warped-time measure: density at t0 equals
    omega(phi(t) - phi(t0)) * g(t0), so total mass over any real interval
    matches the static mass over its warped image.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(grid > t + 1e-12):
        raise ValueError("grid must lie in the past of t")
    tau_warped = warpmap.phi_at(t) - warpmap.phi_at(grid)
    return _warped_weight(spec, tau_warped) * warpmap.g_at(grid)


def output_functionals(W, spec, warpmap, t, grid):
    """Real-time functionals a linear readout applies to the history.

    ``W`` holds one readout row per output (shape (k, N) or (N,)); the
    value at past time t0 is sum_n W[k, n] P_n(coord) times the induced
    density factor, i.e. the weight the readout places on f(t0).
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    grid = np.asarray(grid, dtype=float)
    tau_warped = warpmap.phi_at(t) - warpmap.phi_at(grid)
    basis = hippo.basis_for(spec)
    if spec.family == hippo.LEGS:
        coord = np.exp(-tau_warped / spec.tau)
    else:
        coord = tau_warped / spec.tau
    vals = orthopoly.eval_basis(basis, coord) @ W.T
    factor = _warped_weight(spec, tau_warped) * warpmap.g_at(grid)
    return vals * factor[:, None]


# -- differentiable stepping -------------------------------------------------


class SalienceStepCache:
    """Discretized steps of the g-scaled system, memoized on quantized g.

    ``n_bins`` log-spaced bins cover [g_max/span, g_max]; n_bins = 0
    disables quantization and computes the exact exponential per call.
    Derivatives with respect to g are analytic: d/dg exp(g dt A) =
    dt A exp(g dt A) and d/dg b_d(g dt) = dt exp(g dt A) b.
    """

    def __init__(self, cont, dt, n_bins=256, g_max=2.0, span=1e4):
        self.cont = cont
        self.dt = float(dt)
        self.n_bins = int(n_bins)
        if self.n_bins:
            self.bin_values = np.geomspace(g_max / span, g_max, self.n_bins)
            self._log_lo = np.log(self.bin_values[0])
            self._log_step = (np.log(g_max) - self._log_lo) / (self.n_bins - 1)
        self._systems = {}

    def quantize(self, g):
        idx = int(round((np.log(max(g, self.bin_values[0])) - self._log_lo)
                        / self._log_step))
        return min(max(idx, 0), self.n_bins - 1)

    def system(self, g):
        """(g_used, A_d, b_d, A_d @ b) for the (possibly quantized) salience."""
        if not (np.isfinite(g) and g > 0):
            raise ValueError("salience must be positive and finite")
        if not self.n_bins:
            A_d, b_d = numkit.zoh_discretize(self.cont.A, self.cont.b,
                                             g * self.dt)
            return g, A_d, b_d, A_d @ self.cont.b
        idx = self.quantize(g)
        if idx not in self._systems:
            gq = self.bin_values[idx]
            A_d, b_d = numkit.zoh_discretize(self.cont.A, self.cont.b,
                                             gq * self.dt)
            self._systems[idx] = (gq, A_d, b_d, A_d @ self.cont.b)
        return self._systems[idx]


def salience_hippo_step(cache, S, u, g):
    """Differentiable batched step S <- S A_d' + u b_d' of the g-scaled system.

    S is (channels, N), u is (channels,), g is a scalar; all tensors.
    """
    _, A_d, b_d, Adb = cache.system(float(g.value))
    Y = S.value @ A_d.T
    out = Y + np.outer(u.value, b_d)
    A = cache.cont.A
    dt = cache.dt

    def bwd(grad):
        dS = grad @ A_d
        du = grad @ b_d
        dg = dt * (np.sum((grad @ A) * Y) + np.dot(grad @ Adb, u.value))
        return dS, du, np.asarray(dg)

    return nnkit.Tensor.from_op(out, (S, u, g), bwd)


# -- selective-copy harness --------------------------------------------------


DEFAULT_CONFIG = {
    "episodes": 20_000,
    "eval_every": 1000,
    "eval_episodes": 32,
    "token_dim": 32,
    "n_informative": 16,
    "n_informative_steps": 10,
    "n_uninformative_steps": 10,
    "d_model": 64,
    "N": 256,
    "pool_dim": 16,
    "hidden": 128,
    "g_max": 2.0,
    "gate_bias_init": -2.0,     # gate output bias at init; low start makes
                                # "ignore" the default and writes must earn
                                # their salience
    "lr": 1e-3,
    "weight_decay": 0.0,
    "clip_norm": 1.0,           # global gradient-norm clip; 0 disables
    "cache_bins": 256,
    "dt": 1.0,
    "seed": 0,
}


class SelectiveCopyModel:
    """Multi-channel salience-gated memory with per-slot linear readouts."""

    def __init__(self, cfg, rng):
        d, N = cfg["d_model"], cfg["N"]
        episode_len = cfg["n_informative_steps"] + cfg["n_uninformative_steps"] \
            + cfg["n_informative_steps"]
        # Memory forgetting timescale matched to the episode length.
        self.spec = hippo.HippoSpec(hippo.LEGS, N, tau=float(episode_len))
        self.cont = hippo.make_hippo(self.spec)
        self.cache = SalienceStepCache(self.cont, cfg["dt"],
                                       n_bins=cfg["cache_bins"],
                                       g_max=cfg["g_max"])
        self.cfg = cfg
        self.episode_len = episode_len
        self.w_in = nnkit.Linear(cfg["token_dim"], d, rng)
        bound = 1.0 / np.sqrt(N)
        self.w_pool = nnkit.parameter(
            rng.uniform(-bound, bound, size=(N, cfg["pool_dim"])))
        self.salience_net = nnkit.Mlp(
            [d + cfg["pool_dim"], cfg["hidden"], 1],
            ["softplus", ("scaled_sigmoid", cfg["g_max"])], rng)
        # Start the gate low and nearly input-independent so memory writes
        # have to earn their salience; the loss then separates informative
        # from uninformative inputs instead of gating everything in.
        gate_out = self.salience_net.layers[-1]
        gate_out.W.value = gate_out.W.value * 0.1
        gate_out.b.value = np.full_like(gate_out.b.value,
                                        cfg["gate_bias_init"])
        flat = d * N
        rbound = 1.0 / np.sqrt(flat)
        self.readouts = [
            nnkit.parameter(rng.uniform(-rbound, rbound,
                                        size=(cfg["token_dim"], flat)))
            for _ in range(cfg["n_informative_steps"])]

    def parameters(self):
        return (self.w_in.parameters() + [self.w_pool]
                + self.salience_net.parameters() + self.readouts)

    def run_episode(self, episode, S0=None):
        """Roll one episode; returns (loss, final state, per-step info)."""
        cfg = self.cfg
        d, N = cfg["d_model"], cfg["N"]
        S = nnkit.Tensor(np.zeros((d, N))) if S0 is None else nnkit.detach(S0)
        g_values = np.empty(len(episode.inputs))
        outputs = []
        loss_terms = []
        slot = 0
        for t, x in enumerate(episode.inputs):
            u = self.w_in(nnkit.Tensor(x))
            pooled = nnkit.tanh(S @ self.w_pool).mean(axis=0)
            g = self.salience_net(nnkit.concat([u, pooled]))[0]
            g_values[t] = float(g.value)
            S = salience_hippo_step(self.cache, S, u, g)
            if episode.phases[t] == signals.PHASE_WRITE:
                out = self.readouts[slot] @ S.reshape(d * N)
                outputs.append(out.value.copy())
                diff = out - nnkit.Tensor(episode.targets[t])
                loss_terms.append((diff * diff).mean())
                slot += 1
        loss = loss_terms[0]
        for term in loss_terms[1:]:
            loss = loss + term
        loss = loss / len(loss_terms)
        return loss, S, {"g": g_values, "outputs": np.array(outputs)}


def episode_accuracy(outputs, episode, tokens):
    """Fraction of write slots whose output is nearest the correct token."""
    order = episode.meta["order"]
    sims = outputs @ tokens.informative.T
    norms = np.linalg.norm(outputs, axis=1, keepdims=True)
    sims = sims / np.maximum(norms, 1e-12)
    return float(np.mean(np.argmax(sims, axis=1) == order))


def _evaluate(model, tokens, cfg, eval_seed_stream, burn_in=2):
    """Score held-out episodes in the streaming regime the model is
    trained in: state carries across consecutive episodes, with a few
    unscored burn-in episodes to reach the stationary state distribution.
    """
    accs, g_info, g_unin = [], [], []
    episodes = []
    S = None
    for i in range(cfg["eval_episodes"] + burn_in):
        rng = signals.make_rng(cfg["seed"], stream=eval_seed_stream + i)
        ep = signals.selective_copy_episode(
            tokens, rng, cfg["n_informative_steps"],
            cfg["n_uninformative_steps"])
        _, S, info = model.run_episode(ep, S0=S)
        if i < burn_in:
            continue
        accs.append(episode_accuracy(info["outputs"], ep, tokens))
        input_len = cfg["n_informative_steps"] + cfg["n_uninformative_steps"]
        inf_mask = ep.phases[:input_len] == signals.PHASE_INFORMATIVE
        g_input = info["g"][:input_len]
        g_info.append(float(g_input[inf_mask].mean()))
        g_unin.append(float(g_input[~inf_mask].mean()))
        episodes.append((ep, info))
    return (float(np.mean(accs)), float(np.mean(g_info)),
            float(np.mean(g_unin)), episodes)


def run_selective_copy(config, outdir):
    """Online training of the salience network on the copy task."""
    cfg = dict(DEFAULT_CONFIG)
    for key in config:
        if key not in cfg:
            raise ValueError(f"unknown config key {key!r}")
    cfg.update(config)
    if cfg["episodes"] < 1:
        raise ValueError("need at least one episode")

    tokens = signals.SelectiveCopyTokens.sample(
        signals.make_rng(cfg["seed"], stream=1),
        n_informative=cfg["n_informative"], dim=cfg["token_dim"])
    model = SelectiveCopyModel(cfg, signals.make_rng(cfg["seed"], stream=2))
    opt = nnkit.AdamW(model.parameters(), lr=cfg["lr"],
                      weight_decay=cfg["weight_decay"])
    train_rng = signals.make_rng(cfg["seed"], stream=3)

    rows = []
    carry = None
    loss_acc, loss_n = 0.0, 0
    final_eval = None
    for ep_idx in range(int(cfg["episodes"])):
        ep = signals.selective_copy_episode(
            tokens, train_rng, cfg["n_informative_steps"],
            cfg["n_uninformative_steps"])
        opt.zero_grad()
        loss, S, _ = model.run_episode(ep, S0=carry)
        loss.backward()
        if cfg["clip_norm"]:
            nnkit.clip_grad_norm(model.parameters(), cfg["clip_norm"])
        opt.step()
        carry = S
        loss_acc += float(loss.value)
        loss_n += 1
        if (ep_idx + 1) % int(cfg["eval_every"]) == 0 \
                or ep_idx == cfg["episodes"] - 1:
            acc, gi, gu, episodes = _evaluate(
                model, tokens, cfg, eval_seed_stream=10_000 + ep_idx + 1)
            rows.append((ep_idx + 1, loss_acc / max(loss_n, 1), acc, gi, gu))
            loss_acc, loss_n = 0.0, 0
            final_eval = episodes

    files = {"report": os.path.join(outdir, "training_report.csv"),
             "g_trace": os.path.join(outdir, "salience_trace.csv"),
             "measures": os.path.join(outdir, "induced_measures.csv"),
             "functionals": os.path.join(outdir, "output_functionals.csv")}
    reports.write_csv(files["report"],
                      ["episode", "train_loss", "eval_token_accuracy",
                       "mean_g_informative", "mean_g_uninformative"], rows)

    # Interpretability dumps from the first held-out evaluation episode.
    ep, info = final_eval[0]
    trace = SalienceTrace(g=info["g"], dt=cfg["dt"])
    wmap = warp(trace)
    T_ep = len(ep.inputs)
    reports.write_csv(files["g_trace"], ["t", "g", "phase"],
                      [(t, float(info["g"][t]), int(ep.phases[t]))
                       for t in range(T_ep)])
    grid = (np.arange(T_ep) + 0.5) * cfg["dt"]
    measure_rows = []
    input_len = cfg["n_informative_steps"] + cfg["n_uninformative_steps"]
    for t_eval in (input_len, T_ep):
        dens = induced_measure(model.spec, wmap, float(t_eval),
                               grid[grid <= t_eval])
        for t0, rho in zip(grid[grid <= t_eval], dens):
            measure_rows.append((t_eval, t0, rho))
    reports.write_csv(files["measures"], ["t_eval", "t_past", "density"],
                      measure_rows)

    # Per-slot functional: project the slot readout onto its target token
    # on the output side and onto that token's channel pattern on the
    # input side, leaving one row over the memory coefficients.
    n_slots = cfg["n_informative_steps"]
    func_rows = []
    order = ep.meta["order"]
    W_in = model.w_in.W.value
    input_grid = grid[:input_len]
    for k in range(n_slots):
        target = tokens.informative[order[k]]
        w_full = (target @ model.readouts[k].value).reshape(
            cfg["d_model"], cfg["N"])
        row = (W_in @ target) @ w_full
        t_state = input_len + k + 1          # time of the slot's readout
        F = output_functionals(row, model.spec, wmap, float(t_state),
                               input_grid)[:, 0]
        for t0, val in zip(input_grid, F):
            func_rows.append((k, t0, val))
    reports.write_csv(files["functionals"], ["slot", "t_past", "functional"],
                      func_rows)
    reports.write_run_log(os.path.join(outdir, "config.json"), cfg)
    final = rows[-1]
    return {"config": cfg, "files": files, "final": {
        "train_loss": final[1], "eval_token_accuracy": final[2],
        "mean_g_informative": final[3], "mean_g_uninformative": final[4]}}
