"""Associative memory over a continuous address space.

Each of d_model channels stores a function m_j(x) on x in [0, 1] as
coefficients in an orthonormal Legendre basis.  Writing applies the
minimum-norm coefficient update that moves m_j(x_key) toward a target
value (closed form: a bump proportional to the truncated reproducing
kernel at the key); reading evaluates the functions at a query address.

The recall harness wraps this bank with a fixed linear history encoder
and small learned heads that emit addresses, gates, and values, trained
end-to-end with the basis evaluation differentiable in the address.
"""

import os
from dataclasses import dataclass

import numpy as np

from . import hippo, nnkit, orthopoly, reports, signals

EPS_DEFAULT = 1e-6


@dataclass
class AssocMemoryBank:
    """Coefficient matrix C (d_model x n_assoc) over an address basis."""

    C: np.ndarray
    basis: orthopoly.OrthoBasis

    @classmethod
    def create(cls, d_model, n_assoc):
        return cls(C=np.zeros((d_model, n_assoc)),
                   basis=orthopoly.legendre_shifted(n_assoc))


def write(mem, x_key, y, g_write, eps=EPS_DEFAULT):
    """Minimum-norm write: returns a new bank with the updated coefficients.

    Per channel j the update is C[j] += alpha (y[j] - m_j(x_key)) k with
    k = phi(x_key) and alpha = g_write / (|k|^2 + eps), which is the
    smallest coefficient change achieving
    m_j(x_key) = (1 - g_write) m_j(x_key) + g_write y[j].
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] != mem.C.shape[0]:
        raise ValueError("value dimension does not match the bank")
    k = orthopoly.eval_basis(mem.basis, float(x_key))
    y_hat = mem.C @ k
    alpha = g_write / (k @ k + eps)
    return AssocMemoryBank(C=mem.C + alpha * np.outer(y - y_hat, k),
                           basis=mem.basis)


def read(mem, x_query):
    """Evaluate all channel functions at the query address."""
    return mem.C @ orthopoly.eval_basis(mem.basis, float(x_query))


def kernel(mem, x1, x2):
    """Truncated reproducing kernel K(x1, x2) = phi(x1)' phi(x2)."""
    return float(orthopoly.eval_basis(mem.basis, float(x1))
                 @ orthopoly.eval_basis(mem.basis, float(x2)))


# -- differentiable pieces ---------------------------------------------------


def basis_features(basis, x):
    """Differentiable basis evaluation phi(x) for a scalar address tensor."""
    val, der = orthopoly.eval_basis_and_deriv(basis, float(x.value))

    def bwd(grad):
        return (np.asarray(grad @ der),)

    return nnkit.Tensor.from_op(val, (x,), bwd)


DEFAULT_CONFIG = {
    "iterations": 20_000,
    "eval_every": 1000,
    "eval_episodes": 64,
    "final_eval_episodes": 512,
    "T": 12,
    "n_per_set": 12,
    "token_dim": 24,
    "d_model": 32,
    "n_hippo": 32,
    "hippo_timescale": 2.0,
    "n_assoc": 32,
    "gate_hidden": 256,
    "lr": 1e-3,
    "weight_decay": 0.0,
    "eps": EPS_DEFAULT,
    "seed": 0,
}


class AssocRecallModel:
    """History encoder + addressing/gating heads + associative bank."""

    def __init__(self, cfg, rng):
        d, n_h = cfg["d_model"], cfg["n_hippo"]
        spec = hippo.HippoSpec(hippo.LEGT, n_h, tau=cfg["hippo_timescale"])
        disc = hippo.make_discrete(spec, 1.0)
        self.A_d = nnkit.Tensor(disc.A_d.T)     # stored transposed for S @ A_d'
        self.b_d = nnkit.Tensor(disc.b_d)
        self.address_basis = orthopoly.legendre_shifted(cfg["n_assoc"])
        self.cfg = cfg
        flat = d * n_h
        self.w_in = nnkit.Linear(cfg["token_dim"], d, rng)
        self.key_head = nnkit.Linear(flat, 1, rng)
        self.query_head = nnkit.Linear(flat, 1, rng)
        h = cfg["gate_hidden"]
        self.write_gate = nnkit.Mlp([flat, h, h, 1],
                                    ["tanh", "tanh", "sigmoid"], rng,
                                    residual=True)
        self.out_gate = nnkit.Mlp([flat, h, h, 1],
                                  ["tanh", "tanh", "sigmoid"], rng,
                                  residual=True)
        self.value_map = nnkit.Linear(d, d, rng)
        self.w_out = nnkit.Linear(d, cfg["token_dim"], rng)

    def parameters(self):
        return (self.w_in.parameters() + self.key_head.parameters()
                + self.query_head.parameters() + self.write_gate.parameters()
                + self.out_gate.parameters() + self.value_map.parameters()
                + self.w_out.parameters())

    def run_episode(self, episode, collect=False):
        cfg = self.cfg
        d, n_h, n_a = cfg["d_model"], cfg["n_hippo"], cfg["n_assoc"]
        S = nnkit.Tensor(np.zeros((d, n_h)))
        C = nnkit.Tensor(np.zeros((d, n_a)))
        eps = cfg["eps"]
        loss_terms = []
        steps = []
        outputs = []
        for t, x in enumerate(episode.inputs):
            u = self.w_in(nnkit.Tensor(x))
            S = S @ self.A_d + nnkit.outer(u, self.b_d)
            flat = S.reshape(d * n_h)
            x_key = nnkit.sigmoid(self.key_head(flat))[0]
            x_query = nnkit.sigmoid(self.query_head(flat))[0]
            g_write = self.write_gate(flat)[0]
            g_out = self.out_gate(flat)[0]
            y = self.value_map(u)
            k = basis_features(self.address_basis, x_key)
            y_hat = C @ k
            alpha = g_write / ((k @ k) + eps)
            C = C + nnkit.outer((y - y_hat) * alpha, k)
            q = basis_features(self.address_basis, x_query)
            r = C @ q
            out = self.w_out(r) * g_out
            outputs.append(out.value.copy())
            diff = out - nnkit.Tensor(episode.targets[t])
            loss_terms.append((diff * diff).mean())
            if collect:
                steps.append((t, float(x_key.value), float(x_query.value),
                              float(g_write.value), float(g_out.value)))
        loss = loss_terms[0]
        for term in loss_terms[1:]:
            loss = loss + term
        loss = loss / len(loss_terms)
        info = {"outputs": np.array(outputs), "steps": steps,
                "memory": C.value.copy()}
        return loss, info


def recall_correct(outputs, episode, tokens):
    """Whether the final-step output decodes to the target B token."""
    out = outputs[-1]
    sims = tokens.set_b @ out
    return int(np.argmax(sims) == episode.meta["target_b"])


def _evaluate(model, tokens, cfg, n_episodes, stream_base):
    correct = 0
    for i in range(n_episodes):
        rng = signals.make_rng(cfg["seed"], stream=stream_base + i)
        ep = signals.assoc_recall_episode(tokens, rng, T=cfg["T"])
        _, info = model.run_episode(ep)
        correct += recall_correct(info["outputs"], ep, tokens)
    return correct / n_episodes


def run_assoc_recall(config, outdir):
    """Online training on the alternating-pairs recall task."""
    cfg = dict(DEFAULT_CONFIG)
    for key in config:
        if key not in cfg:
            raise ValueError(f"unknown config key {key!r}")
    cfg.update(config)
    if cfg["iterations"] < 1:
        raise ValueError("need at least one iteration")

    tokens = signals.AssocRecallTokens.sample(
        signals.make_rng(cfg["seed"], stream=1),
        n_per_set=cfg["n_per_set"], dim=cfg["token_dim"])
    model = AssocRecallModel(cfg, signals.make_rng(cfg["seed"], stream=2))
    opt = nnkit.AdamW(model.parameters(), lr=cfg["lr"],
                      weight_decay=cfg["weight_decay"])
    train_rng = signals.make_rng(cfg["seed"], stream=3)

    rows = []
    loss_acc, loss_n = 0.0, 0
    for it in range(int(cfg["iterations"])):
        ep = signals.assoc_recall_episode(tokens, train_rng, T=cfg["T"])
        opt.zero_grad()
        loss, _ = model.run_episode(ep)
        loss.backward()
        opt.step()
        loss_acc += float(loss.value)
        loss_n += 1
        if (it + 1) % int(cfg["eval_every"]) == 0 or it == cfg["iterations"] - 1:
            acc = _evaluate(model, tokens, cfg, int(cfg["eval_episodes"]),
                            stream_base=10_000)
            rows.append((it + 1, loss_acc / max(loss_n, 1), acc))
            loss_acc, loss_n = 0.0, 0

    held_out = _evaluate(model, tokens, cfg, int(cfg["final_eval_episodes"]),
                         stream_base=1_000_000)

    files = {"report": os.path.join(outdir, "training_report.csv"),
             "addresses": os.path.join(outdir, "addresses.csv"),
             "memory_functions": os.path.join(outdir, "memory_functions.csv"),
             "summary": os.path.join(outdir, "summary.csv")}
    reports.write_csv(files["report"],
                      ["iteration", "loss", "recall_accuracy"], rows)

    # Dump one held-out episode: addresses/gates per step and the memory
    # functions on an address grid before and after the final write.
    dump_rng = signals.make_rng(cfg["seed"], stream=1_000_000)
    ep = signals.assoc_recall_episode(tokens, dump_rng, T=cfg["T"])
    _, info = model.run_episode(ep, collect=True)
    reports.write_csv(files["addresses"],
                      ["step", "x_key", "x_query", "g_write", "g_out"],
                      info["steps"])
    grid = np.linspace(0.0, 1.0, 101)
    Phi = orthopoly.eval_basis(model.address_basis, grid)
    # Replay the episode through the non-differentiable bank to capture
    # the memory before and after the final (Write-step) update.
    bank = AssocMemoryBank.create(cfg["d_model"], cfg["n_assoc"])
    before = None
    for t, (_, x_key, _, g_write, _) in enumerate(info["steps"]):
        y = model.value_map(model.w_in(nnkit.Tensor(ep.inputs[t]))).value
        if t == len(info["steps"]) - 1:
            before = bank.C.copy()
        bank = write(bank, x_key, y, g_write, eps=cfg["eps"])
    mem_rows = []
    for j in range(cfg["d_model"]):
        for x, mb, ma in zip(grid, Phi @ before[j], Phi @ bank.C[j]):
            mem_rows.append((j, x, mb, ma))
    reports.write_csv(files["memory_functions"],
                      ["channel", "x", "before", "after"], mem_rows)
    reports.write_csv(files["summary"], ["metric", "value"],
                      [("held_out_recall_accuracy", held_out)])
    reports.write_run_log(os.path.join(outdir, "config.json"), cfg)
    return {"config": cfg, "files": files,
            "final": {"recall_accuracy": held_out,
                      "last_eval": rows[-1][2] if rows else None}}
