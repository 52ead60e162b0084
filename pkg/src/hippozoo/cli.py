"""Command-line entry point: one binary for the five experiments plus a
property-suite runner.

    hippozoo <subcommand> [--config FILE] [--set key=value ...] [--out DIR]

Config files are flat JSON objects; --set overrides individual keys with
JSON-scalar syntax (bare strings also accepted).  Unknown keys are
rejected.  The default output directory is $HIPPOZOO_OUT or ./runs.
Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
"""

import argparse
import json
import os
import sys
import traceback

import numpy as np

from . import assoc, forecast, multiscale, salience, volterra


class ConfigError(ValueError):
    pass


EXPERIMENTS = {
    "volterra": (volterra.run_volterra, volterra.DEFAULT_CONFIG),
    "selective-copy": (salience.run_selective_copy, salience.DEFAULT_CONFIG),
    "assoc-recall": (assoc.run_assoc_recall, assoc.DEFAULT_CONFIG),
    "multiscale": (multiscale.run_multiscale, multiscale.DEFAULT_CONFIG),
    "forecast": (forecast.run_forecast, forecast.DEFAULT_CONFIG),
}


def _coerce(key, value, default):
    """Coerce an override to the type of the default for that key."""
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        raise ConfigError(f"key {key!r} expects a boolean, got {value!r}")
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} expects a number, got {value!r}")
        if float(value) != int(value):
            raise ConfigError(f"key {key!r} expects an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r} expects a number, got {value!r}")
        return float(value)
    if isinstance(default, (tuple, list)):
        if not isinstance(value, (tuple, list)):
            raise ConfigError(f"key {key!r} expects a list, got {value!r}")
        return tuple(value)
    if default is None or isinstance(default, str):
        return value
    raise ConfigError(f"key {key!r} has unsupported default type")


def parse_config(defaults, path=None, overrides=()):
    """Merge a JSON config file and key=value overrides over the defaults."""
    merged = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        merged.update(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            merged[key] = json.loads(raw)
        except json.JSONDecodeError:
            merged[key] = raw                # bare string
    config = {}
    for key, value in merged.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        config[key] = _coerce(key, value, defaults[key])
    return config


# -- verify: fast invariant suite -------------------------------------------


def _verify_checks():
    """(name, callable) pairs; each raises AssertionError on failure."""
    from . import hippo, nnkit, numkit, orthopoly, signals

    def check_orthonormality():
        for basis in (orthopoly.legendre_shifted(32),
                      orthopoly.jeffreys_basis(32, 1e-3)):
            defect = orthopoly.orthonormality_defect(basis)
            assert defect < 1e-8, f"defect {defect:g}"

    def check_projection_oracle():
        spec = hippo.HippoSpec(hippo.LEGT, 8, tau=1.0)
        dt = 1e-3
        T = int(3.0 / dt)
        t_grid = dt * np.arange(T + 1)
        f = np.sin(2.0 * np.pi * t_grid)
        sys = hippo.make_discrete(spec, dt)
        s = np.zeros(spec.N)
        for k in range(T):
            s = hippo.step(sys, s, f[k])
        target = hippo.project_history_oracle(f, dt, spec, t=t_grid[-1])
        err = np.abs(s - target).max()
        assert err < 1e-2, f"projection error {err:g}"

    def check_warp_equivalence():
        from . import salience as sal
        spec = hippo.HippoSpec(hippo.LEGS, 12, tau=1.0)
        cont = hippo.make_hippo(spec)
        rng = signals.make_rng(123)
        g = rng.uniform(0.2, 2.0, size=50)
        f = rng.standard_normal(50)
        dt = 0.05
        s = np.zeros(spec.N)
        phi = 0.0
        for k in range(50):
            s = sal.salience_step(cont, s, f[k], g[k], dt)
            phi += g[k] * dt
        s_ref = np.zeros(spec.N)
        for k in range(50):
            sys = hippo.discretize(cont, g[k] * dt)
            s_ref = hippo.step(sys, s_ref, f[k])
        err = np.abs(s - s_ref).max()
        assert err < 1e-9, f"warp discrepancy {err:g}"

    def check_gradients():
        rng = signals.make_rng(7)
        net = nnkit.Mlp([5, 8, 1], ["tanh", "identity"], rng)
        x = rng.standard_normal(5)

        def loss_fn():
            out = net(nnkit.Tensor(x))
            return float((out * out).sum().value)

        for p in net.parameters():
            p.grad = None
        out = net(nnkit.Tensor(x))
        (out * out).sum().backward()
        fd = nnkit.finite_difference_grads(loss_fn, net.parameters())
        for p, g in zip(net.parameters(), fd):
            rel = np.abs(p.grad - g).max() / max(np.abs(g).max(), 1e-8)
            assert rel < 1e-4, f"gradient mismatch {rel:g}"

    def check_spectral_equivalence():
        sys = multiscale.build(multiscale.BASIC, 4, 4, tau0=4.0)
        rng = signals.make_rng(11)
        f = rng.standard_normal(20)
        state = multiscale.zero_state(sys)
        for v in f:
            state = multiscale.ms_step(sys, state, v, 1.0)
        aug = np.kron(sys.coupling.T, sys.hippo_sys.A)
        A_d, b_d = numkit.zoh_discretize(
            aug, sys.injection.reshape(-1, order="F"), 1.0)
        vec = np.zeros(16)
        for v in f:
            vec = A_d @ vec + b_d * v
        err = np.abs(state.S.reshape(-1, order="F") - vec).max()
        assert err < 1e-8, f"spectral vs vectorized {err:g}"

    def check_rrr_full_rank():
        rng = signals.make_rng(5)
        stats = forecast.ForecastStats.create(6, 6)
        M = rng.standard_normal((6, 6))
        for _ in range(200):
            x = rng.standard_normal(6)
            forecast.update_stats(stats, x, M @ x)
        rmap = forecast.fit(stats, 6, ridge=0.0)
        err = np.abs(rmap.T - M).max()
        assert err < 1e-6, f"full-rank RRR error {err:g}"

    def check_assoc_write():
        bank = assoc.AssocMemoryBank.create(3, 16)
        y = np.array([1.0, -2.0, 0.5])
        bank = assoc.write(bank, 0.3, y, g_write=1.0, eps=0.0)
        err = np.abs(assoc.read(bank, 0.3) - y).max()
        assert err < 1e-12, f"write constraint error {err:g}"

    return [
        ("basis orthonormality", check_orthonormality),
        ("history projection oracle", check_projection_oracle),
        ("salience warp equivalence", check_warp_equivalence),
        ("autodiff finite-difference check", check_gradients),
        ("multiscale spectral stepping", check_spectral_equivalence),
        ("full-rank reduced-rank regression", check_rrr_full_rank),
        ("associative write constraint", check_assoc_write),
    ]


def run_verify():
    ok = True
    for name, check in _verify_checks():
        try:
            check()
        except Exception as exc:          # report, keep going
            print(f"FAIL {name}: {exc}")
            ok = False
        else:
            print(f"PASS {name}")
    return ok


def run(argv=None):
    parser = argparse.ArgumentParser(prog="hippozoo", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for name in list(EXPERIMENTS) + ["verify"]:
        p = sub.add_parser(name)
        if name != "verify":
            p.add_argument("--config", default=None)
            p.add_argument("--set", dest="overrides", action="append",
                           default=[], metavar="KEY=VALUE")
            p.add_argument("--out", default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    if args.command == "verify":
        return 0 if run_verify() else 1

    runner, defaults = EXPERIMENTS[args.command]
    try:
        config = parse_config(defaults, args.config, args.overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = args.out or os.environ.get("HIPPOZOO_OUT", "runs")
    outdir = os.path.join(outdir, args.command)
    os.makedirs(outdir, exist_ok=True)
    try:
        runner(config, outdir)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    return 0


def main():
    raise SystemExit(run())


if __name__ == "__main__":
    main()
