import json
import os

import pytest

from hippozoo import cli


DEFAULTS = {"n": 4, "x": 1.5, "flag": False, "name": "abc",
            "items": (1.0, 2.0), "opt": None}


def test_parse_config_defaults_untouched():
    assert cli.parse_config(DEFAULTS) == {}


def test_parse_config_overrides_typed():
    out = cli.parse_config(DEFAULTS, overrides=[
        "n=7", "x=2", "flag=true", "name=hello", "items=[3, 4, 5]"])
    assert out == {"n": 7, "x": 2.0, "flag": True, "name": "hello",
                   "items": (3.0, 4.0, 5.0)}
    assert isinstance(out["x"], float)


def test_parse_config_bare_string():
    assert cli.parse_config(DEFAULTS, overrides=["name=plain"]) \
        == {"name": "plain"}


def test_parse_config_rejects_bad_values():
    with pytest.raises(cli.ConfigError):
        cli.parse_config(DEFAULTS, overrides=["n=1.5"])
    with pytest.raises(cli.ConfigError):
        cli.parse_config(DEFAULTS, overrides=["flag=1"])
    with pytest.raises(cli.ConfigError):
        cli.parse_config(DEFAULTS, overrides=["x=oops"])
    with pytest.raises(cli.ConfigError):
        cli.parse_config(DEFAULTS, overrides=["unknown=1"])
    with pytest.raises(cli.ConfigError):
        cli.parse_config(DEFAULTS, overrides=["justakey"])


def test_parse_config_file_and_override_precedence(tmp_path):
    path = os.path.join(tmp_path, "cfg.json")
    with open(path, "w") as fh:
        json.dump({"n": 9, "x": 0.25}, fh)
    out = cli.parse_config(DEFAULTS, path=path, overrides=["x=0.5"])
    assert out == {"n": 9, "x": 0.5}


def test_parse_config_file_errors(tmp_path):
    with pytest.raises(cli.ConfigError):
        cli.parse_config(DEFAULTS, path=os.path.join(tmp_path, "missing.json"))
    bad = os.path.join(tmp_path, "bad.json")
    with open(bad, "w") as fh:
        fh.write("{nope")
    with pytest.raises(cli.ConfigError):
        cli.parse_config(DEFAULTS, path=bad)
    arr = os.path.join(tmp_path, "arr.json")
    with open(arr, "w") as fh:
        fh.write("[1, 2]")
    with pytest.raises(cli.ConfigError):
        cli.parse_config(DEFAULTS, path=arr)


def test_cli_usage_errors():
    assert cli.run([]) == 2
    assert cli.run(["not-a-command"]) == 2


def test_cli_unknown_config_key_exits_2(tmp_path, capsys):
    code = cli.run(["volterra", "--set", "bogus=1",
                    "--out", str(tmp_path)])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_cli_verify_passes(capsys):
    assert cli.run(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.count("PASS") == len(cli._verify_checks())


def test_cli_runs_experiment(tmp_path):
    code = cli.run(["volterra", "--set", "T=200", "--set", "N=8",
                    "--set", "mlp_hidden=8", "--set", "trailing_window=100",
                    "--out", str(tmp_path)])
    assert code == 0
    outdir = os.path.join(tmp_path, "volterra")
    for name in ("cumulative_error.csv", "inferred_kernel.csv",
                 "true_kernel.csv", "summary.csv", "config.json"):
        assert os.path.exists(os.path.join(outdir, name))
    with open(os.path.join(outdir, "config.json")) as fh:
        cfg = json.load(fh)
    assert cfg["T"] == 200 and cfg["N"] == 8


def test_cli_config_file_round_trip(tmp_path):
    # The emitted config.json reproduces the run when fed back in.
    first = os.path.join(tmp_path, "a")
    code = cli.run(["multiscale", "--set", "n_trials=1", "--set", "T=300",
                    "--set", "N=6", "--set", "M=8",
                    "--set", "horizons=[10.0, 50.0]",
                    "--set", "baseline_taus=[20.0]", "--set", "R=8",
                    "--out", first])
    assert code == 0
    cfg_path = os.path.join(first, "multiscale", "config.json")
    second = os.path.join(tmp_path, "b")
    assert cli.run(["multiscale", "--config", cfg_path, "--out", second]) == 0
    with open(os.path.join(first, "multiscale", "mse_by_horizon.csv"), "rb") as fh:
        a = fh.read()
    with open(os.path.join(second, "multiscale", "mse_by_horizon.csv"), "rb") as fh:
        b = fh.read()
    assert a == b
