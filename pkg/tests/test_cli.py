"""Command-line interface: config parsing, exit codes, artifacts, and
determinism.  All invocations go through main(argv) in-process."""

import json

import pytest

from landaulab.cli import (
    ConfigError,
    DEFAULTS,
    load_config,
    main,
    parse_config_text,
)


def run_cli(tmp_path, *argv):
    out = tmp_path / "out"
    return main([*argv, "--out", str(out)]), out


def test_parse_config_text_roundtrip():
    cfg = parse_config_text("n = 16\ngamma = 0.5\n# comment\nmethod = imex\n")
    assert cfg["n"] == 16
    assert cfg["gamma"] == 0.5
    assert cfg["method"] == "imex"


def test_parse_config_rejects_unknown_key():
    with pytest.raises(ConfigError):
        parse_config_text("grid_points = 16\n")


def test_parse_config_rejects_bad_value():
    with pytest.raises(ConfigError):
        parse_config_text("n = twelve\n")


def test_load_config_quick_overrides(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("n = 32\n")
    cfg = load_config(str(p), quick=True, seed=5)
    assert cfg["n"] == 12
    assert cfg["seed"] == 5


def test_dump_defaults(capsys):
    assert main(["--dump-defaults"]) == 0
    text = capsys.readouterr().out
    parsed = parse_config_text(text)
    for key in DEFAULTS:
        assert key in parsed


def test_help_exits_zero():
    assert main(["--help"]) == 0


def test_unknown_command_exits_two():
    assert main(["frobnicate"]) == 2


def test_kernel_check_quick(tmp_path):
    code, out = run_cli(tmp_path, "kernel-check", "--quick", "--seed", "3")
    assert code == 0
    report = json.loads((out / "kernel_check.json").read_text())
    assert report["verdict"] == "pass"
    assert (out / "j_alpha_probes.csv").exists()


def test_spectrum_quick_and_determinism(tmp_path):
    code, out = run_cli(tmp_path, "spectrum", "--quick", "--seed", "11")
    assert code == 0
    rep1 = json.loads((out / "spectrum.json").read_text())
    assert rep1["metrics"]["lambda0"] > 0.0
    assert rep1["metrics"]["null_count"] == 5
    code2, out2 = run_cli(tmp_path / "again", "spectrum", "--quick", "--seed", "11")
    rep2 = json.loads((out2 / "spectrum.json").read_text())
    assert rep1["metrics"]["lambda0"] == rep2["metrics"]["lambda0"]


def test_spectrum_dense_guard_exits_two(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("n = 64\n")
    code = main(["spectrum", "--config", str(p), "--out", str(tmp_path / "out")])
    assert code == 2


def test_bad_weight_config_exits_two(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("weight_kind = stretched\nweight_r = 0.9\nweight_s = 2.0\nweight_p = 2.0\n")
    code = main(["dissipativity", "--config", str(p), "--out", str(tmp_path / "out"), "--quick"])
    assert code == 2


def test_evolve_equilibrium_flat_trace(tmp_path):
    p = tmp_path / "cfg.txt"
    p.write_text("init = equilibrium\nt_end = 0.2\nn_out = 5\n")
    code = main(["evolve", "--config", str(p), "--out", str(tmp_path / "out"), "--quick"])
    assert code == 0
    rep = json.loads((tmp_path / "out" / "evolve.json").read_text())
    assert rep["verdict"] == "pass"
    assert (tmp_path / "out" / "trace.csv").exists()
