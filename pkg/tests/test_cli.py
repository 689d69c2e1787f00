import json
import subprocess
import sys

import pytest

from arwave.cli import build_parser, main
from arwave.wavefield import read_grid_bytes


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_decompose_five(capsys):
    code, doc = run(capsys, "lattice", "decompose", "5")
    assert code == 0
    assert doc["N"] == 8 and len(doc["points"]) == 8
    assert (doc["mu4_num"], doc["mu4_den"]) == (-7, 25)


def test_not_representable(capsys):
    code, doc = run(capsys, "lattice", "decompose", "3")
    assert code == 1 and doc["error"] == "not_representable"


def test_rate(capsys):
    code, doc = run(capsys, "limits", "rate", "--eta", "0", "--y", "-1")
    assert code == 0 and doc["value"] == 1.0
    code, doc = run(capsys, "limits", "rate", "--eta", "0.5", "--y", "-2", "--oracle")
    assert doc["oracle"]["value"] == pytest.approx(doc["value"], abs=1e-8)
    code, doc = run(capsys, "limits", "rate", "--eta", "0", "--y", "1")
    assert doc["value"] == "inf"


def test_tail_and_gamma(capsys):
    code, doc = run(capsys, "limits", "tail", "--eta", "0", "--t", "3")
    assert doc["log_probability"] == pytest.approx(-4.0)
    code, doc = run(capsys, "limits", "gamma", "--eta", "0.2")
    assert doc["gamma_eigenvalues"] == pytest.approx(doc["expected_eigenvalues"], abs=1e-12)


def test_usage_errors(capsys):
    assert run(capsys, "lattice", "decompose", "5", "--bogus")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    code, doc = run(capsys, "limits", "rate", "--eta", "3", "--y", "-1")
    assert code == 2 and doc["error"] == "invalid_value"
    code, doc = run(capsys, "experiment", "--kind", "mean")
    assert code == 2 and doc["error"] == "usage_error"


def test_domain_error_exit_code(capsys):
    code, doc = run(capsys, "nodal", "restricted", "--n", "5", "--radius", "0.6")
    assert code == 1 and doc["error"] == "radius_out_of_range"


def test_nodal_and_chaos(capsys):
    code, doc = run(capsys, "nodal", "total", "--n", "65", "--seed", "2", "--grid", "128")
    assert code == 0 and set(doc) >= {"n", "seed", "m", "length", "segments", "config"}
    assert doc["m"] == 128 and doc["config"]["method"] == "hermite"
    code, doc = run(capsys, "chaos", "check-q4", "--n", "65", "--seed", "2", "--grid", "72")
    assert doc["rel_diff"] < 1e-9
    code, doc = run(capsys, "chaos", "summary", "--n", "65", "--seed", "2")
    assert len(doc["w"]) == 4


def test_search(capsys):
    code, doc = run(capsys, "lattice", "search", "--eta", "0", "--tol", "0.02", "--max", "3000", "--min-mult", "16")
    assert code == 0 and doc["levels"]
    assert all(abs(r["mu4"]) <= 0.02 and r["N"] >= 16 for r in doc["levels"])


def test_field_export(tmp_path, capsys):
    path = tmp_path / "grid.bin"
    code = main(["field", "export", "--n", "5", "--grid", "16", "--out", str(path)])
    capsys.readouterr()
    assert code == 0
    m, n, vals = read_grid_bytes(path.read_bytes())
    assert (m, n, vals.shape) == (16, 5, (16, 16))
    assert run(capsys, "field", "export", "--n", "5")[0] == 2


def test_experiment_roundtrip(tmp_path, capsys):
    out = tmp_path / "res.json"
    raw = tmp_path / "raw.csv"
    code = main(["experiment", "--kind", "variance", "--n", "65", "--trials", "500", "--seed", "7", "--out", str(out), "--raw", str(raw)])
    assert code == 0
    first = json.loads(out.read_text())
    assert first["config"]["seed"] == 7
    assert raw.read_text().splitlines()[0] == "trial,fourth_chaos"
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps(first["config"]))
    code, again = run(capsys, "experiment", "--config", str(conf), "--workers", "3")
    assert again == first
    # explicit flags override the file
    code, other = run(capsys, "experiment", "--config", str(conf), "--seed", "8")
    assert other["config"]["seed"] == 8 and other["config"]["trials"] == 500


def test_experiment_config_rejects_unknown_fields(tmp_path, capsys):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"kind": "variance", "n": 65, "colour": "red"}))
    assert run(capsys, "experiment", "--config", str(conf))[0] == 2


def _leaf_parsers(parser):
    for action in parser._actions:
        if hasattr(action, "choices") and isinstance(action.choices, dict):
            for sub in action.choices.values():
                yield from _leaf_parsers(sub)
            return
    yield parser


def test_help_lists_defaults():
    leaves = list(_leaf_parsers(build_parser()))
    assert len(leaves) == 11
    for p in leaves:
        text = p.format_help()
        for flag in ("--seed", "--workers", "--out", "--raw", "--config"):
            assert flag in text
        assert "(default: 0)" in text


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "arwave.cli", "limits", "rate", "--eta", "0", "--y", "-1"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["value"] == 1.0
