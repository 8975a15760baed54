import json

import numpy as np
import pytest

from sackersell.cli import SystemFileError, load_system, main, system_to_dict
from sackersell.systems import builtin

MY1960_FILE = {
    "type": "linear",
    "dim": 2,
    "label": "my1960",
    "entries": [
        ["-1+1.5*cos(t)^2", "1-1.5*cos(t)*sin(t)"],
        ["-1-1.5*cos(t)*sin(t)", "-1+1.5*sin(t)^2"],
    ],
}


def _write(tmp_path, doc, name="sys.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_load_matches_builtin(tmp_path):
    sys = load_system(_write(tmp_path, MY1960_FILE))
    ref = builtin("my1960")
    for t in np.linspace(0, 10, 17):
        np.testing.assert_allclose(sys(t), ref(t), atol=1e-15)


def test_dimension_mismatch_is_reported_with_path(tmp_path):
    doc = dict(MY1960_FILE, entries=MY1960_FILE["entries"] + [["0", "0"]])
    with pytest.raises(SystemFileError) as info:
        load_system(_write(tmp_path, doc))
    assert info.value.path == "$.entries"


def test_schema_violation_cites_path(tmp_path):
    with pytest.raises(SystemFileError) as info:
        load_system(_write(tmp_path, {"type": "linear", "dim": 2, "entries": [["1", 2], ["0", "0"]]}))
    assert info.value.path == "$.entries[0][1]"


def test_parse_error_reports_offset(tmp_path):
    doc = dict(MY1960_FILE, entries=[["-1 +* t", "0"], ["0", "-1"]])
    with pytest.raises(SystemFileError) as info:
        load_system(_write(tmp_path, doc))
    assert info.value.path == "$.entries[0][0]"
    assert "offset 4" in str(info.value)


def test_sampled_system_interpolates(tmp_path):
    doc = {"type": "linear", "dim": 1, "samples": {"times": [0.0, 2.0], "matrices": [[[-1.0]], [[-3.0]]]}}
    sys = load_system(_write(tmp_path, doc))
    assert sys(1.0)[0, 0] == pytest.approx(-2.0)
    assert sys(5.0)[0, 0] == pytest.approx(-3.0)


def test_nonlinear_round_trip(tmp_path):
    doc = {"type": "nonlinear", "dim": 2, "label": "f", "rhs": ["-x1 + x2^2", "-2*x2*sin(t)"]}
    sys = load_system(_write(tmp_path, doc))
    again = load_system(_write(tmp_path, system_to_dict(sys), "again.json"))
    x = np.array([0.3, -0.7])
    np.testing.assert_allclose(again.f(1.2, x), sys.f(1.2, x), rtol=1e-14)


@pytest.mark.parametrize("name", ["my1960", "scalar_decay", "cg_reduced", "triangular_demo"])
def test_builtin_round_trip(tmp_path, name):
    sys = builtin(name)
    again = load_system(_write(tmp_path, system_to_dict(sys)))
    probe = np.array([0.4, -0.2])[: sys.dim]
    for t in [0.0, 1.7, 9.0]:
        np.testing.assert_allclose(again.f(t, probe), sys.f(t, probe), rtol=1e-13, atol=1e-15)


def test_spectrum_json(capsys):
    code, out, _ = run(capsys, "spectrum", "my1960", "--no-timestamp")
    assert code == 0
    doc = json.loads(out)
    got = sorted(doc["result"]["intervals"])
    assert np.allclose(got, [[-1, -1], [0.5, 0.5]], atol=0.05)
    assert doc["config"]["horizon"] == 100.0 and doc["config"]["seed"] == 0
    assert "timestamp" not in doc


def test_spectrum_json_output_reloads(capsys, tmp_path):
    out_path = tmp_path / "out.json"
    assert run(capsys, "spectrum", "scalar_decay", "--output", str(out_path))[0] == 0
    doc = json.loads(out_path.read_text())
    assert "timestamp" in doc
    sys = load_system(_write(tmp_path, doc["system"], "reloaded.json"))
    assert sys(0.0)[0, 0] == -1.0


def test_spectrum_csv_and_gamma_range(capsys):
    code, out, _ = run(capsys, "spectrum", "scalar_decay", "--format", "csv", "--gamma-range", "-3", "1")
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "gamma,verdict,rank,K,alpha"
    assert min(float(l.split(",")[0]) for l in lines[1:]) <= -3.0


def test_dichotomy_subcommand(capsys):
    code, out, _ = run(capsys, "dichotomy", "my1960", "--gamma", "-2", "--no-timestamp")
    assert code == 0
    res = json.loads(out)["result"]
    assert res["verdict"] == "certified" and res["rank"] == 0


def test_simulate_csv(capsys):
    code, out, _ = run(capsys, "simulate", "scalar_decay", "--x0", "1", "--T", "1", "--points", "11")
    assert code == 0
    rows = [l.split(",") for l in out.splitlines()]
    assert rows[0] == ["t", "x1"] and len(rows) == 12
    assert float(rows[-1][1]) == pytest.approx(np.exp(-1.0), abs=1e-8)


def test_simulate_escape_warns(capsys):
    code, out, err = run(capsys, "simulate", "scalar_decay", "--param", "lambda=2", "--x0", "1", "--T", "20")
    assert code == 0 and "escaped" in err


def test_params_parsed_as_json(capsys):
    code, out, _ = run(capsys, "dichotomy", "scalar_decay", "--param", "lambda=-2", "--no-timestamp")
    assert code == 0
    assert json.loads(out)["result"]["alpha"] == pytest.approx(1.8, abs=0.05)


def test_nmyc_check(capsys):
    code, out, _ = run(capsys, "nmyc-check", "triangular_demo", "--paths", "2", "--no-timestamp")
    assert code == 0
    doc = json.loads(out)
    assert doc["hypotheses"]["passed"] and doc["stability"]["passed"]
    assert doc["config"]["paths"] == 2


def test_examples(capsys):
    code, out, _ = run(capsys, "examples")
    assert code == 0
    listed = [l.split()[0] for l in out.splitlines() if l.startswith("  ")]
    assert sum(n in listed for n in ["my1960", "scalar_decay", "triangular_demo", "cg_field", "cg_reduced", "my1960_exact_fundamental"]) == 6


def test_experiment_text_output(capsys, monkeypatch):
    monkeypatch.setenv("NO_COLOR", "1")
    code, out, _ = run(capsys, "experiment", "cg-attractor", "--param", "lambda=-1", "--param", "z0s=[1]")
    assert code == 0
    assert "expected {-1}" in out and "measured" in out
    assert "\033[" not in out


def test_experiment_assertion_failure_exit_code(capsys, monkeypatch):
    from sackersell import cli
    from sackersell.nmyc import ExperimentReport

    failing = ExperimentReport("shift-law", False, [{"quantity": "q", "expected": 0, "measured": 1, "ok": False, "basis": "law"}], {})
    monkeypatch.setattr(cli, "run_experiment", lambda *a, **k: failing)
    code, out, _ = run(capsys, "experiment", "shift-law")
    assert code == 1
    assert "FAIL" in out


def test_experiment_json_is_deterministic(capsys):
    outs = [run(capsys, "experiment", "my1960-counterexample", "--format", "json", "--no-timestamp")[1] for _ in range(2)]
    assert outs[0] == outs[1]
    assert json.loads(outs[0])["report"]["passed"]


def test_config_file_precedence(capsys, tmp_path):
    cfg = _write(tmp_path, {"horizon": 60.0, "seed": 3}, "cfg.json")
    code, out, _ = run(capsys, "spectrum", "scalar_decay", "--config", cfg, "--horizon", "80", "--no-timestamp")
    assert code == 0
    c = json.loads(out)["config"]
    assert c["horizon"] == 80.0 and c["seed"] == 3


@pytest.mark.parametrize(
    "argv",
    [
        ["bogus"],
        ["spectrum", "my1960", "--resolution", "abc"],
        ["experiment", "nope"],
        ["simulate", "scalar_decay", "--T", "1"],
    ],
)
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["spectrum", "nosuch"],
        ["spectrum"],
        ["spectrum", "my1960", "--horizon", "-5"],
        ["spectrum", "--file", "/nonexistent.json"],
        ["dichotomy", "triangular_demo"],
        ["simulate", "my1960", "--x0", "1", "--T", "1"],
        ["nmyc-check", "my1960_exact_fundamental"],
    ],
)
def test_input_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 3
    assert err.startswith("input error")


def test_bad_file_exit_code(capsys, tmp_path):
    path = _write(tmp_path, '{"type": "linear", "dim": 1, "entries": [["ln(-1"]]}')
    assert run(capsys, "spectrum", "--file", path)[0] == 3


def test_numerical_failure_exit_code(capsys, tmp_path):
    path = _write(tmp_path, {"type": "nonlinear", "dim": 1, "rhs": ["sqrt(x1)"]})
    code, _, err = run(capsys, "simulate", "--file", path, "--x0", "-1", "--T", "1")
    assert code == 4
    assert err.startswith("numerical error")


def test_spectrum_doubling_flag(capsys):
    code, out, _ = run(capsys, "spectrum", "scalar_decay", "--check-doubling", "--no-timestamp")
    assert code == 0
    assert json.loads(out)["horizon_doubling"]["consistent"]
