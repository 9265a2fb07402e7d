import csv
import json
import math
import subprocess
import sys

import pytest

from dynlocal import cli

SLOW = {
    "model": {"n": 1000, "T": 1.0, "d": 1, "k": 2, "delta": 0.25, "r": {"a": 1.0, "p": 1.0}},
    "run": {"replicates": 10, "grid_spacing": 0.1, "lags": [0, 0.2, 0.5], "seed": 3, "mc_budget": 10000},
}


def _write(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _with(base, section, **kw):
    doc = json.loads(json.dumps(base))
    doc.setdefault(section, {}).update(kw)
    return doc


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


def test_simulate_row_count(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["simulate", "--config", _write(tmp_path, SLOW), "--out", str(out), "--threads", "1"])
    assert code == 0
    rows = _rows(out / "trajectories.csv")
    assert rows[0] == ["replicate", "t", "f"]
    assert len(rows) - 1 == 10 * 11
    side = json.loads((out / "trajectories.json").read_text())
    assert side["seeds"]["root"] == 3


def test_simulate_same_seed_identical_bytes(tmp_path):
    cfg = _write(tmp_path, SLOW)
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "a"), "--threads", "1"])
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "1"])
    a = (tmp_path / "a" / "trajectories.csv").read_bytes()
    assert a == (tmp_path / "b" / "trajectories.csv").read_bytes()
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "c"), "--threads", "1", "--seed", "4"])
    assert a != (tmp_path / "c" / "trajectories.csv").read_bytes()


def test_missing_key_exits_2_naming_it(tmp_path, capsys):
    doc = json.loads(json.dumps(SLOW))
    del doc["model"]["delta"]
    assert cli.main(["simulate", "--config", _write(tmp_path, doc)]) == 2
    assert "model.delta" in capsys.readouterr().err


@pytest.mark.parametrize("section,key,value,named", [
    ("model", "colour", 1, "model.colour"),
    ("run", "replicates", 0, "run.replicates"),
    ("model", "delta", 0.5, "model.delta"),
    ("run", "lags", [0, 0.15], "run.lags"),
    ("model", "functional", "subgraph", "model.pattern"),
])
def test_invalid_config_names_key(tmp_path, capsys, section, key, value, named):
    doc = _with(SLOW, section, **{key: value})
    assert cli.main(["simulate", "--config", _write(tmp_path, doc)]) == 2
    assert named in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["regime", "--config", str(bad)]) == 2
    assert cli.main(["regime", "--config", str(tmp_path / "missing.json")]) == 2


def test_constants_output(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["constants", "--config", _write(tmp_path, SLOW), "--out", str(out)]) == 0
    doc = json.loads((out / "constants.json").read_text())
    assert doc["kappa_tilde"][0] == pytest.approx(0.25, rel=0.01)
    assert doc["kappa_tilde"][1] == pytest.approx(0.5, rel=0.01)
    assert len(doc["kappa_tilde_stderr"]) == 2
    for entry, total in zip(doc["lambda"], doc["lambda_sum"]):
        assert abs(total - 1) < 1e-12
        assert abs(sum(entry["values"]) - 1) < 1e-12
    assert {"0", "inf"} <= {e["gamma"] for e in doc["lambda"] if isinstance(e["gamma"], str)}
    assert len(doc["config_sha256"]) == 64


def test_covariance_slow_schema(tmp_path):
    out = tmp_path / "out"
    doc = _with(SLOW, "run", replicates=40, normalization="empirical")
    assert cli.main(["covariance", "--config", _write(tmp_path, doc), "--out", str(out), "--threads", "1"]) == 0
    text = (out / "covariance.csv").read_text().splitlines()
    assert text[0].startswith("# config_sha256=")
    rows = _rows(out / "covariance.csv")
    assert rows[0] == ["lag", "theoretical", "empirical", "stderr", "regime"]
    assert [r[-1] for r in rows[1:]] == ["slow"] * 3
    assert float(rows[1][1]) == pytest.approx(1.0)
    assert 0.97 <= float(rows[1][2]) <= 1.03
    assert float(rows[2][1]) == pytest.approx(0.5 * math.exp(-0.2) + 0.5 * math.exp(-0.4), rel=1e-6)
    meta = json.loads((out / "covariance.json").read_text())
    assert meta["regime"] == "slow" and meta["gamma_finite_n"] == pytest.approx(1.0)


def test_covariance_moderate_uses_damping(tmp_path):
    out = tmp_path / "out"
    doc = _with(SLOW, "model", sigma={"b": 1.0, "q": 1.0})
    doc = _with(doc, "run", replicates=30, zeta_budget=20000)
    assert cli.main(["covariance", "--config", _write(tmp_path, doc), "--out", str(out), "--threads", "1"]) == 0
    rows = _rows(out / "covariance.csv")
    assert rows[1][-1] == "moderate"
    theo = float(rows[3][1])
    slow = 0.5 * math.exp(-0.5) + 0.5 * math.exp(-1.0)
    assert theo < slow


def test_fast_refusal_in_one_dimension(tmp_path, capsys):
    doc = _with(SLOW, "model", sigma={"b": 1.0, "q": 0.5})
    assert cli.main(["covariance", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "d(k-1)" in err and "d_k_minus_1_at_least_3" in err


def test_regime_report(tmp_path, capsys):
    doc = {"model": {"n": [1000, 10000], "T": 1.0, "d": 3, "k": 2, "delta": 0.25,
                     "r": {"a": 1.0, "p": 0.55}, "sigma": {"b": 1.0, "q": 0.5}}}
    assert cli.main(["regime", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["kind"] == "fast" and rep["violations"] == [] and rep["refusal"] is None
    assert set(rep["values"]) == {"1000", "10000"}
    doc["model"]["sigma"] = {"b": 2.0, "q": 0.55}
    cli.main(["regime", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")])
    rep = json.loads(capsys.readouterr().out)
    assert rep["kind"] == "moderate" and rep["beta"] == pytest.approx(4.0)


def test_single_n_required_for_simulation(tmp_path, capsys):
    doc = _with(SLOW, "model", n=[100, 200])
    assert cli.main(["simulate", "--config", _write(tmp_path, doc)]) == 2
    assert "model.n" in capsys.readouterr().err


@pytest.mark.parametrize("suite", ["geometry", "functional", "mecke"])
def test_verify_suites_pass(tmp_path, capsys, suite):
    doc = _with(SLOW, "run", mecke_reps=800)
    code = cli.main(["verify", suite, "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o")])
    lines = capsys.readouterr().out.splitlines()
    assert code == 0, lines
    assert lines and all(line.startswith("PASS ") for line in lines)
    rep = json.loads((tmp_path / "o" / f"verify_{suite}.json").read_text())
    assert rep["passed"] is True


def test_verify_equivalence(tmp_path, capsys):
    doc = {"model": {"n": 20, "T": 1.0, "d": 1, "k": 2, "delta": 0.25, "r": {"a": 1.0, "p": 0.0},
                     "sigma": {"b": 0.1, "q": 0.0}},
           "run": {"replicates": 400, "seed": 5}}
    code = cli.main(["verify", "equivalence", "--config", _write(tmp_path, doc), "--out", str(tmp_path / "o"),
                     "--threads", "1"])
    lines = capsys.readouterr().out.splitlines()
    assert code == 0, lines
    assert len(lines) == 4


def test_console_entry_point(tmp_path):
    cfg = _write(tmp_path, SLOW)
    res = subprocess.run([sys.executable, "-m", "dynlocal.cli", "regime", "--config", cfg,
                          "--out", str(tmp_path / "o")], capture_output=True, text=True, check=False)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["kind"] == "slow"
    res = subprocess.run([sys.executable, "-m", "dynlocal.cli", "simulate"], capture_output=True, text=True,
                         check=False)
    assert res.returncode != 0
