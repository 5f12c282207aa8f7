import json
import os
import subprocess
import sys

import numpy as np
import pytest

from mixscope.cli import main
from mixscope.mixer import read_observation

DATA = os.path.join(os.path.dirname(__file__), "data")
POPULATION = os.path.join(DATA, "population.json")


@pytest.fixture
def trace_file(tmp_path, rng):
    from conftest import random_trace_csv

    p = tmp_path / "trace.csv"
    p.write_text(random_trace_csv(rng, 1000, 12, 9))
    return p


def run(*argv):
    return main([str(a) for a in argv])


def test_usage_errors_exit_one(tmp_path, capsys):
    assert run() == 1
    assert run("mix", tmp_path / "t.csv", "--out", tmp_path) == 1  # no mix kind
    assert run("mix", tmp_path / "t.csv", "--threshold", "0", "--out", tmp_path) == 1
    assert run("frobnicate") == 1
    assert "error" in capsys.readouterr().err.lower()


def test_missing_file_exits_two(tmp_path):
    assert run("ingest", tmp_path / "absent.csv") == 2
    assert run("attack", "--u", tmp_path / "U.csv", "--y", tmp_path / "Y.csv", "--out", tmp_path / "P.csv") == 2


def test_malformed_trace_exits_one(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("timestamp,sender,receiver\n0,a,x\nnope,b,y\n")
    assert run("ingest", p) == 1
    assert "line 3" in capsys.readouterr().err


def test_ingest_top_k(trace_file, tmp_path, capsys):
    out = tmp_path / "norm.csv"
    assert run("ingest", trace_file, "--top-k", 3, "--out", out) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["events"] == 1000 and info["after_top_k"]["senders"] == 3
    assert out.read_text().startswith("timestamp,sender,receiver\n")


def test_threshold_mix_rounds_sum_to_t(trace_file, tmp_path):
    assert run("mix", trace_file, "--threshold", 100, "--out", tmp_path / "m") == 0
    obs = read_observation(tmp_path / "m" / "U.csv", tmp_path / "m" / "Y.csv")
    assert obs.rho == 10
    assert (obs.U.sum(axis=1) == 100).all() and (obs.Y.sum(axis=1) == 100).all()
    rounds = np.loadtxt(tmp_path / "m" / "rounds.csv", dtype=np.int64)
    assert len(rounds) == 1000 and rounds.max() == 9


def test_timed_mix_conserves(trace_file, tmp_path):
    assert run("mix", trace_file, "--timed", 3600, "--out", tmp_path / "m") == 0
    obs = read_observation(tmp_path / "m" / "U.csv", tmp_path / "m" / "Y.csv")
    np.testing.assert_array_equal(obs.U.sum(axis=1), obs.Y.sum(axis=1))


def test_synth_attack_is_reproducible(tmp_path):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert run("synth", POPULATION, "--format", "obs", "--out", d) == 0
        assert run("attack", "--u", d / "U.csv", "--y", d / "Y.csv", "--out", d / "P_hat.csv") == 0
        outs.append((d / "P_hat.csv").read_bytes())
    assert outs[0] == outs[1]
    P = np.loadtxt(tmp_path / "run0" / "P_hat.csv", delimiter=",")
    truth = np.loadtxt(tmp_path / "run0" / "profiles.csv", delimiter=",")
    assert np.abs(P - truth).max() < 0.1


def test_seed_env_override(tmp_path, monkeypatch):
    assert run("synth", POPULATION, "--rho", 50, "--format", "obs", "--out", tmp_path / "a") == 0
    monkeypatch.setenv("MIXSCOPE_SEED", "8")
    assert run("synth", POPULATION, "--rho", 50, "--format", "obs", "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "U.csv").read_bytes() != (tmp_path / "b" / "U.csv").read_bytes()
    monkeypatch.setenv("MIXSCOPE_SEED", "not-a-number")
    assert run("synth", POPULATION, "--rho", 50, "--out", tmp_path / "c") == 1


def test_synth_trace_round_trips_through_timed_mix(tmp_path):
    d = tmp_path / "s"
    assert run("synth", POPULATION, "--rho", 200, "--round-seconds", 10, "--out", d) == 0
    assert run("mix", d / "trace.csv", "--timed", 10, "--out", tmp_path / "m") == 0
    a = read_observation(d / "U.csv", d / "Y.csv")
    b = read_observation(tmp_path / "m" / "U.csv", tmp_path / "m" / "Y.csv")
    from mixscope.trace import read_trace

    # reading the trace back interns receivers by first appearance
    order = [int(name[1:]) for name in read_trace(d / "trace.csv").receiver_names]
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.Y[:, order], b.Y)


def test_diagnose_writes_reports(tmp_path):
    d = tmp_path / "s"
    assert run("synth", POPULATION, "--rho", 300, "--out", d) == 0
    assert run("mix", d / "trace.csv", "--timed", 1, "--out", tmp_path / "m") == 0
    out = tmp_path / "diag"
    rc = run("diagnose", "--u", tmp_path / "m" / "U.csv", "--y", tmp_path / "m" / "Y.csv", "--trace", d / "trace.csv",
             "--rounds", tmp_path / "m" / "rounds.csv", "--pmf", "poisson", "--out", out)
    assert rc == 0
    for name in ("covariance.csv", "histogram.csv", "spread.csv", "diagnostics.json"):
        assert (out / name).exists()
    summary = json.loads((out / "diagnostics.json").read_text())
    assert set(summary["covariance"]["values"]) >= {"cov_k_k", "cov_k2_mn"}
    assert run("diagnose", "--u", tmp_path / "m" / "U.csv", "--trace", d / "trace.csv", "--out", out) == 1


def _close(a, b, path="$"):
    if isinstance(a, dict):
        assert a.keys() == b.keys(), path
        for k in a:
            _close(a[k], b[k], f"{path}.{k}")
    elif isinstance(a, list):
        assert len(a) == len(b), path
        for i, (x, y) in enumerate(zip(a, b)):
            _close(x, y, f"{path}[{i}]")
    elif isinstance(a, float) and isinstance(b, (int, float)):
        assert a == pytest.approx(b, rel=1e-9, abs=1e-15), path
    else:
        assert a == b, path


def test_evaluate_matches_golden_report(tmp_path):
    assert run("evaluate", "--config", POPULATION, "--out", tmp_path) == 0
    got = json.loads((tmp_path / "report.json").read_text())
    with open(os.path.join(DATA, "golden_report.json"), encoding="utf-8") as fh:
        want = json.load(fh)
    _close(got, want)
    assert (tmp_path / "report.csv").read_text().count("\n") == 11


def test_evaluate_trace_input(trace_file, tmp_path):
    assert run("evaluate", "--trace", trace_file, "--threshold", 20, "--out", tmp_path) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["rho_max"] == 50 and report["users"]
    assert run("evaluate", "--config", POPULATION, "--threshold", 5, "--out", tmp_path) == 1


def test_console_script_runs_without_numba(tmp_path):
    env = dict(os.environ, MIXSCOPE_DISABLE_NUMBA="1")
    r = subprocess.run([sys.executable, "-m", "mixscope.cli", "synth", POPULATION, "--rho", "40", "--format", "obs",
                        "--out", str(tmp_path / "np")], env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert run("synth", POPULATION, "--rho", "40", "--format", "obs", "--out", tmp_path / "nb") == 0
    assert (tmp_path / "np" / "U.csv").read_bytes() == (tmp_path / "nb" / "U.csv").read_bytes()
    assert (tmp_path / "np" / "Y.csv").read_bytes() == (tmp_path / "nb" / "Y.csv").read_bytes()
