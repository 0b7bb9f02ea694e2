import json
from pathlib import Path

import pytest

from cogmac import cli
from cogmac.results import read_results
from cogmac.spatial import NumericalError

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture(autouse=True)
def _no_env_out(monkeypatch):
    monkeypatch.delenv("COGMAC_OUT_DIR", raising=False)


def write(tmp_path, text, name="s.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_q_zero_gives_zero_series(tmp_path):
    cfg = write(tmp_path, "channels:\n  thetas: [0.2, 0.5]\npopulation:\n  q: 0\n  m_range: 1..5\n")
    out = tmp_path / "a.csv"
    assert cli.run(["analyze-aloha", "--config", cfg, "--out", str(out)]) == 0
    rows = read_results(out)
    assert len(rows) == 15
    assert all(r.value == 0.0 for r in rows)
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["command"] == "analyze-aloha" and len(man["config_sha256"]) == 64


@pytest.mark.parametrize("argv", [["bogus"], ["analyze-aloha", "--nope"], ["analyze-aloha"],
                                  ["figures", "no-such-recipe"],
                                  ["analyze-aloha", "--config", "/nonexistent.yaml"]])
def test_usage_errors_exit_one(argv, capsys):
    assert cli.run(argv) == 1
    assert capsys.readouterr().err


def test_bad_config_exit_one(tmp_path, capsys):
    cfg = write(tmp_path, "channels:\n  thetas: [0.2]\npopulation:\n  q: 2\n")
    assert cli.run(["analyze-aloha", "--config", cfg]) == 1
    assert "population.q" in capsys.readouterr().err


def test_bad_sweep_exit_one(tmp_path):
    cfg = write(tmp_path, "channels:\n  thetas: [0.2]\n")
    assert cli.run(["analyze-aloha", "--config", cfg, "--sweep", "N=1..3"]) == 1
    assert cli.run(["analyze-aloha", "--config", cfg, "--sweep", "M=0..3"]) == 1


def test_numerical_failure_exit_two(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise NumericalError("quadrature did not converge")

    monkeypatch.setattr(cli.aloha, "network_throughput", boom)
    cfg = write(tmp_path, "channels:\n  thetas: [0.2]\n")
    assert cli.run(["analyze-aloha", "--config", cfg]) == 2
    assert "numerical" in capsys.readouterr().err


def test_stdout_without_manifest(tmp_path, capsys):
    assert cli.run(["analyze-aloha", "--config", str(SCENARIOS / "aloha_symmetric.yaml"),
                    "--sweep", "M=1..3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "M,metric,value,std_error,provenance,seed"
    assert len(out) == 1 + 9
    assert not list(tmp_path.iterdir())


@pytest.mark.parametrize("recipe,sweep", [("aloha-msweep", "M=1..20"),
                                          ("detection-radius", "M=1..4")])
def test_figures_write_manifest(tmp_path, monkeypatch, recipe, sweep):
    monkeypatch.setenv("COGMAC_OUT_DIR", str(tmp_path))
    assert cli.run(["figures", recipe, "--sweep", sweep, "--format", "jsonl"]) == 0
    rows = read_results(tmp_path / f"{recipe}.jsonl", "jsonl")
    assert rows
    man = json.loads((tmp_path / f"{recipe}.jsonl.manifest.json").read_text())
    assert man["recipe"] == recipe and man["rows"] == len(rows)
    assert "tolerances" in man and "choices" in man


def test_figures_reject_config(tmp_path):
    cfg = write(tmp_path, "channels:\n  thetas: [0.2]\n")
    assert cli.run(["figures", "aloha-msweep", "--config", cfg]) == 1


def test_compare_shape(tmp_path):
    out = tmp_path / "c.csv"
    assert cli.run(["compare", "--config", str(SCENARIOS / "csma_single.yaml"),
                    "--out", str(out)]) == 0
    rows = read_results(out)
    ms = sorted({r.coords["M"] for r in rows})
    assert ms == list(range(12, 97, 12))
    by = {(r.coords["M"], r.metric): r.value for r in rows}
    for m in ms:
        assert 0.0 <= by[(m, "throughput_optimal_normalized")] <= 1.0 + 1e-12
        assert by[(m, "throughput_optimal_normalized")] >= by[(m, "throughput_heuristic_normalized")] - 1e-12
        assert 0.0 <= by[(m, "loss_percentage")] < 5.0


def test_simulate_aloha_deterministic(tmp_path):
    cfg = str(SCENARIOS / "aloha_symmetric.yaml")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--config", cfg, "--sweep", "M=10", "--slots", "2000", "--shards", "2"]
    assert cli.run(args + ["--out", str(a)]) == 0
    assert cli.run(args + ["--out", str(b), "--workers", "2"]) == 0
    assert a.read_text() == b.read_text()
    assert any(r.provenance == "simulated" and r.seed == 11 for r in read_results(a))


def test_optimize_with_errors(tmp_path):
    out = tmp_path / "o.csv"
    assert cli.run(["optimize", "--config", str(SCENARIOS / "csma_errors.yaml"),
                    "--sweep", "M=8", "--out", str(out)]) == 0
    by = {r.metric: r.value for r in read_results(out)}
    assert by["feasible"] == 1
    assert by["collision_probability_max"] <= 0.1 + 1e-9
