import csv
import json
from pathlib import Path

import pytest

from controlled_teleport import cli, report
from controlled_teleport.config import load_scenario
from controlled_teleport.errors import InvariantError

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def write(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


@pytest.fixture
def small(tmp_path):
    return write(tmp_path, {"m": 1, "n": 2, "messages": {"random": {"count": 2, "seed": 3}}, "seed": 5})


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_exact_run_writes_reports(small, tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["--config", str(small), "--out", str(out)]) == cli.EXIT_OK
    assert sorted(p.name for p in out.iterdir()) == ["branches.csv", "density.json", "summary.txt"]
    rows = read_csv(out / "branches.csv")
    assert len(rows) == 64
    assert min(float(r["fidelity_1"]) for r in rows) > 1 - 1e-12
    density = json.loads((out / "density.json").read_text())
    assert density["schema_version"] == report.SCHEMA_VERSION
    assert len(density["records"]) == 2
    assert "min_fidelity: 1.0000" in capsys.readouterr().out


def test_withheld_run_reports_closed_form(tmp_path):
    cfg = write(tmp_path, {"m": 1, "n": 3, "messages": [{"theta": 1.2, "phi": 2.0}],
                           "policy": {"withheld": [2]}, "analyses": ["protocol", "fidelity_grid"]})
    out = tmp_path / "out"
    assert cli.main(["--config", str(cfg), "--out", str(out)]) == cli.EXIT_OK
    records = json.loads((out / "density.json").read_text())["records"]
    assert {r["outcome_class"] for r in records} == {"plus", "minus"}
    assert max(r["max_abs_delta"] for r in records) < 1e-12
    grid = read_csv(out / "fidelity.csv")
    assert len(grid) == 4
    assert all(float(r["abs_delta"]) < 1e-12 for r in grid)


def test_averages_report(tmp_path):
    cfg = write(tmp_path, {"m": 1, "n": 2, "messages": [{"theta": 1.0}], "policy": {"k": 1},
                           "quad": {"theta_nodes": 16, "phi_nodes": 16}, "analyses": ["average_fidelity"]})
    out = tmp_path / "out"
    assert cli.main(["--config", str(cfg), "--out", str(out)]) == cli.EXIT_OK
    rows = {(r["quantity"], r["case"]): float(r["value"]) for r in read_csv(out / "averages.csv")}
    assert rows["closed_form", "plus"] == pytest.approx(2 / 3, abs=1e-12)
    assert rows["closed_form", "minus"] == pytest.approx(1 / 3, abs=1e-12)
    assert rows["random_correction", "minus"] == pytest.approx(2 / 3, abs=1e-12)
    assert "PlusClass" in (out / "summary.txt").read_text()


def test_seed_and_mode_overrides_are_reproducible(small, tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    args = ["--config", str(small), "--mode", "sampled"]
    assert cli.main(args + ["--out", str(a), "--seed", "1"]) == cli.EXIT_OK
    assert cli.main(args + ["--out", str(b), "--seed", "1"]) == cli.EXIT_OK
    assert cli.main(args + ["--out", str(c), "--seed", "2"]) == cli.EXIT_OK
    for name in ("summary.txt", "trajectories.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "summary.txt").read_text() != (c / "summary.txt").read_text()


def test_workers_do_not_change_output(small, tmp_path):
    one, two = tmp_path / "one", tmp_path / "two"
    assert cli.main(["--config", str(small), "--out", str(one)]) == cli.EXIT_OK
    assert cli.main(["--config", str(small), "--out", str(two), "--workers", "2"]) == cli.EXIT_OK
    for path in one.iterdir():
        assert path.read_bytes() == (two / path.name).read_bytes()


def test_check_mode(small, capsys):
    assert cli.main(["--config", str(small), "--check"]) == cli.EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
    assert any("order_independence" in line for line in lines)


@pytest.mark.parametrize(
    "content", ['{"m": 1, "n": 2}', '{"m": 1,, }', '{"m": 1, "n": 2, "messages": [{"theta": 9}]}']
)
def test_config_errors_exit_2(tmp_path, content, capsys):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert cli.main(["--config", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_missing_file_exits_2(tmp_path):
    assert cli.main(["--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["--config", str(tmp_path / "none.json"), "--check"]) == cli.EXIT_CONFIG


def test_invariant_violation_exits_3(small, tmp_path, monkeypatch, capsys):
    def broken(scenario, workers=1):
        raise InvariantError("norm", "injected")

    monkeypatch.setattr(cli, "evaluate", broken)
    assert cli.main(["--config", str(small), "--out", str(tmp_path / "o")]) == cli.EXIT_INVARIANT
    assert "norm" in capsys.readouterr().err


def test_out_required_without_check(small):
    with pytest.raises(SystemExit):
        cli.main(["--config", str(small)])


def test_sweep_k(tmp_path):
    cfg = write(tmp_path, {"m": 1, "n": 3, "messages": [{"theta": 0.7, "phi": 1.9}], "policy": {"k": 1},
                           "quad": {"theta_nodes": 8, "phi_nodes": 8}, "analyses": ["protocol", "simulated_average"]})
    out = tmp_path / "sweep"
    code = cli.main(["sweep", "--config", str(cfg), "--out", str(out), "--axis", "k", "--values", "1", "2", "3"])
    assert code == cli.EXIT_OK
    rows = read_csv(out / "sweep_k.csv")
    assert [r["k"] for r in rows] == ["1", "2", "3"]
    # Eight nodes leave ~6e-7 quadrature error; the point is that k does not move the value.
    assert len({r["avg_simulated_plus"] for r in rows}) == 1
    assert len({r["avg_simulated_minus"] for r in rows}) == 1
    assert float(rows[0]["avg_simulated_plus"]) == pytest.approx(2 / 3, abs=1e-6)
    assert float(rows[0]["avg_simulated_minus"]) == pytest.approx(1 / 3, abs=1e-6)
    assert (out / "k=2" / "summary.txt").exists()


def test_sweep_trajectories(small, tmp_path):
    out = tmp_path / "sweep"
    code = cli.main(["sweep", "--config", str(small), "--out", str(out), "--axis", "trajectories",
                     "--values", "100", "400"])
    assert code == cli.EXIT_OK
    rows = read_csv(out / "sweep_trajectories.csv")
    assert "max_z" in rows[0]


def test_sweep_rejects_unknown_axis(small, tmp_path):
    code = cli.main(["sweep", "--config", str(small), "--out", str(tmp_path), "--axis", "alpha", "--values", "1"])
    assert code == cli.EXIT_CONFIG


def test_sweep_rejects_invalid_value(small, tmp_path):
    code = cli.main(["sweep", "--config", str(small), "--out", str(tmp_path), "--axis", "k", "--values", "5"])
    assert code == cli.EXIT_CONFIG


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.glob("*.json")))
def test_shipped_scenarios_parse(name):
    assert load_scenario(SCENARIOS / name).message_sets
