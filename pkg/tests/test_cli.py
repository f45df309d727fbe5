from __future__ import annotations

import configparser
import csv
import json

import numpy as np
import pytest

from thermomdp.cli import main
from thermomdp.config import OUTPUT_ENV, ConfigError, RunConfig, load_config
from thermomdp.mdp import write_price_csv
from thermomdp.schedule import SimulationTrace

DAY = ["--n-profiles", "1", "--horizon-steps", "96", "--window-steps", "96"]


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    return tmp_path


@pytest.fixture(scope="module")
def day_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("day")
    assert main(["simulate", *DAY, "--output-dir", str(root / "out")]) == 0
    assert main(["build-mp", "--n-temp-bins", "3", "--n-power-bins", "4", "--output-dir", str(root / "out")]) == 0
    return root / "out"


def constant_trace(n=50, power=1.5):
    z = np.zeros(n)
    return SimulationTrace(
        d_H=np.full(n, power),
        p_hp_sh=np.full(n, power),
        p_hp_hw=z,
        p_a_sh=z,
        p_a_hw=z,
        q_sh=np.zeros((n, 2)),
        t_sh=np.full((n, 4), 20.0),
        t_hw=np.full(n, 50.0),
        presence=np.zeros(n, dtype=np.int8),
        profile_seed=1,
    )


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSimulate:
    def test_one_day(self, day_run):
        (f,) = sorted((day_run / "traces").glob("*.csv"))
        assert len(rows(f)) == 96

    def test_rerun_identical(self, work, day_run):
        assert main(["simulate", *DAY, "--output-dir", "again"]) == 0
        for name in ("simulate_summary.json",):
            assert (work / "again" / name).read_bytes() == (day_run / name).read_bytes()
        (a,) = sorted((work / "again" / "traces").glob("*.csv"))
        assert a.read_bytes() == (day_run / "traces" / a.name).read_bytes()

    def test_summary_matches_files(self, day_run):
        summary = json.loads((day_run / "simulate_summary.json").read_text())
        energy = sum(
            sum(float(r["d_H"]) for r in rows(day_run / "traces" / p["file"])) * 0.25 for p in summary["profiles"]
        )
        assert summary["total_energy_kwh"] == pytest.approx(energy, rel=1e-12)
        assert summary["n_profiles"] == 1 and summary["failures"] == []
        assert summary["max_comfort_violation"] <= 1e-6

    def test_summary_fields(self, day_run):
        summary = json.loads((day_run / "simulate_summary.json").read_text())
        assert {"schema_version", "config_hash", "n_relaxed_profiles"} <= set(summary)


class TestBuildMp:
    def test_constant_trace_is_identity(self, work):
        (work / "tr").mkdir()
        constant_trace().write(work / "tr" / "c.csv", "x")
        assert main(["build-mp", "--traces", "tr", "--n-temp-bins", "2", "--n-power-bins", "3"]) in (0, 1)
        m = json.loads((work / "out" / "matrix.json").read_text())
        assert np.array_equal(np.array(m["probs"]), np.eye(6))
        report = json.loads((work / "out" / "matrix_report.json").read_text())
        assert report["diagonal_mass"] == 1.0 and report["n_absorbing"] == 6

    def test_outputs(self, day_run):
        m = json.loads((day_run / "matrix.json").read_text())
        assert m["n_states"] == 12 and len(m["state_power"]) == 12
        assert len(rows(day_run / "matrix.csv")) == 12

    def test_no_traces(self, work):
        (work / "empty").mkdir()
        assert main(["build-mp", "--traces", "empty"]) == 4


class TestSolveMdp:
    def test_zero_prices_keep_default(self, work, day_run):
        write_price_csv(np.zeros(96), work / "zero.csv")
        args = ["solve-mdp", "--matrix", str(day_run / "matrix.json"), "--prices", "zero.csv", "--include-p-star"]
        assert main(args) == 0
        sol = json.loads((work / "out" / "solution.json").read_text())
        P = np.array(json.loads((day_run / "matrix.json").read_text())["probs"])
        assert np.array_equal(np.array(sol["P_star"]), np.broadcast_to(P, (96, 12, 12)))
        assert sol["objective"] == 0.0

    def test_default_horizon(self, work, day_run):
        assert main(["solve-mdp", "--matrix", str(day_run / "matrix.json")]) == 0
        sol = json.loads((work / "out" / "solution.json").read_text())
        assert sol["horizon"] == 96 and len(sol["rho"]) == 97 and len(sol["p_t"]) == 97
        assert "P_star" not in sol

    def test_malformed_prices(self, work, day_run, capsys):
        (work / "bad.csv").write_text("step,price\n0,1.0\n1,cheap\n")
        assert main(["solve-mdp", "--matrix", str(day_run / "matrix.json"), "--prices", "bad.csv"]) == 5
        assert "bad.csv:3:" in capsys.readouterr().err

    def test_short_prices(self, work, day_run):
        write_price_csv(np.ones(10), work / "short.csv")
        assert main(["solve-mdp", "--matrix", str(day_run / "matrix.json"), "--prices", "short.csv"]) == 5

    def test_missing_price_file(self, work, day_run):
        assert main(["solve-mdp", "--matrix", str(day_run / "matrix.json"), "--prices", "nope.csv"]) == 2


class TestPlot:
    def test_heatmap_and_trajectory(self, work, day_run):
        assert main(["plot", "--kind", "matrix-heatmap", "--input", str(day_run / "matrix.json")]) == 0
        assert (work / "out" / "matrix-heatmap.svg").read_text().startswith("<svg")
        assert main(["solve-mdp", "--matrix", str(day_run / "matrix.json")]) == 0
        assert main(["plot", "--kind", "power-trajectory", "--input", "out/solution.json", "--output", "t.svg"]) == 0
        assert "data-state=\"total\"" in (work / "t.svg").read_text()

    def test_unknown_kind(self, work, day_run):
        assert main(["plot", "--kind", "pie", "--input", str(day_run / "matrix.json")]) == 2


class TestValidate:
    def test_valid(self, day_run, capsys):
        assert main(["validate", str(day_run / "matrix.json")]) == 0
        assert capsys.readouterr().out.strip().endswith("valid")

    def test_bad_column_sum(self, work, day_run, capsys):
        m = json.loads((day_run / "matrix.json").read_text())
        col = next(b for b in range(12) if m["probs"][b][b] > 0.01)
        m["probs"][col][col] -= 0.001
        (work / "m.json").write_text(json.dumps(m))
        assert main(["validate", "m.json"]) == 1
        assert "column residual 1.000e-03" in capsys.readouterr().out

    def test_missing_field(self, work, day_run):
        m = json.loads((day_run / "matrix.json").read_text())
        del m["counts"]
        (work / "m.json").write_text(json.dumps(m))
        assert main(["validate", "m.json"]) == 5


class TestConfig:
    def test_print_config_defaults(self, work, capsys):
        assert main(["print-config"]) == 0
        cp = configparser.ConfigParser()
        cp.read_string(capsys.readouterr().out)
        assert cp["scenario"]["n_profiles"] == "52" and cp["output"]["output_dir"] == "out"

    def test_file_env_flag_precedence(self, work, monkeypatch, capsys):
        (work / "c.ini").write_text("[output]\noutput_dir = from_file\n[scenario]\nn_profiles = 4\n")
        assert load_config(work / "c.ini", env={}).output_dir == "from_file"
        monkeypatch.setenv(OUTPUT_ENV, "from_env")
        assert main(["print-config", "--config", "c.ini"]) == 0
        assert "output_dir = from_env" in capsys.readouterr().out
        assert main(["print-config", "--config", "c.ini", "--output-dir", "from_flag"]) == 0
        text = capsys.readouterr().out
        assert "output_dir = from_flag" in text and "n_profiles = 4" in text

    def test_unknown_key(self, work, capsys):
        (work / "c.ini").write_text("[scenario]\nn_profile = 4\n")
        assert main(["print-config", "--config", "c.ini"]) == 2
        assert "n_profile" in capsys.readouterr().err

    def test_bad_value(self, work):
        (work / "c.ini").write_text("[mdp]\npf = 1.5\n")
        assert main(["print-config", "--config", "c.ini"]) == 2
        with pytest.raises(ConfigError, match="pf"):
            RunConfig(pf=1.5)

    def test_bool_flag(self, work, capsys):
        assert main(["print-config", "--include-p-star"]) == 0
        assert "include_p_star = true" in capsys.readouterr().out

    def test_digest_ignores_output_dir(self):
        assert RunConfig(output_dir="a").digest() == RunConfig(output_dir="b").digest()
        assert RunConfig(master_seed=1).digest() != RunConfig(master_seed=2).digest()
