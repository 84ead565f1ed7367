"""Command line: artifacts, determinism, and exit codes."""

import json
from pathlib import Path

import pytest

from gridfreq import scenario
from gridfreq.cli import main


@pytest.fixture
def mini_scenario(tmp_path):
    """Fast three-bus scenario for command tests (short horizon)."""
    data = {
        "schema_version": 1,
        "name": "mini3",
        "network": {
            "buses": [
                {"id": 1, "kind": "generator", "inertia": 0.2},
                {"id": 2, "kind": "load"},
                {"id": 3, "kind": "load", "load_step": 1.0},
            ],
            "lines": [
                {"from": 1, "to": 2, "susceptance": 5.0},
                {"from": 2, "to": 3, "susceptance": 5.0},
            ],
        },
        "blocks": [
            {"bus": 1, "type": "static_marginal", "role": "generation",
             "cost": {"kind": "quadratic", "curvature": 1.0, "bounds": [-1e6, 1e6]}},
            {"bus": 2, "type": "static_marginal", "role": "demand",
             "cost": {"kind": "quadratic", "curvature": 1.0, "bounds": [-1e6, 1e6]}},
            {"bus": 2, "type": "damping", "coefficient": 0.5},
            {"bus": 3, "type": "damping", "coefficient": 0.5},
        ],
        "sim": {"dt": 0.01, "t_end": 2.0, "control_hold": 0.0,
                "algebraic_tol": 1e-11},
        "analysis": {"lyapunov": True, "comparison": True},
    }
    path = tmp_path / "mini3.json"
    path.write_text(json.dumps(data))
    return path


def _run(args):
    return main([str(a) for a in args])


class TestSimulateCommand:
    def test_writes_trajectory_and_summary(self, mini_scenario, tmp_path):
        out = tmp_path / "artifacts"
        assert _run(["simulate", "--scenario", mini_scenario, "--out", out]) == 0
        csv = (out / "mini3_simulate.csv").read_text()
        txt = (out / "mini3_simulate.txt").read_text()
        assert csv.splitlines()[0].startswith("t,omega_1,")
        assert "lyapunov_monotone,true" in txt

    def test_byte_identical_across_runs(self, mini_scenario, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert _run(["simulate", "--scenario", mini_scenario, "--out", out_a]) == 0
        assert _run(["simulate", "--scenario", mini_scenario, "--out", out_b]) == 0
        assert (out_a / "mini3_simulate.csv").read_bytes() == \
            (out_b / "mini3_simulate.csv").read_bytes()


class TestReports:
    def test_equilibrium_report(self, mini_scenario, tmp_path):
        assert _run(["equilibrium", "--scenario", mini_scenario, "--out", tmp_path]) == 0
        txt = (tmp_path / "mini3_equilibrium.txt").read_text()
        assert "omega_star,-0.333333333333\n" in txt
        buses = (tmp_path / "mini3_equilibrium.csv").read_text().splitlines()
        assert buses[0] == "bus,theta,supply,pM,dc,du"
        assert len(buses) == 4
        lines_csv = (tmp_path / "mini3_equilibrium_lines.csv").read_text().splitlines()
        assert lines_csv[0] == "from,to,eta,flow"

    def test_allocation_report(self, mini_scenario, tmp_path):
        assert _run(["oslc", "--scenario", mini_scenario, "--out", tmp_path]) == 0
        txt = (tmp_path / "mini3_oslc.txt").read_text()
        assert "nu,-0.333333333333\n" in txt
        assert "kkt_passed,true" in txt

    def test_compare_demand_table(self, mini_scenario, tmp_path):
        assert _run(["compare-demand", "--scenario", mini_scenario, "--out", tmp_path]) == 0
        table = (tmp_path / "mini3_compare-demand.csv").read_text()
        assert "with,-0.333333333333\n" in table
        assert "without,-0.5\n" in table

    def test_passivity_report(self, mini_scenario, tmp_path):
        assert _run(["passivity", "--scenario", mini_scenario, "--out", tmp_path]) == 0
        rows = (tmp_path / "mini3_passivity.csv").read_text().splitlines()
        assert rows[0].startswith("scope,margin")
        assert all(",true," in r or r.endswith(",true,") or ",true" in r
                   for r in rows[1:]), rows


class TestErrors:
    def test_missing_scenario_flag(self, tmp_path, capsys):
        assert _run(["simulate", "--out", tmp_path]) == 2
        assert "code=2" in capsys.readouterr().err

    def test_corrupt_scenario(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert _run(["simulate", "--scenario", bad, "--out", tmp_path]) == 2

    def test_schema_error_writes_no_files(self, tmp_path, mini_scenario):
        data = json.loads(Path(mini_scenario).read_text())
        data["sim"]["t_end"] = 0.001  # below one step
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(data))
        out = tmp_path / "should_not_exist"
        assert _run(["simulate", "--scenario", bad, "--out", out]) == 2
        assert not out.exists()

    def test_assumption_violation_exit_code(self, tmp_path, mini_scenario):
        data = json.loads(Path(mini_scenario).read_text())
        data["blocks"] = [b for b in data["blocks"]
                          if not (b["type"] == "damping" and b["bus"] == 3)]
        data["blocks"].append({"bus": 3, "type": "dynamic_marginal", "role": "demand",
                               "cost": {"kind": "quadratic", "curvature": 1.0}})
        bad = tmp_path / "no_feedthrough.json"
        bad.write_text(json.dumps(data))
        assert _run(["simulate", "--scenario", bad, "--out", tmp_path]) == 4

    def test_security_violation_exit_code(self, tmp_path):
        data = {
            "schema_version": 1,
            "name": "tight",
            "network": {
                "buses": [
                    {"id": 1, "kind": "generator", "inertia": 0.2, "load_step": -9.5},
                    {"id": 2, "kind": "load"},
                    {"id": 3, "kind": "load", "load_step": 9.5},
                ],
                "lines": [
                    {"from": 1, "to": 2, "susceptance": 10.0},
                    {"from": 2, "to": 3, "susceptance": 10.0},
                    {"from": 1, "to": 3, "susceptance": 0.2},
                ],
            },
            "blocks": [
                {"bus": 1, "type": "static_marginal", "role": "generation",
                 "cost": {"kind": "quadratic", "curvature": 1.0}},
                {"bus": 2, "type": "damping", "coefficient": 1.0},
                {"bus": 3, "type": "damping", "coefficient": 1.0},
            ],
            "sim": {"dt": 0.01, "t_end": 1.0, "control_hold": 0.0},
        }
        path = tmp_path / "tight.json"
        path.write_text(json.dumps(data))
        assert _run(["equilibrium", "--scenario", path, "--out", tmp_path]) == 4


class TestPassivityCheck:
    def test_report_on_stdout(self, capsys, tmp_path):
        code = _run(["passivity-check", "--num", "1", "--den", "0.5,1",
                     "--feedthrough", "0.4", "--out", tmp_path])
        assert code == 0
        out = capsys.readouterr().out
        assert "margin,0.4" in out
        assert "passed,true" in out

    def test_samples_csv(self, tmp_path):
        code = _run(["passivity-check", "--num", "1", "--den", "0.5,1",
                     "--samples", "16", "--out", tmp_path])
        assert code == 0
        rows = (tmp_path / "passivity-check.csv").read_text().splitlines()
        assert rows[0] == "frequency,real,imag"
        assert len(rows) == 17

    def test_unstable_denominator_is_numeric_failure(self, tmp_path, capsys):
        assert _run(["passivity-check", "--num", "1", "--den", "1,-1",
                     "--out", tmp_path]) == 3


def test_delay_sweep_structure(tmp_path):
    # a fast variant of the delay contrast: short horizon, structure only
    data = json.loads(scenario.shipped_path("delay").read_text())
    data["sim"]["t_end"] = 3.0
    data["name"] = "delay_fast"
    path = tmp_path / "delay_fast.json"
    path.write_text(json.dumps(data))
    assert _run(["delay-sweep", "--scenario", path, "--out", tmp_path,
                 "--delays", "0.05"]) == 0
    rows = (tmp_path / "delay_fast_delay-sweep.csv").read_text().splitlines()
    assert rows[0].startswith("law,delay,outcome")
    cells = {r.split(",")[0]: r.split(",") for r in rows[1:]}
    assert cells["static"][2] == "diverged"
    assert cells["static"][3] != ""  # failure time recorded
    assert cells["dynamic"][2] in ("converged", "not_settled")
