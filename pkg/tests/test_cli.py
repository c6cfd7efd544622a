import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from netagree.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, main
from netagree.graph import Digraph
from netagree.runner import emit_plot, emit_trajectory_csv, read_trajectory_csv, report_schema, run
from netagree.scenario import bundled_scenario_text, parse_scenario
from netagree.sim import IntegrationConfig, Trajectory, disagreement_series, integrate

from conftest import linear_network

SMOKE = bundled_scenario_text("case_smoke")


def _report(out, name):
    return json.loads((out / f"{name}.report.json").read_text())


def test_run_smoke_writes_artifacts(tmp_path):
    assert main(["run", "case_smoke", "--out", str(tmp_path)]) == EXIT_OK
    rep = _report(tmp_path, "case_smoke")
    jsonschema.validate(rep, report_schema())
    assert rep["status"] == "completed"
    assert rep["agreement"]["value"] == pytest.approx(0.0, abs=1e-6)
    assert [a["id"] for a in rep["audits"]] == [
        "agent_relation",
        "controller_relation",
        "compensation",
        "iop_agent_relation",
    ]
    assert (tmp_path / "case_smoke.trajectory.csv").exists()
    assert (tmp_path / "case_smoke.svg").exists()


def test_check_only(tmp_path):
    assert main(["run", "case_negative", "--out", str(tmp_path), "--check-only"]) == EXIT_OK
    rep = _report(tmp_path, "case_negative")
    jsonschema.validate(rep, report_schema())
    assert rep["status"] == "check_only" and rep["agreement"] is None
    assert rep["certificate"]["feasible"] is False
    assert not (tmp_path / "case_negative.trajectory.csv").exists()


def test_overrides(tmp_path):
    assert main(["run", "case_smoke", "--out", str(tmp_path), "--dt", "0.01", "--t-end", "3"]) == EXIT_OK
    solver = _report(tmp_path, "case_smoke")["solver"]
    assert solver["dt"] == 0.01 and solver["steps"] == 300


def test_scenario_file_path(tmp_path):
    src = tmp_path / "mine.scn"
    src.write_text(SMOKE.replace("name = case_smoke", "name = mine"))
    assert main(["run", str(src), "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "mine.report.json").exists()


def test_parse_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text(SMOKE.replace("x = 1, -1", "x = 1"))
    assert main(["run", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "initial.x" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [["run"], ["run", "no_such_scenario"], ["frobnicate"], ["run", "case_smoke", "--dt", "abc"]],
)
def test_usage_errors_exit_one(argv):
    assert main(argv) == EXIT_CONFIG


def test_bad_override_is_config_error(tmp_path):
    assert main(["run", "case_smoke", "--out", str(tmp_path), "--dt", "0.3"]) == EXIT_CONFIG


def test_blowup_exit_code(tmp_path):
    # a negative gain is rejected, so drive divergence through a huge step instead
    text = SMOKE.replace("gain = 1\n", "gain = 1000\n").replace("dt = 0.001", "dt = 0.01")
    src = tmp_path / "boom.scn"
    src.write_text(text.replace("name = case_smoke", "name = boom"))
    assert main(["run", str(src), "--out", str(tmp_path)]) == EXIT_DIVERGED
    rep = _report(tmp_path, "boom")
    jsonschema.validate(rep, report_schema())
    assert rep["status"] == "diverged" and rep["diverged"]["time"] > 0


def test_io_error_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "case_smoke", "--out", str(blocker / "sub")]) == EXIT_IO


def test_list_and_show(capsys):
    assert main(["list"]) == EXIT_OK
    assert "case_hetero" in capsys.readouterr().out.split()
    assert main(["show", "case_smoke"]) == EXIT_OK
    assert capsys.readouterr().out == SMOKE


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "netagree.cli", "run", "case_smoke", "--out", str(tmp_path), "--no-plot"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "case_smoke: completed" in proc.stdout
    assert not (tmp_path / "case_smoke.svg").exists()


class TestCsv:
    def _traj(self, samples=3):
        net = linear_network(Digraph(3, ((1, 2), (2, 3), (3, 1))))
        return integrate(net, [1.0, 2.0, 3.0], IntegrationConfig(dt=0.5, t_end=0.5 * (samples - 1)))

    def test_line_count_and_header(self, tmp_path):
        path = tmp_path / "t.csv"
        emit_trajectory_csv(self._traj(3), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0] == (
            "t,x_1,x_2,x_3,y_1,y_2,y_3,u_1,u_2,u_3,zeta_1,zeta_2,zeta_3,mu_1,mu_2,mu_3,disagreement_norm"
        )

    def test_round_trip_disagreement(self, tmp_path):
        traj = integrate(
            linear_network(Digraph(3, ((1, 2), (2, 3), (3, 1)))),
            [1.0, 2.0, 3.0],
            IntegrationConfig(dt=1e-3, t_end=5.0, record_stride=10),
        )
        path = tmp_path / "t.csv"
        emit_trajectory_csv(traj, path)
        cols = read_trajectory_csv(path)
        y = np.column_stack([cols[f"y_{i}"] for i in (1, 2, 3)])
        recomputed = np.linalg.norm(y - y.mean(axis=1, keepdims=True), axis=1)
        _, series = disagreement_series(traj)
        np.testing.assert_allclose(recomputed, series, atol=1e-9)
        np.testing.assert_allclose(cols["disagreement_norm"], series, atol=1e-9)
        assert np.all(np.diff(cols["t"]) > 0)

    def test_consensus_run_has_zero_disagreement(self, tmp_path):
        net = linear_network(Digraph(3, ((1, 2), (2, 3), (3, 1))))
        traj = integrate(net, [0.5, 0.5, 0.5], IntegrationConfig(dt=0.1, t_end=1.0))
        emit_trajectory_csv(traj, tmp_path / "c.csv")
        assert np.all(read_trajectory_csv(tmp_path / "c.csv")["disagreement_norm"] == 0)

    def test_controller_state_columns(self, tmp_path):
        scn = parse_scenario(
            SMOKE.replace("kind = static_gain\ngain = 1\nrepeat = 2", "kind = lowpass\nrate = 2\nrepeat = 2")
        )
        run(scn, tmp_path)
        header = (tmp_path / "case_smoke.trajectory.csv").read_text().splitlines()[0].split(",")
        assert header[:5] == ["t", "x_1", "x_2", "eta_1", "eta_2"]

    def test_empty_trajectory(self, tmp_path):
        z = np.zeros((0, 2))
        empty = Trajectory(times=np.zeros(0), states=z, u=z, y=z, zeta=z, mu=z, w=z, z=z)
        with pytest.raises(ValueError):
            emit_trajectory_csv(empty, tmp_path / "e.csv")
        with pytest.raises(ValueError):
            emit_plot(empty, tmp_path / "e.svg")


class TestPlot:
    def test_polyline_per_output(self, tmp_path):
        net = linear_network(Digraph(3, ((1, 2), (2, 3), (3, 1))))
        traj = integrate(net, [1.0, 2.0, 3.0], IntegrationConfig(dt=1e-3, t_end=2.0))
        emit_plot(traj, tmp_path / "a.svg", title="a < b & c")
        emit_plot(traj, tmp_path / "b.svg", title="a < b & c")
        svg = (tmp_path / "a.svg").read_text()
        assert svg.count('class="output"') == 3
        assert "a &lt; b &amp; c" in svg
        assert "y_3" in svg and "time (s)" in svg
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    def test_single_constant_agent_is_horizontal(self, tmp_path):
        times = np.linspace(0, 1, 5)
        y = np.full((5, 1), 0.3)
        z = np.zeros((5, 1))
        traj = Trajectory(times=times, states=y, u=z, y=y, zeta=z, mu=z, w=z, z=z)
        emit_plot(traj, tmp_path / "c.svg")
        svg = (tmp_path / "c.svg").read_text()
        (line,) = [ln for ln in svg.splitlines() if 'class="output"' in ln]
        points = line.split('points="')[1].rstrip('"/>').split()
        assert len({p.split(",")[1] for p in points}) == 1
