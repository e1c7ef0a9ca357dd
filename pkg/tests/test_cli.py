import re

import numpy as np
import pytest
from click.testing import CliRunner

from ppconsensus.analysis import compliance, consensus_metrics
from ppconsensus.cli import OUT_DIR_ENV, main
from ppconsensus.errors import InfeasibleActivation, ScenarioError
from ppconsensus.scenario_file import loads_scenario, parse_scenario


@pytest.fixture
def runner():
    return CliRunner()


def _margins(output):
    return [float(m) for m in re.findall(r"^c\d = (\S+)", output, re.M)]


# --- parse_scenario -----------------------------------------------------------

def test_bundled_scenario_values(paper):
    assert paper.n_agents == 5
    np.testing.assert_array_equal(paper.initial.x, [-0.5, 1, 2.5, 1.5, 2])
    np.testing.assert_array_equal(paper.initial.v, [1.5, -0.5, -2.5, -3, -2])
    assert (paper.funnel_y.rho0, paper.funnel_y.rho_inf, paper.funnel_y.decay) == (5, 0.1, 1.5)
    assert (paper.funnel_z.rho0, paper.funnel_z.rho_inf, paper.funnel_z.decay) == (5, 0.1, 0.8)
    g = paper.gains
    assert (g.h1, g.h2, g.h3, g.h4, g.h5, g.h6, g.phi, g.a2, g.a3, g.a4) == (10, 1, 6, 1.5, 1.6, 1.5, 1, 0.1, 0.5, 0.1)
    assert paper.schedule.segments == (("G1", 0.1), ("G2", 0.1), ("G3", 0.1))
    assert paper.schedule.cyclic and paper.schedule.dwell_min == 0.1
    assert paper.schedule.graphs["G1"].edges == ((1, 2), (2, 3))
    assert paper.schedule.graphs["G2"].edges == ((3, 4),)
    assert paper.schedule.graphs["G3"].edges == ((1, 5), (4, 5))
    assert (paper.t_end, paper.dt, paper.sample_stride) == (5.0, 1e-3, 10)


def test_non_dividing_step(data_dir):
    with pytest.raises(ScenarioError, match="does not divide") as info:
        parse_scenario(data_dir / "bad_dt.toml")
    assert info.value.line == 59
    assert "line 59" in str(info.value)


def test_bad_funnel_names_table(data_dir):
    with pytest.raises(ScenarioError, match=r"funnels\.velocity") as info:
        parse_scenario(data_dir / "bad_funnel.toml")
    assert info.value.line is not None


def test_infeasible_start_rejected_at_parse(data_dir):
    with pytest.raises(InfeasibleActivation) as info:
        parse_scenario(data_dir / "infeasible_start.toml")
    assert info.value.pair == (1, 2)


def test_unknown_key_rejected(paper_text):
    text = paper_text.replace("h1 = 10.0", "h1 = 10.0\nh7 = 2.0")
    with pytest.raises(ScenarioError, match="h7") as info:
        loads_scenario(text)
    assert info.value.line == text.splitlines().index("h7 = 2.0") + 1


def test_unknown_table_rejected(paper_text):
    with pytest.raises(ScenarioError, match="extra"):
        loads_scenario(paper_text + "\n[extra]\na = 1\n")


def test_missing_table(paper_text):
    text = paper_text.replace("[gains]", "[gainz]")
    with pytest.raises(ScenarioError):
        loads_scenario(text)


def test_syntax_error_has_line(paper_text):
    text = paper_text.replace("count = 5", "count = = 5")
    with pytest.raises(ScenarioError, match="syntax") as info:
        loads_scenario(text)
    assert info.value.line == text.splitlines().index("count = = 5") + 1


def test_wrong_vector_length(paper_text):
    with pytest.raises(ScenarioError, match="x0"):
        loads_scenario(paper_text.replace("x0 = [-0.5, 1.0, 2.5, 1.5, 2.0]", "x0 = [-0.5, 1.0]"))


def test_nonpositive_gain(paper_text):
    with pytest.raises(ScenarioError, match="phi") as info:
        loads_scenario(paper_text.replace("phi = 1.0", "phi = -1.0"))
    assert info.value.line == paper_text.splitlines().index("phi = 1.0") + 1


def test_overrides_parse(paper_text):
    text = paper_text.replace(
        "[funnels.velocity]",
        '[funnels.position.overrides]\n"2-1" = { rho0 = 4.0, rho_inf = 0.2, decay = 1.0 }\n\n[funnels.velocity]',
    )
    sc = loads_scenario(text).scenario
    assert sc.funnel((1, 2), "position").rho0 == 4.0
    assert sc.funnel((2, 3), "position").rho0 == 5.0
    assert sc.alpha_bars()[0] == pytest.approx(1.47)


def test_override_for_missing_edge(paper_text):
    text = paper_text.replace(
        "[funnels.velocity]",
        '[funnels.position.overrides]\n"1-4" = { rho0 = 4.0, rho_inf = 0.2, decay = 1.0 }\n\n[funnels.velocity]',
    )
    with pytest.raises(ScenarioError, match="override"):
        loads_scenario(text)


def test_self_loop_graph(paper_text):
    with pytest.raises(ScenarioError, match="self-loop"):
        loads_scenario(paper_text.replace("G2 = [[3, 4]]", "G2 = [[3, 3]]"))


# --- simulate -----------------------------------------------------------------

def test_simulate_statuses(runner, data_dir):
    res = runner.invoke(main, ["simulate", str(data_dir / "equilibrium.toml")])
    assert res.exit_code == 0, res.output
    assert "certificate: certified" in res.output

    res = runner.invoke(main, ["simulate", str(data_dir / "infeasible_start.toml")])
    assert res.exit_code == 1
    assert "edge=1-2" in res.output


def test_simulate_paper_file_summary_matches_analysis(runner, tmp_path, paper, paper_traj, paper_text):
    path = tmp_path / "paper.toml"
    path.write_text(paper_text)
    csv_path = tmp_path / "out.csv"
    res = runner.invoke(main, ["simulate", str(path), "--csv", str(csv_path)])
    assert res.exit_code == 0, res.output
    comp = compliance(paper_traj, paper)
    m = consensus_metrics(paper_traj)
    assert f"position funnel min margin = {comp.position.min_margin:.17g}" in res.output
    assert f"velocity funnel min margin = {comp.velocity.min_margin:.17g}" in res.output
    assert f"terminal max |y| = {m.terminal_max_y:.17g}" in res.output
    assert f"terminal max |z| = {m.terminal_max_z:.17g}" in res.output
    assert f"mean velocity drift = {m.mean_velocity_drift:.17g}" in res.output
    assert "jointly connected: yes" in res.output
    assert "funnel compliance: no violation" in res.output
    assert len(csv_path.read_text().splitlines()) == 502


def test_simulate_dt_override_rejected(runner, data_dir):
    res = runner.invoke(main, ["simulate", str(data_dir / "equilibrium.toml"), "--dt", "0.03"])
    assert res.exit_code == 2


def test_simulate_dt_override(runner, data_dir):
    res = runner.invoke(main, ["simulate", str(data_dir / "equilibrium.toml"), "--dt", "0.01"])
    assert res.exit_code == 0, res.output


def test_simulate_invalid_input(runner, data_dir, tmp_path):
    assert runner.invoke(main, ["simulate", str(data_dir / "bad_dt.toml")]).exit_code == 2
    assert runner.invoke(main, ["simulate", str(tmp_path / "nope.toml")]).exit_code == 2


def test_simulate_halt_midrun(runner, paper_text, tmp_path):
    # the position funnel collapses too quickly for agents 4 and 5 to follow
    text = paper_text.replace("rho_inf = 0.1\ndecay = 1.5", "rho_inf = 0.1\ndecay = 40.0")
    path = tmp_path / "fast.toml"
    path.write_text(text)
    res = runner.invoke(main, ["simulate", str(path)])
    assert res.exit_code == 1
    assert "halt" in res.output


# --- validate-gains / check-topology -----------------------------------------

def test_validate_gains_paper_alpha_bars(runner, data_dir):
    res = runner.invoke(main, ["validate-gains", str(data_dir / "equilibrium.toml"), "--paper-alpha-bars"])
    assert res.exit_code == 0
    for got, want in zip(_margins(res.output), (35, 0.2, 0.3, 2.2)):
        assert abs(got - want) <= 1e-12


def test_validate_gains_exact(runner, data_dir):
    res = runner.invoke(main, ["validate-gains", str(data_dir / "equilibrium.toml")])
    assert res.exit_code == 0
    for got, want in zip(_margins(res.output), (35, 0.296, 0.324, 2.2)):
        assert abs(got - want) <= 1e-12


def test_validate_gains_infeasible(runner, paper_text, tmp_path):
    path = tmp_path / "weak.toml"
    path.write_text(paper_text.replace("h5 = 1.6", "h5 = 2.0"))
    res = runner.invoke(main, ["validate-gains", str(path), "--paper-alpha-bars"])
    assert res.exit_code == 1
    assert "gains feasible: no" in res.output


def test_check_topology(runner, data_dir):
    res = runner.invoke(main, ["check-topology", str(data_dir / "equilibrium.toml")])
    assert res.exit_code == 0
    assert res.output.count("connected: no") == 3
    res = runner.invoke(main, ["check-topology", str(data_dir / "disconnected.toml")])
    assert res.exit_code == 1
    assert "jointly connected: no" in res.output


# --- reproduce-paper ----------------------------------------------------------

def test_reproduce_paper(runner, tmp_path):
    res = runner.invoke(main, ["reproduce-paper", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    assert (tmp_path / "trajectory.csv").exists()
    assert (tmp_path / "funnels.csv").exists()


def test_reproduce_paper_env_dir(runner, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_DIR_ENV, str(tmp_path / "env"))
    res = runner.invoke(main, ["reproduce-paper"])
    assert res.exit_code == 0
    assert (tmp_path / "env" / "trajectory.csv").exists()
