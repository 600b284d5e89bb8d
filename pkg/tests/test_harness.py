import csv
import json

import numpy as np
import pytest

import dpa.harness as harness
from dpa.cli import main
from dpa.goals import Strategy
from dpa.harness import RunConfig, TrialState, run_dpa_cycle, run_experiment, run_trial, sub_seed
from dpa.env import TreasureGame, builtin_map
from dpa.report import emit_report, read_success_csv, success_percent


@pytest.mark.parametrize("name,steps", [("d1", 50), ("d2", 50), ("d3", 150), ("d4", 200), ("d5", 800)])
def test_table2_defaults(name, steps):
    c = RunConfig(domain=name)
    assert (c.dpa_eps, c.dpa_steps, c.d_eps, c.d_steps) == (4, steps, 1, 200)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(cycles=-1)
    with pytest.raises(KeyError):
        RunConfig(domain="domain9")
    assert RunConfig(strategy="dgb").strategy is Strategy.DISTANCE_GOAL_BABBLING


def test_sub_seeds_are_distinct_streams():
    a = np.random.default_rng(sub_seed(0, 1, 2)).random()
    b = np.random.default_rng(sub_seed(0, 2, 1)).random()
    assert a != b and a == np.random.default_rng(sub_seed(0, 1, 2)).random()


def test_action_babbling_cycle_has_no_target():
    config = RunConfig(domain="d1", strategy="ab", cycles=1, trials=1)
    state = TrialState(TreasureGame(builtin_map("d1"), seed=0))
    r = run_dpa_cycle(state, config, 0, 0)
    assert r.target == [] and r.plan_ex_length == 0 and state.plan_ex == []


def test_cycle_counts_nondecreasing_and_json():
    rows = run_trial(RunConfig(domain="d1", strategy="gb", cycles=4, trials=1, seed=2), 0)
    for a, b in zip(rows, rows[1:]):
        assert b.n_options >= a.n_options and b.n_id >= a.n_id and b.n_td >= a.n_td
    rec = json.loads(rows[-1].to_json())
    assert rec["cycle"] == 3 and isinstance(rec["goal_executed"], bool)


def test_plan_ex_consumed_at_start_of_next_cycle(monkeypatch):
    seen = []
    real = harness.discover_options

    def spy(env, d_eps, d_steps, plan_ex, rng, tau):
        seen.append(list(plan_ex))
        return real(env, d_eps, d_steps, plan_ex, rng, tau)

    monkeypatch.setattr(harness, "discover_options", spy)
    config = RunConfig(domain="d1", strategy="dgb", cycles=3, trials=1, seed=1)
    state = TrialState(TreasureGame(builtin_map("d1"), seed=0))
    produced = []
    for c in range(3):
        run_dpa_cycle(state, config, 0, c)
        produced.append(list(state.plan_ex))
    assert seen[0] == [] and seen[1:] == produced[:2]


def test_zero_cycles_empty_matrix():
    M, reports = run_experiment(RunConfig(cycles=0, trials=2))
    assert M.shape == (2, 0) and reports == []


def test_crashed_trial_is_all_false(monkeypatch):
    calls = []

    def flaky(config, trial):
        calls.append(trial)
        if trial == 0:
            raise RuntimeError("boom")
        return []

    monkeypatch.setattr(harness, "run_trial", flaky)
    M, _ = run_experiment(RunConfig(cycles=3, trials=2))
    assert calls == [0, 1] and not M.any()


def test_same_seed_same_reports():
    cfg = RunConfig(domain="d1", strategy="gb", cycles=3, trials=1, seed=7)
    a = [r.to_json() for r in run_trial(cfg, 0)]
    b = [r.to_json() for r in run_trial(cfg, 0)]
    strip = lambda rows: [{k: v for k, v in json.loads(x).items() if k != "wall_time"} for x in rows]
    assert strip(a) == strip(b)


# ---------------------------------------------------------------- report

def test_csv_rows_per_strategy(tmp_path):
    rng = np.random.default_rng(0)
    mats = {Strategy.GOAL_BABBLING: rng.random((10, 15)) > 0.5, Strategy.ACTION_BABBLING: np.ones((10, 15), bool)}
    files = emit_report(mats, tmp_path, "domain2")
    with open(tmp_path / "success.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30 and rows[0].keys() == {"cycle", "strategy", "pct"}
    curves = read_success_csv(tmp_path / "success.csv")
    assert np.all(curves["ab"] == 100.0)
    assert np.allclose(curves["gb"], success_percent(mats[Strategy.GOAL_BABBLING]))
    svg = (tmp_path / "success_domain2.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert len(files) == 2


def test_chart_is_reproducible(tmp_path):
    mats = {"gb": np.eye(3, dtype=bool)}
    emit_report(mats, tmp_path / "a", "d")
    emit_report(mats, tmp_path / "b", "d")
    assert (tmp_path / "a/success_d.svg").read_bytes() == (tmp_path / "b/success_d.svg").read_bytes()


def test_empty_matrix_refused(tmp_path):
    with pytest.raises(ValueError):
        emit_report({"gb": np.zeros((0, 0), bool)}, tmp_path)


# ---------------------------------------------------------------- cli

def test_cli_run_plan_abstract(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["run", "--domain", "d1", "--strategy", "gb", "--cycles", "3", "--trials", "1",
                 "--seed", "3", "--out", str(out), "--quiet"]) == 0
    assert (out / "success.csv").exists() and (out / "reports.jsonl").exists()
    trial = out / "gb" / "trial00"
    capsys.readouterr()
    code = main(["plan", "--domain", str(trial / "domain.ppddl"), "--problem", str(trial / "problem_goal.ppddl")])
    text = capsys.readouterr().out
    assert code == 0 and text.startswith("PLAN:") and "1:(go_down,{})" in text
    assert main(["abstract", "--data", str(trial / "data.txt"), "--out", str(tmp_path / "d.ppddl")]) == 0
    assert (tmp_path / "d.ppddl").read_text().startswith("(define (domain TreasureGame)")


def test_cli_reports_bad_input(tmp_path, capsys):
    assert main(["plan", "--domain", str(tmp_path / "missing"), "--problem", "x"]) == 2
    assert "error" in capsys.readouterr().err
