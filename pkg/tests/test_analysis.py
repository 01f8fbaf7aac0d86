import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from belief_swarm import belief as bf
from belief_swarm.analysis import (
    TRAJECTORY_COLUMNS,
    compare_methods,
    default_sweep,
    extract_thresholds,
    fit_thresholds,
    trajectory_export,
    trajectory_rows,
)
from belief_swarm.env import Policy, run_episode, zero_policy
from belief_swarm.model import ModelParams
from belief_swarm.rng import RandomSource
from belief_swarm.solver_vi import BeliefGrid, TablePolicy, value_iteration

P = ModelParams()


class SS(Policy):
    def __init__(self, s, S, representation="belief_mean"):
        self.s, self.S, self.representation = s, S, representation

    def act_batch(self, states, t):
        m = states[:, 0]
        return np.where(m <= self.s, self.S - m, 0.0)


def test_synthetic_policy_recovered():
    e = extract_thresholds(SS(35, 78), 0)
    assert abs(e.s - 35) <= 0.5 and abs(e.S - 78) <= 0.5
    assert e.r2 == 1.0 and e.shaped


@settings(max_examples=60)
@given(st.integers(1, 196), st.integers(1, 196))
def test_extractor_exact_on_grid(i, j):
    s, S = sorted((i * 0.5, j * 0.5))
    if S - s < 1.0:
        return
    e = extract_thresholds(SS(s, S), 3)
    assert e.s == s and e.S == S and e.r2 == 1.0 and e.shaped


def test_zero_policy_sentinel():
    e = extract_thresholds(zero_policy(), 0)
    assert not e.shaped and e.s < 0 and math.isnan(e.S) and e.r2 == 0.0


def test_non_threshold_policy_is_not_shaped():
    class Wiggle(Policy):
        representation = "belief_mean"

        def act_batch(self, states, t):
            return 30 + 20 * np.sin(states[:, 0] / 5)

    assert not extract_thresholds(Wiggle(), 0).shaped


def test_sweep_validation():
    with pytest.raises(ValueError):
        extract_thresholds(SS(30, 60), 0, sweep=np.linspace(10, 100, 181))
    with pytest.raises(ValueError):
        extract_thresholds(SS(30, 60), 0, sweep=np.linspace(0, 100, 11))
    assert len(default_sweep()) == 201


def test_belief_pair_needs_variance():
    pol = SS(30, 60, "belief_pair")
    with pytest.raises(ValueError):
        extract_thresholds(pol, 0)
    assert extract_thresholds(pol, 0, variance=3.2).s == 30
    with pytest.raises(ValueError):
        extract_thresholds(SS(30, 60, "history"), 0)


def test_threshold_csv(tmp_path):
    fit = fit_thresholds(SS(30, 60), [0, 5, 9])
    assert fit[5].S == 60 and len(fit) == 3
    with pytest.raises(KeyError):
        fit[4]
    path = tmp_path / "th.csv"
    fit.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# schema:") and lines[1] == "t,s,S,r2,shaped"
    assert lines[2].split(",")[-1] == "1"


def test_same_policy_twice_gives_identical_rows():
    p = P.replace(T=10)
    rep = compare_methods([("a", SS(25, 40), "belief_mean", None),
                           ("b", SS(25, 40), "belief_mean", 1.5)], 200, 3, p)
    assert len(rep.rows) == 2
    assert rep.row("a").mean_cost == rep.row("b").mean_cost
    assert rep.paired_std_error("a", "b") == 0.0


def test_registration_order_is_irrelevant():
    p = P.replace(T=10)
    m1 = ("lo", SS(22, 40), "belief_mean", None)
    m2 = ("hi", SS(30, 50), "belief_mean", None)
    r1 = compare_methods([m1, m2], 300, 4, p)
    r2 = compare_methods([m2, m1], 300, 4, p)
    assert r1.to_dict() == r2.to_dict()
    assert [r.label for r in r1.rows] == ["hi", "lo"]
    with pytest.raises(ValueError):
        compare_methods([], 10, 1, p)


def test_vi_finer_grid_not_worse():
    sched = bf.build_variance_schedule(P)
    _, fine = value_iteration(BeliefGrid(0.5), 0.5, sched, P)
    _, coarse = value_iteration(BeliefGrid(2.0), 2.0, sched, P)
    rep = compare_methods([("vi-0.5", TablePolicy(fine), "belief_mean", None),
                           ("vi-2.0", TablePolicy(coarse), "belief_mean", None)], 3000, 11, P)
    diff = rep.row("vi-0.5").mean_cost - rep.row("vi-2.0").mean_cost
    assert diff <= rep.paired_std_error("vi-0.5", "vi-2.0")


def test_report_files_recompute(tmp_path):
    p = P.replace(T=10)
    rep = compare_methods([("x", SS(25, 40), "belief_mean", 2.0)], 50, 4, p)
    rep.to_json(tmp_path / "c.json")
    rep.episode_costs_to_csv(tmp_path / "costs.csv")
    d = json.loads((tmp_path / "c.json").read_text())
    assert d["schema"].startswith("belief-swarm/comparison") and d["methods"][0]["training_seconds"] == 2.0
    with open(tmp_path / "costs.csv") as fh:
        fh.readline()
        costs = [float(r["x"]) for r in csv.DictReader(fh)]
    assert np.mean(costs) == pytest.approx(d["methods"][0]["mean_test_cost"], rel=1e-15)


def test_trajectory_export(tmp_path):
    tr = run_episode(SS(25, 45), "belief_mean", RandomSource(5), P)
    fit = fit_thresholds(SS(25, 45), range(P.T))
    rows = list(trajectory_rows(tr, fit))
    assert rows[0]["band_hi"] - rows[0]["x_hat"] == pytest.approx(1.96 * math.sqrt(3.2), rel=1e-12)
    assert 1.96 * math.sqrt(3.2) == pytest.approx(3.506, abs=1e-3)
    assert [r["recharge"] for r in rows] == [int(a > 0) for a in tr.a]
    assert all(r["s"] == 25 for r in rows)
    path = tmp_path / "traj.csv"
    trajectory_export(tr, fit, path)
    with open(path) as fh:
        assert fh.readline().startswith("# schema:")
        table = list(csv.DictReader(fh))
    assert tuple(table[0].keys()) == TRAJECTORY_COLUMNS
    y = [float(r["y"]) for r in table]
    a = [float(r["a"]) for r in table]
    replay = [b.mean for b in bf.replay_beliefs(y, a, P)]
    assert replay == [float(r["x_hat"]) for r in table]


def test_trajectory_without_thresholds():
    tr = run_episode(zero_policy(), "belief_mean", RandomSource(5), P.replace(T=3))
    assert all(math.isnan(r["s"]) for r in trajectory_rows(tr, None))
