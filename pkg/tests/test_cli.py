import json
import time

import numpy as np
import pytest

from belief_swarm import cli, ddpg
from belief_swarm.env import evaluate_policy
from belief_swarm.model import ModelParams
from belief_swarm.solver_vi import TablePolicy, load_solution


def run(*argv):
    return cli.main([str(a) for a in argv])


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timing.txt"}


@pytest.fixture(autouse=True)
def no_env_seed(monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV, raising=False)


@pytest.fixture(scope="module")
def smoke_vi(tmp_path_factory):
    out = tmp_path_factory.mktemp("vi") / "vi"
    assert cli.main(["solve-vi", "--profile", "smoke", "--out", str(out)]) == 0
    return out


def test_simulate_zero_is_deterministic(tmp_path):
    assert run("simulate", "--profile", "smoke", "--policy", "zero", "--episodes", 10,
               "--seed", 1, "--out", tmp_path / "a") == 0
    traces = sorted((tmp_path / "a").glob("trace_*.csv"))
    assert len(traces) == 10
    assert traces[0].read_text().startswith("# schema:")
    assert run("rerun", tmp_path / "a" / "manifest.json", "--out", tmp_path / "b") == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["n_episodes"] == 10 and summary["seed"] == 1


@pytest.mark.parametrize("argv", [
    ["simulate", "--policy", "zero", "--episodes", "0"],
    ["simulate", "--policy", "vi:/nonexistent/dir"],
    ["simulate", "--policy", "bogus"],
    ["simulate"],
    ["solve-vi", "--delta", "0"],
    ["solve-vi", "--delta", "-1"],
    ["train"],
    ["simulate", "--policy", "zero", "--set", "alpha=2"],
    ["simulate", "--policy", "zero", "--set", "nope=1"],
    ["export-weights", "--checkpoint", "/nonexistent.bin"],
])
def test_usage_errors_exit_2(tmp_path, argv, capsys):
    assert run(*argv, "--profile", "smoke", "--out", tmp_path / "o") == cli.EXIT_USAGE
    assert "error" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_bad_flag_value_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("train", "--approach", 4, "--out", tmp_path / "o")
    assert exc.value.code == 2


def test_existing_output_needs_overwrite(tmp_path):
    out = tmp_path / "o"
    args = ["simulate", "--profile", "smoke", "--policy", "zero", "--episodes", 2, "--out", out]
    assert run(*args) == 0
    assert run(*args) == cli.EXIT_USAGE
    assert run(*args, "--overwrite") == 0
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_seed_precedence(tmp_path, monkeypatch):
    base = ["simulate", "--profile", "smoke", "--policy", "zero", "--episodes", 1]
    monkeypatch.setenv(cli.SEED_ENV, "77")
    assert run(*base, "--out", tmp_path / "env") == 0
    assert run(*base, "--seed", 5, "--out", tmp_path / "flag") == 0
    seed = lambda d: json.loads((tmp_path / d / "manifest.json").read_text())["evaluation"]["seed"]
    assert seed("env") == 77 and seed("flag") == 5


def test_params_file_and_set(tmp_path):
    cfg = tmp_path / "p.cfg"
    cfg.write_text("T = 7\nK = 3.5\n")
    assert run("simulate", "--policy", "zero", "--episodes", 1, "--params", cfg,
               "--set", "sigma_eta=2.5", "--out", tmp_path / "o") == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    p = ModelParams.from_mapping(m["params"])
    assert (p.T, p.K, p.sigma_eta) == (7, 3.5, 2.5)
    assert (tmp_path / "o" / "params.cfg").exists()


def test_solve_vi_artifacts_reload(smoke_vi):
    m = json.loads((smoke_vi / "manifest.json").read_text())
    params = ModelParams.from_mapping(m["params"])
    _, pt, _ = load_solution(smoke_vi / "vi_solution.bin")
    ev = evaluate_policy(TablePolicy(pt), "belief_mean", m["evaluation"]["n_episodes"],
                         m["evaluation"]["seed"], params)
    stored = json.loads((smoke_vi / "evaluation.json").read_text())
    assert ev.mean_cost == stored["mean_cost"]
    assert (smoke_vi / "thresholds.csv").read_text().splitlines()[1] == "t,s,S,r2,shaped"


def test_check_tiny_prints_pass(tmp_path, capsys):
    assert run("solve-vi", "--profile", "smoke", "--check-tiny", "--out", tmp_path / "o") == 0
    assert "PASS" in capsys.readouterr().out


def test_policy_horizon_mismatch(tmp_path, smoke_vi):
    assert run("simulate", "--profile", "desk", "--policy", f"vi:{smoke_vi}",
               "--out", tmp_path / "o") == cli.EXIT_USAGE


def test_smoke_training_is_fast_and_reproducible(tmp_path):
    start = time.perf_counter()
    assert run("train", "--profile", "smoke", "--approach", 3, "--out", tmp_path / "a") == 0
    assert time.perf_counter() - start < 10.0
    assert run("train", "--profile", "smoke", "--approach", 3, "--out", tmp_path / "b") == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a == b and {"actor.bin", "critic.bin", "train_log.csv", "thresholds.csv"} <= set(a)
    ev = json.loads(a["evaluation.json"])
    assert ev["state_dim"] == 1 and ev["approach"] == 3
    assert "wall_seconds" in (tmp_path / "a" / "timing.txt").read_text()
    assert "seconds" not in a["evaluation.json"].decode()


def test_train_history_has_no_threshold_file(tmp_path):
    assert run("train", "--profile", "smoke", "--approach", 1, "--episodes", 5,
               "--out", tmp_path / "a") == 0
    assert not (tmp_path / "a" / "thresholds.csv").exists()
    ev = json.loads((tmp_path / "a" / "evaluation.json").read_text())
    assert ev["state_dim"] == 2 * 5 + 2


def test_divergence_exits_3(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise ddpg.TrainingDiverged(17, "loss")

    monkeypatch.setattr(ddpg, "train", boom)
    assert run("train", "--profile", "smoke", "--approach", 3, "--out", tmp_path / "o") == cli.EXIT_NUMERICAL
    assert "episode 17" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_scale_sweep_totals(tmp_path, smoke_vi):
    assert run("scale-sweep", "--profile", "smoke", "--policy", f"vi:{smoke_vi}",
               "--out", tmp_path / "o") == 0
    d = json.loads((tmp_path / "o" / "scale_sweep.json").read_text())
    assert [r["n_drones"] for r in d["rows"]] == [1, 2, 3]
    for r in d["rows"]:
        assert r["total_system_cost"] == pytest.approx(r["n_drones"] * r["mean_cost_per_drone"], rel=1e-12)
    assert "wall_seconds_N3" in (tmp_path / "o" / "timing.txt").read_text()


def test_compare_reads_training_time(tmp_path, smoke_vi):
    assert run("compare", "--profile", "smoke", "--method", f"vi={'vi:' + str(smoke_vi)}",
               "--method", "zero=zero", "--out", tmp_path / "o") == 0
    d = json.loads((tmp_path / "o" / "comparison.json").read_text())
    rows = {r["label"]: r for r in d["methods"]}
    assert isinstance(rows["vi"]["training_seconds"], float)
    assert rows["zero"]["training_seconds"] is None


def test_analyze_and_export(tmp_path, smoke_vi):
    assert run("analyze", "--profile", "smoke", "--policy", f"vi:{smoke_vi}", "--episode", 3,
               "--out", tmp_path / "a") == 0
    lines = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 2 + 5
    assert run("analyze", "--profile", "smoke", "--policy", f"vi:{smoke_vi}", "--times", 9,
               "--out", tmp_path / "b") == cli.EXIT_USAGE
    assert run("train", "--profile", "smoke", "--approach", 2, "--episodes", 3, "--out", tmp_path / "t") == 0
    assert run("export-weights", "--checkpoint", tmp_path / "t" / "critic.bin", "--out", tmp_path / "w") == 0
    rows = (tmp_path / "w" / "weights.csv").read_text().splitlines()
    assert rows[1] == "layer,kind,row,col,value"
    n_params = sum(np.prod(s) for s in [(4, 256), (256,), (256, 128), (128,), (128, 1), (1,)])
    assert len(rows) == 2 + n_params


def test_rerun_rejects_non_manifest(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps({"schema": "something else"}))
    assert run("rerun", bad, "--out", tmp_path / "o") == cli.EXIT_USAGE
    assert run("simulate", "--manifest", bad, "--policy", "zero", "--out", tmp_path / "o") == cli.EXIT_USAGE
