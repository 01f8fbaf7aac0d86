"""belief-swarm: one binary, one subcommand per experiment.

Every run resolves a full manifest (profile defaults, then a manifest file,
then the environment, then flags), writes it as ``manifest.json`` into a
fresh output directory, and can be replayed from that copy alone with
``belief-swarm rerun DIR/manifest.json --out NEW``. Wall-clock times go to
stdout and ``timing.txt`` only, so CSV and JSON outputs are bitwise
reproducible.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import math
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import belief as bf
from . import ddpg
from .analysis import compare_methods, fit_thresholds, trajectory_export
from .binfmt import FormatError
from .env import (
    NonFiniteActionError,
    draw_episode_noise,
    episode_source,
    evaluate_policy,
    full_charge_policy,
    run_episode_with_noise,
    run_swarm,
    zero_policy,
)
from .model import ConfigError, ModelParams, default_params, load_params, save_params
from .nn import load_mlp, weights_to_csv
from .solver_vi import (
    DEFAULT_QUAD_ORDER,
    BeliefGrid,
    TablePolicy,
    brute_force_value_iteration,
    load_solution,
    save_solution,
    tables_to_csv,
    value_iteration,
)

SCHEMA_MANIFEST = "belief-swarm/manifest v1"
SCHEMA_SUMMARY = "belief-swarm/simulate v1"
SCHEMA_SWEEP = "belief-swarm/scale-sweep v1"
SCHEMA_EVAL = "belief-swarm/evaluation v1"
SEED_ENV = "BELIEF_SWARM_SEED"

EXIT_USAGE = 2
EXIT_NUMERICAL = 3

PARAM_HELP = {
    "K": "fixed landing cost K",
    "c_tilde": "unit energy cost c̃",
    "x_safe": "safe level x_safe (%)",
    "beta_h": "holding cost β_h",
    "beta_c": "critical proximity cost β_c",
    "M": "depletion penalty M",
    "D_bar": "mean consumption D̄ (%)",
    "sigma_D": "consumption std σ_D (%)",
    "sigma_eta": "reading noise std σ_η (%)",
    "x0_bar": "initial mean x̄_0 (%)",
    "sigma_x0": "initial std σ_x0 (%)",
    "T": "horizon T (steps)",
    "alpha": "discount α",
}

_SOLVER = {"delta": 0.5, "action_step": None, "grid_lower": -20.0, "grid_upper": 120.0,
           "quad_order": DEFAULT_QUAD_ORDER}
_TRAIN = {f.name: f.default for f in dataclasses.fields(ddpg.TrainConfig)}

PROFILES = {
    "paper": {
        "params": {},
        "solver": {},
        "training": {"episodes": 10_000},
        "evaluation": {"n_episodes": 3000, "seed": 1},
        "swarm_sizes": [1, 5, 10, 20, 50],
    },
    "desk": {
        "params": {"T": 20},
        "solver": {},
        # 5x fewer episodes: epsilon decay scaled to match, faster actor,
        # costs scaled so critic targets are O(1)
        "training": {"episodes": 2000, "eps_decay": 60.0, "actor_lr": 1e-3, "reward_scale": 0.01},
        "evaluation": {"n_episodes": 3000, "seed": 1},
        "swarm_sizes": [1, 5, 10, 20, 50],
    },
    "smoke": {
        "params": {"T": 5},
        "solver": {"delta": 2.0},
        # 50 x 5 transitions never fill a 256 batch; 64 lets updates happen
        "training": {"episodes": 50, "batch_size": 64, "eval_every": 25, "eval_episodes": 20},
        "evaluation": {"n_episodes": 100, "seed": 1},
        "swarm_sizes": [1, 2, 3],
    },
}


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------- manifest

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _abspath(p):
    return None if p is None else str(Path(p).expanduser().resolve())


def _policy_spec(spec: str) -> str:
    if spec in ("zero", "full"):
        return spec
    kind, sep, path = spec.partition(":")
    if not sep or kind not in ("vi", "ddpg") or not path:
        raise UsageError(f"bad policy {spec!r}: expected zero, full, vi:PATH or ddpg:PATH")
    return f"{kind}:{_abspath(path)}"


def resolve_manifest(args) -> dict:
    """Combine profile defaults, an optional manifest file, the environment and flags."""
    loaded = {}
    if getattr(args, "manifest", None):
        try:
            loaded = json.loads(Path(args.manifest).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read manifest {args.manifest}: {exc}") from None
        if loaded.get("schema") != SCHEMA_MANIFEST:
            raise UsageError(f"{args.manifest}: not a {SCHEMA_MANIFEST} manifest")
    profile = args.profile or loaded.get("profile") or "desk"
    if profile not in PROFILES:
        raise UsageError(f"unknown profile {profile!r}")
    prof = PROFILES[profile]
    m = {
        "schema": SCHEMA_MANIFEST,
        "profile": profile,
        "params_file": None,
        "params": _merge(default_params().to_mapping(), prof["params"]),
        "solver": _merge(_SOLVER, prof["solver"]),
        "training": _merge(_TRAIN, prof["training"]),
        "evaluation": dict(prof["evaluation"]),
        "swarm_sizes": list(prof["swarm_sizes"]),
        "threads": 1,
        "command": {},
    }
    if loaded:
        m = _merge(m, {k: v for k, v in loaded.items() if k not in ("schema", "profile")})
        if "swarm_sizes" in loaded:
            m["swarm_sizes"] = list(loaded["swarm_sizes"])

    if getattr(args, "params", None):
        m["params_file"] = _abspath(args.params)
        try:
            m["params"] = load_params(args.params).to_mapping()
        except OSError as exc:
            raise UsageError(f"cannot read params file: {exc}") from None
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep or key not in PARAM_HELP:
            raise UsageError(f"bad --set {item!r}: expected NAME=VALUE with NAME in {', '.join(PARAM_HELP)}")
        m["params"][key] = value
    m["params"] = ModelParams.from_mapping(m["params"]).to_mapping()

    env_seed = os.environ.get(SEED_ENV)
    if env_seed is not None:
        try:
            m["evaluation"]["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    if getattr(args, "seed", None) is not None:
        m["evaluation"]["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        m["threads"] = args.threads
    if m["threads"] < 1:
        raise UsageError("--threads must be >= 1")

    flags = {"delta": "delta", "action_step": "action_step", "grid_lo": "grid_lower",
             "grid_hi": "grid_upper", "quad_order": "quad_order"}
    for flag, key in flags.items():
        if getattr(args, flag, None) is not None:
            m["solver"][key] = getattr(args, flag)
    m["training"]["episode_length"] = m["params"]["T"]
    m["training"]["alpha"] = m["params"]["alpha"]
    m["command"] = _merge(m.get("command") or {}, _command_args(args))
    m["command"]["name"] = args.command
    return m


def _command_args(args) -> dict:
    cmd = {}
    if getattr(args, "policy", None):
        cmd["policy"] = _policy_spec(args.policy)
    if getattr(args, "approach", None) is not None:
        cmd["approach"] = args.approach
    if getattr(args, "episodes", None) is not None:
        if args.episodes < 1:
            raise UsageError("--episodes must be >= 1")
        cmd["episodes"] = args.episodes
    if getattr(args, "check_tiny", False):
        cmd["check_tiny"] = True
    if getattr(args, "sizes", None):
        cmd["sizes"] = args.sizes
    if getattr(args, "method", None):
        methods = []
        for item in args.method:
            label, sep, spec = item.partition("=")
            if not sep or not label:
                raise UsageError(f"bad --method {item!r}: expected LABEL=POLICY")
            methods.append([label, _policy_spec(spec)])
        cmd["methods"] = methods
    if getattr(args, "times", None):
        cmd["times"] = args.times
    if getattr(args, "episode", None) is not None:
        cmd["episode"] = args.episode
    if getattr(args, "checkpoint", None):
        cmd["checkpoint"] = _abspath(args.checkpoint)
    return cmd


def _params(m) -> ModelParams:
    return ModelParams.from_mapping(m["params"])


def _train_config(m) -> ddpg.TrainConfig:
    kw = dict(m["training"])
    if "episodes" in m["command"] and m["command"]["name"] == "train":
        kw["episodes"] = m["command"]["episodes"]
    try:
        return ddpg.TrainConfig(**kw)
    except TypeError as exc:
        raise UsageError(f"bad training section: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid(m) -> tuple[BeliefGrid, float, int]:
    s = m["solver"]
    try:
        grid = BeliefGrid(float(s["delta"]), float(s["grid_lower"]), float(s["grid_upper"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    step = float(s["action_step"]) if s["action_step"] is not None else grid.delta
    if not step > 0:
        raise UsageError("action step must be > 0")
    return grid, step, int(s["quad_order"])


# --------------------------------------------------------------------------- policies

def _find(path: str, name: str) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / name
    if not p.is_file():
        raise UsageError(f"policy artifact not found: {p}")
    return p


def _read_timing(directory: Path):
    f = directory / "timing.txt"
    if f.is_file():
        for line in f.read_text().splitlines():
            key, _, value = line.partition("=")
            if key.strip() == "wall_seconds":
                return float(value)
    return None


def load_policy(spec: str, params: ModelParams):
    """Return ``(policy, representation, training_seconds)`` for a policy spec."""
    if spec == "zero":
        return zero_policy(), "belief_mean", None
    if spec == "full":
        return full_charge_policy(), "belief_mean", None
    kind, _, path = spec.partition(":")
    try:
        if kind == "vi":
            f = _find(path, "vi_solution.bin")
            _, pt, _ = load_solution(f)
            if pt.T != params.T:
                raise UsageError(f"{f}: policy horizon {pt.T} != T={params.T}")
            return TablePolicy(pt), "belief_mean", _read_timing(f.parent)
        f = _find(path, "actor.bin")
        policy, meta = ddpg.load_actor_policy(f)
    except (FormatError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load policy {spec}: {exc}") from None
    if meta["T"] != params.T:
        raise UsageError(f"{f}: trained with T={meta['T']}, current T={params.T}")
    return policy, meta["representation"], _read_timing(f.parent)


# --------------------------------------------------------------------------- output

class OutputDir:
    """Build outputs in a hidden sibling directory, then rename into place."""

    def __init__(self, path, overwrite: bool = False):
        self.final = Path(path).expanduser().resolve()
        self.overwrite = overwrite
        if self.final.exists() and any(self.final.iterdir()) and not overwrite:
            raise UsageError(f"output directory {self.final} exists and is not empty (use --overwrite)")

    def __enter__(self) -> Path:
        self.final.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.final.name}.", dir=self.final.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.final.exists():
            shutil.rmtree(self.final)
        os.replace(self.tmp, self.final)
        return False


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_timing(out: Path, seconds: float, extra: dict | None = None) -> None:
    lines = [f"wall_seconds = {seconds!r}"]
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {v!r}")
    (out / "timing.txt").write_text("\n".join(lines) + "\n")


def _evaluation_dict(ev, n, seed) -> dict:
    return {
        "schema": SCHEMA_EVAL,
        "n_episodes": n,
        "seed": seed,
        "mean_cost": ev.mean_cost,
        "std_error": ev.std_error,
        "critical_events": ev.critical_event_count,
    }


# --------------------------------------------------------------------------- commands

def cmd_simulate(m, out: Path) -> float:
    params = _params(m)
    cmd = m["command"]
    if "policy" not in cmd:
        raise UsageError("simulate needs --policy")
    policy, rep, _ = load_policy(cmd["policy"], params)
    n = cmd.get("episodes", m["evaluation"]["n_episodes"])
    seed = m["evaluation"]["seed"]
    start = time.perf_counter()
    costs, critical = [], []
    for e in range(n):
        noise = draw_episode_noise(episode_source(seed, 0, e), params.T)
        tr = run_episode_with_noise(policy, rep, noise, params)
        tr.to_csv(out / f"trace_{e:05d}.csv")
        costs.append(tr.total_cost)
        critical.append(tr.critical(params.x_safe))
    arr = np.array(costs)
    se = float(np.std(arr, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    _write_json(out / "summary.json", {
        "schema": SCHEMA_SUMMARY, "policy": cmd["policy"], "n_episodes": n, "seed": seed,
        "mean_cost": float(arr.mean()), "std_error": se, "critical_events": int(sum(critical)),
        "episode_costs": costs,
    })
    print(f"simulated {n} episodes: mean cost {arr.mean():.4f} (se {se:.4f})")
    return time.perf_counter() - start


def _check_tiny(params: ModelParams, quad_order: int) -> bool:
    p = params.replace(T=3)
    sched = bf.build_variance_schedule(p)
    g = BeliefGrid(14.0)
    vt, pt = value_iteration(g, 50.0, sched, p, quad_order)
    vb, pb = brute_force_value_iteration(g, 50.0, sched, p, quad_order)
    err = float(np.max(np.abs(vt.V - vb.V)))
    ok = err <= 1e-12 and bool(np.array_equal(pt.actions, pb.actions))
    print(f"tiny-instance oracle (11 nodes, 3 actions, T=3): max |dV| = {err:.3e} -> {'PASS' if ok else 'FAIL'}")
    return ok


def cmd_solve_vi(m, out: Path) -> float:
    params = _params(m)
    grid, step, order = _grid(m)
    cmd = m["command"]
    if cmd.get("check_tiny") and not _check_tiny(params, order):
        raise NumericalFailure("tiny-instance oracle mismatch")
    sched = bf.build_variance_schedule(params)
    start = time.perf_counter()
    try:
        vt, pt = value_iteration(grid, step, sched, params, order)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seconds = time.perf_counter() - start
    save_solution(out / "vi_solution.bin", vt, pt, {"T": params.T})
    tables_to_csv(out / "vi_tables.csv", vt, pt)
    sched.to_csv(out / "variance_schedule.csv")
    fit_thresholds(TablePolicy(pt), range(params.T)).to_csv(out / "thresholds.csv")
    n, seed = cmd.get("episodes", m["evaluation"]["n_episodes"]), m["evaluation"]["seed"]
    ev = evaluate_policy(TablePolicy(pt), "belief_mean", n, seed, params, threads=m["threads"])
    _write_json(out / "evaluation.json", _evaluation_dict(ev, n, seed))
    print(f"value iteration: delta={grid.delta} action_step={step} nodes={grid.n} "
          f"solved in {seconds:.3f} s; evaluated cost {ev.mean_cost:.4f} (se {ev.std_error:.4f})")
    return seconds


class NumericalFailure(Exception):
    pass


def cmd_train(m, out: Path) -> float:
    params = _params(m)
    cmd = m["command"]
    approach = cmd.get("approach")
    if approach not in ddpg.APPROACHES:
        raise UsageError("train needs --approach 1, 2 or 3")
    cfg = _train_config(m)
    seed = m["evaluation"]["seed"]

    def progress(ep, log):
        if log.eval_cost[-1] is not None:
            print(f"episode {ep + 1}/{cfg.episodes}: eval cost {log.eval_cost[-1]:.4f}", flush=True)

    try:
        res = ddpg.train(approach, cfg, params, seed, progress=progress)
    except ddpg.TrainingDiverged as exc:
        raise NumericalFailure(f"training diverged at episode {exc.episode}: {exc}") from None
    ddpg.save_checkpoint(res, out)
    res.log.to_csv(out / "train_log.csv")
    if res.encoder.representation != "history":
        sched = bf.build_variance_schedule(params)
        fit_thresholds(res.policy, range(params.T), schedule=sched,
                       tolerance=cfg.action_tolerance).to_csv(out / "thresholds.csv")
    n = m["evaluation"]["n_episodes"]
    ev = evaluate_policy(res.policy, res.encoder.representation, n, seed, params, threads=m["threads"])
    summary = _evaluation_dict(ev, n, seed)
    summary["approach"] = approach
    summary["state_dim"] = res.encoder.dim
    _write_json(out / "evaluation.json", summary)
    print(f"approach {approach} ({res.encoder.representation}, state dim {res.encoder.dim}): "
          f"trained in {res.wall_seconds:.2f} s; evaluated cost {ev.mean_cost:.4f} (se {ev.std_error:.4f})")
    return res.wall_seconds


def cmd_scale_sweep(m, out: Path) -> float:
    params = _params(m)
    cmd = m["command"]
    if "policy" not in cmd:
        raise UsageError("scale-sweep needs --policy")
    policy, rep, _ = load_policy(cmd["policy"], params)
    sizes = cmd.get("sizes", m["swarm_sizes"])
    if not sizes or min(sizes) < 1:
        raise UsageError("swarm sizes must be >= 1")
    n, seed = cmd.get("episodes", m["evaluation"]["n_episodes"]), m["evaluation"]["seed"]
    rows, timings = [], {}
    start = time.perf_counter()
    for N in sizes:
        t0 = time.perf_counter()
        res = run_swarm(policy, rep, N, n, seed, params, threads=m["threads"])
        timings[f"wall_seconds_N{N}"] = time.perf_counter() - t0
        rows.append({"n_drones": N, "mean_cost_per_drone": res.mean_cost_per_drone,
                     "total_system_cost": res.total_system_cost,
                     "critical_event_count": res.critical_event_count})
        print(f"N={N}: per-drone {res.mean_cost_per_drone:.4f}, total {res.total_system_cost:.4f}, "
              f"{timings[f'wall_seconds_N{N}']:.2f} s", flush=True)
    per = [r["mean_cost_per_drone"] for r in rows]
    spread = (max(per) - min(per)) / float(np.mean(per))
    _write_json(out / "scale_sweep.json", {"schema": SCHEMA_SWEEP, "policy": cmd["policy"],
                                           "n_episodes": n, "seed": seed, "rows": rows,
                                           "relative_spread": spread})
    seconds = time.perf_counter() - start
    _write_timing(out, seconds, timings)
    return seconds


def cmd_compare(m, out: Path) -> float:
    params = _params(m)
    cmd = m["command"]
    if not cmd.get("methods"):
        raise UsageError("compare needs at least one --method LABEL=POLICY")
    methods = [(label, *load_policy(spec, params)) for label, spec in cmd["methods"]]
    n, seed = cmd.get("episodes", m["evaluation"]["n_episodes"]), m["evaluation"]["seed"]
    start = time.perf_counter()
    rep = compare_methods(methods, n, seed, params, threads=m["threads"])
    rep.to_json(out / "comparison.json")
    rep.episode_costs_to_csv(out / "episode_costs.csv")
    for r in rep.rows:
        print(f"{r.label}: {r.mean_cost:.4f} (se {r.std_error:.4f}), critical {r.critical_events}")
    return time.perf_counter() - start


def cmd_analyze(m, out: Path) -> float:
    params = _params(m)
    cmd = m["command"]
    if "policy" not in cmd:
        raise UsageError("analyze needs --policy")
    policy, rep, _ = load_policy(cmd["policy"], params)
    start = time.perf_counter()
    times = cmd.get("times") or list(range(params.T))
    if any(not 0 <= t < params.T for t in times):
        raise UsageError(f"--times must lie in [0, {params.T})")
    fit = None
    if rep != "history":
        sched = bf.build_variance_schedule(params)
        fit = fit_thresholds(policy, times, schedule=sched)
        fit.to_csv(out / "thresholds.csv")
    e = cmd.get("episode", 0)
    noise = draw_episode_noise(episode_source(m["evaluation"]["seed"], 0, e), params.T)
    trace = run_episode_with_noise(policy, rep, noise, params)
    trajectory_export(trace, fit, out / "trajectory.csv")
    if fit is not None:
        for entry in fit:
            if entry.t in (0, params.T // 2, params.T - 1):
                print(f"t={entry.t}: s={entry.s} S={entry.S} r2={entry.r2:.4f} shaped={entry.shaped}")
    return time.perf_counter() - start


def cmd_export_weights(m, out: Path) -> float:
    cmd = m["command"]
    if "checkpoint" not in cmd:
        raise UsageError("export-weights needs --checkpoint")
    start = time.perf_counter()
    try:
        net, _ = load_mlp(cmd["checkpoint"])
    except (OSError, FormatError) as exc:
        raise UsageError(f"cannot read checkpoint: {exc}") from None
    weights_to_csv(net, out / "weights.csv")
    return time.perf_counter() - start


COMMANDS = {
    "simulate": cmd_simulate,
    "solve-vi": cmd_solve_vi,
    "train": cmd_train,
    "scale-sweep": cmd_scale_sweep,
    "compare": cmd_compare,
    "analyze": cmd_analyze,
    "export-weights": cmd_export_weights,
}


# --------------------------------------------------------------------------- parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--manifest", metavar="FILE", help="JSON manifest to start from")
    p.add_argument("--profile", choices=sorted(PROFILES),
                   help="parameter scale: paper (T=50, 10k episodes), desk (T=20, 2k), smoke (T=5, 50)")
    p.add_argument("--params", "--config", dest="params", metavar="FILE",
                   help="model parameter file (key = value, parameter-table names)")
    p.add_argument("--set", action="append", metavar="NAME=VALUE",
                   help="override one model parameter: " + "; ".join(f"{k}: {v}" for k, v in PARAM_HELP.items()).replace("%", "%%"))
    p.add_argument("--seed", type=int, help=f"root seed (overrides ${SEED_ENV} and the manifest)")
    p.add_argument("--threads", type=int, help="worker cap for batched evaluation")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory (created atomically)")
    p.add_argument("--overwrite", action="store_true", help="replace a non-empty output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="belief-swarm", description=__doc__.split("\n\n")[0],
                                     formatter_class=argparse.RawDescriptionHelpFormatter,
                                     epilog="exit codes: 0 success, 2 usage/config error, 3 numerical failure")
    sub = parser.add_subparsers(dest="command", required=True)
    policy_help = "zero | full | vi:PATH | ddpg:PATH (file or output directory)"

    p = sub.add_parser("simulate", help="write per-episode traces for a policy")
    _common(p)
    p.add_argument("--policy", help=policy_help)
    p.add_argument("--episodes", type=int, help="number of episodes")

    p = sub.add_parser("solve-vi", help="value iteration on the belief-mean grid")
    _common(p)
    p.add_argument("--delta", type=float, help="grid step Δ (%%)")
    p.add_argument("--action-step", type=float, help="action grid step (default: Δ)")
    p.add_argument("--grid-lo", type=float, help="lowest grid node (default -20)")
    p.add_argument("--grid-hi", type=float, help="highest grid node (default 120)")
    p.add_argument("--quad-order", type=int, help="Gauss-Hermite nodes for expected cost")
    p.add_argument("--episodes", type=int, help="evaluation episodes")
    p.add_argument("--check-tiny", action="store_true", help="run the brute-force oracle first; print PASS/FAIL")

    p = sub.add_parser("train", help="train a DDPG agent")
    _common(p)
    p.add_argument("--approach", type=int, choices=sorted(ddpg.APPROACHES),
                   help="1: reading/action history (2T+2), 2: belief (mean, variance), 3: belief mean")
    p.add_argument("--episodes", type=int, help="training episodes")

    p = sub.add_parser("scale-sweep", help="per-drone and total cost across swarm sizes N")
    _common(p)
    p.add_argument("--policy", help=policy_help)
    p.add_argument("--sizes", type=int, nargs="+", metavar="N", help="swarm sizes")
    p.add_argument("--episodes", type=int, help="episodes per drone")

    p = sub.add_parser("compare", help="evaluate several policies on common random numbers")
    _common(p)
    p.add_argument("--method", action="append", metavar="LABEL=POLICY", help=policy_help)
    p.add_argument("--episodes", type=int, help="test episodes")

    p = sub.add_parser("analyze", help="threshold fit (s_t, S_t) and an annotated trajectory")
    _common(p)
    p.add_argument("--policy", help=policy_help)
    p.add_argument("--times", type=int, nargs="+", metavar="t", help="steps to fit (default: all)")
    p.add_argument("--episode", type=int, help="episode index for the trajectory (default 0)")

    p = sub.add_parser("export-weights", help="dump a network checkpoint as CSV")
    _common(p)
    p.add_argument("--checkpoint", metavar="FILE", help="actor.bin or critic.bin")

    p = sub.add_parser("rerun", help="replay a written manifest.json into a new directory")
    p.add_argument("manifest_copy", metavar="MANIFEST")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--overwrite", action="store_true")
    return parser


def run(m: dict, out_dir, overwrite: bool = False) -> None:
    name = m["command"]["name"]
    with OutputDir(out_dir, overwrite) as out:
        _write_json(out / "manifest.json", m)
        if m.get("params_file"):
            save_params(_params(m), out / "params.cfg")
        seconds = COMMANDS[name](m, out)
        if not (out / "timing.txt").exists():
            _write_timing(out, seconds)
    print(f"wall-clock {seconds:.3f} s; outputs in {Path(out_dir).resolve()}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "rerun":
            try:
                m = json.loads(Path(args.manifest_copy).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read manifest: {exc}") from None
            if m.get("schema") != SCHEMA_MANIFEST or m.get("command", {}).get("name") not in COMMANDS:
                raise UsageError(f"{args.manifest_copy}: not a resolved manifest")
            env_seed = os.environ.get(SEED_ENV)
            if env_seed is not None:
                m["evaluation"]["seed"] = int(env_seed)
            run(m, args.out, args.overwrite)
        else:
            run(resolve_manifest(args), args.out, args.overwrite)
    except (UsageError, ConfigError) as exc:
        print(f"belief-swarm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, NonFiniteActionError) as exc:
        print(f"belief-swarm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
