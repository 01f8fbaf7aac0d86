"""Post-hoc analysis of policies: (s, S) threshold fits, head-to-head
comparisons under common random numbers, and annotated trajectory exports.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .belief import VarianceSchedule
from .env import EpisodeTrace, Policy, evaluate_policy
from .model import ModelParams

SCHEMA_THRESHOLDS = "# schema: belief-swarm/thresholds v1"
SCHEMA_TRAJECTORY = "# schema: belief-swarm/trajectory v1"
SCHEMA_COMPARISON = "belief-swarm/comparison v1"
SCHEMA_EPISODE_COSTS = "# schema: belief-swarm/episode-costs v1"
DEFAULT_TOLERANCE = 0.5
SHAPE_R2 = 0.95
Z95 = 1.96


def default_sweep(step: float = 0.5) -> np.ndarray:
    return np.linspace(0.0, 100.0, int(round(100.0 / step)) + 1)


@dataclass(frozen=True)
class ThresholdEntry:
    t: int
    s: float
    S: float
    r2: float
    shaped: bool


@dataclass
class ThresholdFit:
    entries: list[ThresholdEntry] = field(default_factory=list)

    def __getitem__(self, t: int) -> ThresholdEntry:
        for e in self.entries:
            if e.t == t:
                return e
        raise KeyError(t)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(SCHEMA_THRESHOLDS + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "s", "S", "r2", "shaped"])
            for e in self.entries:
                w.writerow([e.t, repr(e.s), repr(e.S), repr(e.r2), int(e.shaped)])


def _policy_states(policy: Policy, sweep: np.ndarray, variance: float | None) -> np.ndarray:
    rep = policy.representation
    if rep == "belief_mean":
        return sweep[:, None]
    if rep == "belief_pair":
        if variance is None:
            raise ValueError("belief_pair policies need the belief variance at t")
        return np.column_stack([sweep, np.full(len(sweep), variance)])
    raise ValueError(f"cannot sweep a {rep!r} policy over belief means")


def extract_thresholds(policy: Policy, t: int, sweep=None, variance: float | None = None,
                       tolerance: float = DEFAULT_TOLERANCE) -> ThresholdEntry:
    """Fit ``a = 0 above s, S - x_hat below`` to the policy at step ``t``.

    ``s`` is the largest swept mean whose action exceeds ``tolerance`` and
    ``S`` the median order-up-to level over the charging region. With no
    charging region ``s`` is a sentinel one step below the sweep.
    """
    sweep = default_sweep() if sweep is None else np.asarray(sweep, dtype=float)
    steps = np.diff(sweep)
    if sweep[0] > 0 or sweep[-1] < 100 or np.any(steps <= 0) or steps.max() > 1.0 + 1e-12:
        raise ValueError("sweep must be increasing, cover [0, 100], step <= 1")
    a = np.asarray(policy.act_batch(_policy_states(policy, sweep, variance), t), dtype=float)
    charging = a > tolerance
    if not charging.any():
        return ThresholdEntry(t, float(sweep[0] - steps[0]), math.nan, 0.0, False)
    s = float(sweep[charging].max())
    S = float(np.median(sweep[charging] + a[charging]))
    pred = np.where(sweep <= s, S - sweep, 0.0)
    ss_res = float(np.sum((a - pred) ** 2))
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    r2 = min(1.0, max(0.0, r2))
    return ThresholdEntry(t, s, S, r2, bool(r2 >= SHAPE_R2 and s < S))


def fit_thresholds(policy: Policy, times, sweep=None, schedule: VarianceSchedule | None = None,
                   tolerance: float = DEFAULT_TOLERANCE) -> ThresholdFit:
    entries = []
    for t in times:
        var = None if schedule is None else float(schedule.posterior_var[t])
        entries.append(extract_thresholds(policy, t, sweep, var, tolerance))
    return ThresholdFit(entries)


# --------------------------------------------------------------------------- comparison

@dataclass
class MethodResult:
    label: str
    training_seconds: float | None
    mean_cost: float
    std_error: float
    critical_events: int
    episode_costs: np.ndarray

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "training_seconds": self.training_seconds,
            "mean_test_cost": self.mean_cost,
            "std_error": self.std_error,
            "critical_events": self.critical_events,
        }


@dataclass
class ComparisonReport:
    n_episodes: int
    seed: int
    rows: list[MethodResult]

    def row(self, label: str) -> MethodResult:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def paired_std_error(self, a: str, b: str) -> float:
        """Standard error of the per-episode cost difference between two methods."""
        d = self.row(a).episode_costs - self.row(b).episode_costs
        return float(np.std(d, ddof=1) / math.sqrt(len(d))) if len(d) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_COMPARISON,
            "n_episodes": self.n_episodes,
            "seed": self.seed,
            "methods": [r.to_dict() for r in self.rows],
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def episode_costs_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(SCHEMA_EPISODE_COSTS + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", *[r.label for r in self.rows]])
            for e in range(self.n_episodes):
                w.writerow([e, *[repr(float(r.episode_costs[e])) for r in self.rows]])


def compare_methods(methods, n_episodes: int, seed: int, params: ModelParams,
                    threads: int = 1) -> ComparisonReport:
    """Evaluate ``(label, policy, representation, training_seconds)`` tuples.

    Every method faces the same per-episode noise, so cost differences come
    from the policies alone. Rows are sorted by label.
    """
    if not methods:
        raise ValueError("need at least one method")
    rows = []
    for label, policy, rep, seconds in methods:
        ev = evaluate_policy(policy, rep, n_episodes, seed, params, threads=threads)
        rows.append(MethodResult(label, seconds, ev.mean_cost, ev.std_error,
                                 ev.critical_event_count, ev.episode_costs))
    rows.sort(key=lambda r: r.label)
    return ComparisonReport(n_episodes, seed, rows)


# --------------------------------------------------------------------------- trajectories

def trajectory_rows(trace: EpisodeTrace, thresholds: ThresholdFit | None = None):
    for t in range(len(trace)):
        half = Z95 * math.sqrt(float(trace.sigma2[t]))
        s = math.nan
        if thresholds is not None:
            try:
                s = thresholds[t].s
            except KeyError:
                pass
        xh = float(trace.x_hat[t])
        yield {
            "t": t,
            "x": float(trace.x[t]),
            "y": float(trace.y[t]),
            "x_hat": xh,
            "sigma2": float(trace.sigma2[t]),
            "a": float(trace.a[t]),
            "cost": float(trace.cost[t]),
            "failure": int(trace.failure[t]),
            "s": s,
            "band_lo": xh - half,
            "band_hi": xh + half,
            "recharge": int(trace.a[t] > 0),
        }


TRAJECTORY_COLUMNS = ("t", "x", "y", "x_hat", "sigma2", "a", "cost", "failure",
                      "s", "band_lo", "band_hi", "recharge")


def trajectory_export(trace: EpisodeTrace, thresholds: ThresholdFit | None, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_TRAJECTORY + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for row in trajectory_rows(trace, thresholds):
            w.writerow([v if isinstance(v, int) else repr(v) for v in row.values()])
