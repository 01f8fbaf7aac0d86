"""Episode engine: one drone as a gym-style environment, plus batched rollouts.

Per decision epoch: read the battery, update the belief, encode the state,
act, clip the action against the true level, transition, accrue the
discounted cost. The scalar :class:`DroneEnv` drives training loops; the
batched :func:`rollout` drives evaluation. Both consume pre-drawn
:class:`EpisodeNoise` and share all arithmetic, so they agree bitwise.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import belief as bf
from .model import (
    ModelParams,
    advance,
    clip_action,
    consumption_from_noise,
    discount_factors,
    initial_level_from_noise,
    observation_from_noise,
)
from .rng import RandomSource

REPRESENTATIONS = ("history", "belief_pair", "belief_mean")
SCHEMA_TRACE = "# schema: belief-swarm/trace v1"
SCHEMA_SWARM = "belief-swarm/swarm v1"
TRACE_COLUMNS = ("t", "x", "y", "x_hat", "sigma2", "a", "cost", "failure")

# Fixed chunking keeps batched numbers independent of the worker count.
EVAL_CHUNK = 500


class NonFiniteActionError(RuntimeError):
    pass


def state_dim(representation: str, T: int) -> int:
    if representation == "history":
        return 2 * T + 2
    if representation == "belief_pair":
        return 2
    if representation == "belief_mean":
        return 1
    raise ValueError(f"unknown representation {representation!r}")


class Policy:
    """Decision rule over one state representation.

    Subclasses implement :meth:`act_batch`; ``states`` has shape
    ``(n, state_dim)`` and the result shape ``(n,)``.
    """

    representation = "belief_mean"

    def act_batch(self, states: np.ndarray, t: int) -> np.ndarray:
        raise NotImplementedError

    def act(self, state, t: int) -> float:
        return float(self.act_batch(np.asarray(state, dtype=float)[None, :], t)[0])


class ConstantPolicy(Policy):
    """Always request the same charge (0 = never charge, 100 = top up)."""

    def __init__(self, action: float, representation: str = "belief_mean"):
        self.action = float(action)
        self.representation = representation

    def act_batch(self, states, t):
        return np.full(len(states), self.action)


def zero_policy(representation="belief_mean") -> ConstantPolicy:
    return ConstantPolicy(0.0, representation)


def full_charge_policy(representation="belief_mean") -> ConstantPolicy:
    return ConstantPolicy(100.0, representation)


# --------------------------------------------------------------------------- noise

@dataclass(frozen=True)
class EpisodeNoise:
    """Standard-normal draws for one episode (or a batch of episodes)."""

    initial: np.ndarray      # () or (n,)
    observation: np.ndarray  # (T,) or (n, T)
    consumption: np.ndarray  # (T,) or (n, T)


def draw_episode_noise(src: RandomSource, T: int) -> EpisodeNoise:
    return EpisodeNoise(
        initial=np.asarray(src.child("initial").normal()),
        observation=src.child("observation").normal(T),
        consumption=src.child("consumption").normal(T),
    )


def episode_source(seed: int, drone: int, episode: int) -> RandomSource:
    return RandomSource(seed, (drone, episode))


def batch_noise(seed: int, drone: int, episodes, T: int) -> EpisodeNoise:
    draws = [draw_episode_noise(episode_source(seed, drone, e), T) for e in episodes]
    return EpisodeNoise(
        initial=np.array([d.initial for d in draws], dtype=float),
        observation=np.array([d.observation for d in draws]).reshape(len(draws), T),
        consumption=np.array([d.consumption for d in draws]).reshape(len(draws), T),
    )


# --------------------------------------------------------------------------- traces

@dataclass
class EpisodeTrace:
    x: np.ndarray
    y: np.ndarray
    x_hat: np.ndarray
    sigma2: np.ndarray
    a: np.ndarray
    cost: np.ndarray
    discounted_cost_so_far: np.ndarray
    failure: np.ndarray

    def __len__(self):
        return len(self.x)

    @property
    def total_cost(self) -> float:
        return float(self.discounted_cost_so_far[-1])

    def critical(self, x_safe: float) -> bool:
        return bool(self.x.min() < x_safe)

    def rows(self):
        for t in range(len(self)):
            yield (
                t, repr(float(self.x[t])), repr(float(self.y[t])),
                repr(float(self.x_hat[t])), repr(float(self.sigma2[t])),
                repr(float(self.a[t])), repr(float(self.cost[t])), int(self.failure[t]),
            )

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(SCHEMA_TRACE + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            w.writerows(self.rows())


def read_trace_csv(path) -> dict:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# schema:"):
            fh.seek(0)
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in TRACE_COLUMNS}


# --------------------------------------------------------------------------- scalar env

@dataclass
class StepInfo:
    applied_action: float
    cost: float
    failure: bool
    done: bool


class DroneEnv:
    """Single-drone partially observed environment driven by pre-drawn noise."""

    def __init__(self, params: ModelParams, schedule: bf.VarianceSchedule | None = None):
        self.params = params
        self.schedule = schedule or bf.build_variance_schedule(params)
        self._disc = discount_factors(params.alpha, params.T)
        self._noise = None

    def reset(self, noise: EpisodeNoise) -> None:
        p = self.params
        self._noise = noise
        self.t = 0
        self.x = float(initial_level_from_noise(float(noise.initial), p))
        self.y = float(observation_from_noise(self.x, noise.observation[0], p))
        self.belief = bf.initial_belief(self.y, p)
        self.history = np.zeros(2 * p.T + 2)
        self.history[1] = self.y
        self.discounted = 0.0
        self._log = {k: [] for k in ("x", "y", "x_hat", "sigma2", "a", "cost", "disc", "failure")}

    def state(self, representation: str) -> np.ndarray:
        if representation == "belief_mean":
            return np.array([self.belief.mean], dtype=float)
        if representation == "belief_pair":
            return np.array([self.belief.mean, self.belief.var], dtype=float)
        if representation == "history":
            return self.history.copy()
        raise ValueError(f"unknown representation {representation!r}")

    def step(self, action: float) -> StepInfo:
        p = self.params
        if self._noise is None or self.t >= p.T:
            raise RuntimeError("step() called on a finished or unreset episode")
        if not math.isfinite(action):
            raise NonFiniteActionError(f"non-finite action {action!r} at step t={self.t}")
        t = self.t
        a = float(clip_action(self.x, action))
        d = consumption_from_noise(self._noise.consumption[t], p)
        nxt, _, cost, fail = advance(self.x, a, d, p)
        cost, fail = float(cost), bool(fail)
        self.discounted += self._disc[t] * cost
        log = self._log
        for k, v in (("x", self.x), ("y", self.y), ("x_hat", self.belief.mean),
                     ("sigma2", self.belief.var), ("a", a), ("cost", cost),
                     ("disc", self.discounted), ("failure", fail)):
            log[k].append(v)
        self.history[2 + 2 * t] = a
        self.t = t + 1
        self.x = float(nxt)
        pred = bf.predict(self.belief, a, p)
        if self.t < p.T:
            self.y = float(observation_from_noise(self.x, self._noise.observation[self.t], p))
            self.belief = bf.update(pred, self.y, p)
            self.history[0] = self.t / p.T
            self.history[1 + 2 * self.t] = self.y
        else:
            self.belief = pred
        return StepInfo(a, cost, fail, self.t >= p.T)

    def trace(self) -> EpisodeTrace:
        log = self._log
        return EpisodeTrace(
            x=np.array(log["x"]), y=np.array(log["y"]), x_hat=np.array(log["x_hat"]),
            sigma2=np.array(log["sigma2"]), a=np.array(log["a"]), cost=np.array(log["cost"]),
            discounted_cost_so_far=np.array(log["disc"]), failure=np.array(log["failure"], dtype=bool),
        )


def _check_repr(policy: Policy, representation: str):
    if representation not in REPRESENTATIONS:
        raise ValueError(f"unknown representation {representation!r}")
    if getattr(policy, "representation", representation) != representation:
        raise ValueError(
            f"policy expects {policy.representation!r} states, got {representation!r}"
        )


def run_episode_with_noise(policy: Policy, representation: str, noise: EpisodeNoise,
                           params: ModelParams, env: DroneEnv | None = None) -> EpisodeTrace:
    _check_repr(policy, representation)
    env = env or DroneEnv(params)
    env.reset(noise)
    for t in range(params.T):
        a = policy.act(env.state(representation), t)
        if not math.isfinite(a):
            raise NonFiniteActionError(f"policy returned {a!r} at step t={t}")
        env.step(a)
    return env.trace()


def run_episode(policy: Policy, representation: str, rng: RandomSource,
                params: ModelParams) -> EpisodeTrace:
    return run_episode_with_noise(policy, representation, draw_episode_noise(rng, params.T), params)


# --------------------------------------------------------------------------- batched engine

@dataclass
class BatchTrace:
    """Traces of ``n`` episodes stacked along axis 0, each of shape ``(n, T)``."""

    x: np.ndarray
    y: np.ndarray
    x_hat: np.ndarray
    sigma2: np.ndarray
    a: np.ndarray
    cost: np.ndarray
    discounted_cost_so_far: np.ndarray
    failure: np.ndarray
    next_x_hat_pred: np.ndarray = field(repr=False, default=None)

    @property
    def total_costs(self) -> np.ndarray:
        return self.discounted_cost_so_far[:, -1]

    def episode(self, i: int) -> EpisodeTrace:
        return EpisodeTrace(self.x[i], self.y[i], self.x_hat[i], self.sigma2[i], self.a[i],
                            self.cost[i], self.discounted_cost_so_far[i], self.failure[i])


def rollout(policy: Policy, representation: str, noise: EpisodeNoise,
            params: ModelParams, schedule: bf.VarianceSchedule | None = None) -> BatchTrace:
    """Run a batch of episodes in lockstep (vectorized over episodes)."""
    _check_repr(policy, representation)
    p = params
    T = p.T
    n = len(noise.initial)
    schedule = schedule or bf.build_variance_schedule(p)
    disc = discount_factors(p.alpha, T)
    out = {k: np.empty((n, T)) for k in ("x", "y", "x_hat", "sigma2", "a", "cost", "disc", "pred")}
    failure = np.empty((n, T), dtype=bool)

    x = initial_level_from_noise(noise.initial, p)
    y = observation_from_noise(x, noise.observation[:, 0], p)
    b = bf.initial_belief(y, p)
    hist = np.zeros((n, 2 * T + 2)) if representation == "history" else None
    if hist is not None:
        hist[:, 1] = y
    running = np.zeros(n)
    for t in range(T):
        if representation == "belief_mean":
            states = b.mean[:, None]
        elif representation == "belief_pair":
            states = np.column_stack([b.mean, np.full(n, b.var)])
        else:
            states = hist
        req = np.asarray(policy.act_batch(states, t), dtype=float)
        if not np.all(np.isfinite(req)):
            bad = int(np.flatnonzero(~np.isfinite(req))[0])
            raise NonFiniteActionError(f"policy returned {req[bad]!r} at step t={t} (episode {bad} of batch)")
        a = clip_action(x, req)
        d = consumption_from_noise(noise.consumption[:, t], p)
        nxt, _, cost, fail = advance(x, a, d, p)
        running = running + disc[t] * cost
        out["x"][:, t], out["y"][:, t], out["x_hat"][:, t] = x, y, b.mean
        out["sigma2"][:, t], out["a"][:, t], out["cost"][:, t] = b.var, a, cost
        failure[:, t] = fail
        out["disc"][:, t] = running
        pred = bf.predict(b, a, p)
        out["pred"][:, t] = pred.mean
        x = nxt
        if hist is not None:
            hist[:, 2 + 2 * t] = a
        if t + 1 < T:
            y = observation_from_noise(x, noise.observation[:, t + 1], p)
            b = bf.update(pred, y, p)
            if hist is not None:
                hist[:, 0] = (t + 1) / T
                hist[:, 1 + 2 * (t + 1)] = y
    return BatchTrace(out["x"], out["y"], out["x_hat"], out["sigma2"], out["a"], out["cost"],
                      out["disc"], failure, out["pred"])


# --------------------------------------------------------------------------- evaluation

@dataclass
class Evaluation:
    mean_cost: float
    std_error: float
    critical_event_count: int
    episode_costs: np.ndarray
    critical_flags: np.ndarray
    failure_counts: np.ndarray

    def as_tuple(self):
        return self.mean_cost, self.std_error, self.critical_event_count


def _summarize(costs: np.ndarray, critical: np.ndarray, failures: np.ndarray) -> Evaluation:
    n = len(costs)
    mean = float(np.mean(costs))
    se = float(np.std(costs, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Evaluation(mean, se, int(critical.sum()), costs, critical, failures)


def evaluate_policy(policy: Policy, representation: str, n_episodes: int, seed: int,
                    params: ModelParams, drone: int = 0, threads: int = 1) -> Evaluation:
    """Average discounted cost over ``n_episodes`` independent episodes.

    Episode ``e`` of drone ``d`` always sees the streams keyed
    ``(seed, d, e)``: every policy evaluated with the same seed faces the
    same noise (common random numbers).
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    _check_repr(policy, representation)
    schedule = bf.build_variance_schedule(params)
    chunks = [range(s, min(s + EVAL_CHUNK, n_episodes)) for s in range(0, n_episodes, EVAL_CHUNK)]

    def run(chunk):
        tr = rollout(policy, representation, batch_noise(seed, drone, chunk, params.T), params, schedule)
        return tr.total_costs, tr.x.min(axis=1) < params.x_safe, tr.failure.sum(axis=1)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    costs = np.concatenate([p[0] for p in parts])
    critical = np.concatenate([p[1] for p in parts])
    failures = np.concatenate([p[2] for p in parts])
    return _summarize(costs, critical, failures)


@dataclass
class SwarmResult:
    n_drones: int
    n_episodes: int
    per_drone_costs: list[float]
    per_drone_std_errors: list[float]
    total_system_cost: float
    critical_event_count: int

    @property
    def mean_cost_per_drone(self) -> float:
        return self.total_system_cost / self.n_drones

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_SWARM,
            "n_drones": self.n_drones,
            "n_episodes": self.n_episodes,
            "mean_cost_per_drone": self.mean_cost_per_drone,
            "total_system_cost": self.total_system_cost,
            "critical_event_count": self.critical_event_count,
            "per_drone_costs": self.per_drone_costs,
            "per_drone_std_errors": self.per_drone_std_errors,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


def run_swarm(policy: Policy, representation: str, n_drones: int, n_episodes: int,
              seed: int, params: ModelParams, threads: int = 1) -> SwarmResult:
    """Evaluate ``n_drones`` exchangeable drones under one shared policy."""
    if n_drones < 1:
        raise ValueError("n_drones must be >= 1")
    evals = [evaluate_policy(policy, representation, n_episodes, seed, params, drone=d, threads=threads)
             for d in range(n_drones)]
    per = [e.mean_cost for e in evals]
    total = 0.0
    for c in per:
        total += c
    return SwarmResult(n_drones, n_episodes, per, [e.std_error for e in evals], total,
                       sum(e.critical_event_count for e in evals))
