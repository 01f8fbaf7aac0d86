"""DDPG agents over three state representations.

Approach 1 sees the padded reading/action history, approach 2 the belief
``(mean, variance)`` and approach 3 the belief mean alone. Approaches 2 and 3
also receive the normalized step index as a clock input. Rewards are
negated costs.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import belief as bf
from .env import DroneEnv, Policy, draw_episode_noise, evaluate_policy, state_dim
from .model import BATTERY_MAX, ModelParams
from .nn import AdamState, Mlp, adam_step, load_mlp, save_mlp, soft_update
from .rng import RandomSource

APPROACHES = {1: "history", 2: "belief_pair", 3: "belief_mean"}
ACTOR_HIDDEN = (128, 64)
CRITIC_HIDDEN = (256, 128)
SCHEMA_LOG = "# schema: belief-swarm/train-log v1"


class TrainingDiverged(RuntimeError):
    def __init__(self, episode: int, what: str):
        super().__init__(f"non-finite {what} at episode {episode}")
        self.episode = episode


@dataclass(frozen=True)
class TrainConfig:
    actor_lr: float = 1e-5
    critic_lr: float = 1e-3
    alpha: float = 0.95
    batch_size: int = 256
    buffer_size: int = 50_000
    tau: float = 0.005
    expl_sigma_start: float = 4.0
    expl_sigma_end: float = 0.5
    episodes: int = 10_000
    episode_length: int = 50
    eps_start: float = 0.9
    eps_end: float = 0.05
    eps_decay: float = 300.0
    action_tolerance: float = 0.5
    eval_every: int = 100
    eval_episodes: int = 100
    eval_seed: int | None = None
    reward_scale: float = 1.0

    def __post_init__(self):
        for name in ("actor_lr", "critic_lr", "batch_size", "buffer_size", "tau",
                     "episodes", "episode_length", "eps_decay", "eval_every", "eval_episodes",
                     "reward_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must lie in [0, 1)")
        if not 0 <= self.eps_end < self.eps_start <= 1:
            raise ValueError("need 0 <= eps_end < eps_start <= 1")
        if self.expl_sigma_start < 0 or self.expl_sigma_end < 0:
            raise ValueError("exploration noise must be >= 0")

    def replace(self, **kw) -> "TrainConfig":
        return replace(self, **kw)


# --------------------------------------------------------------------------- encoders

class StateEncoder:
    """Maps raw environment states to network inputs.

    ``dim`` is the size of the representation itself; ``network_dim`` adds
    the clock input where one is used.
    """

    def __init__(self, representation: str, T: int, var0: float):
        self.representation = representation
        self.T = T
        self.var0 = var0
        self.dim = state_dim(representation, T)
        self.network_dim = self.dim + (representation != "history")

    def encode(self, states: np.ndarray, t: int) -> np.ndarray:
        states = np.asarray(states, dtype=float)
        if self.representation == "history":
            out = states / BATTERY_MAX
            out[:, 0] = states[:, 0]   # already t/T
            return out
        clock = np.full((len(states), 1), t / self.T)
        if self.representation == "belief_mean":
            return np.hstack([states / BATTERY_MAX, clock])
        return np.hstack([states[:, :1] / BATTERY_MAX, states[:, 1:2] / self.var0, clock])


def dead_zone(a, tolerance: float):
    """Requests below ``tolerance`` become exactly zero (no landing)."""
    return np.where(a < tolerance, 0.0, a)


class ActorPolicy(Policy):
    def __init__(self, actor: Mlp, encoder: StateEncoder, tolerance: float = 0.5):
        self.actor = actor
        self.encoder = encoder
        self.tolerance = tolerance
        self.representation = encoder.representation

    def raw_action(self, states, t):
        return self.actor(self.encoder.encode(states, t))[:, 0]

    def act_batch(self, states, t):
        return dead_zone(self.raw_action(states, t), self.tolerance)


def make_actor(input_dim: int, rng: RandomSource) -> Mlp:
    return Mlp([input_dim, *ACTOR_HIDDEN, 1], head="sigmoid", output_scale=BATTERY_MAX, rng=rng)


def make_critic(input_dim: int, rng: RandomSource) -> Mlp:
    return Mlp([input_dim + 1, *CRITIC_HIDDEN, 1], head="identity", rng=rng)


# --------------------------------------------------------------------------- replay

@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.term = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self):
        return self._size

    def add(self, state, action, reward, next_state, terminal) -> None:
        if not math.isfinite(reward):
            raise ValueError("reward must be finite")
        i = self._next
        self.s[i], self.a[i], self.r[i] = state, action, reward
        self.s2[i], self.term[i] = next_state, terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def push(self, tr: Transition) -> None:
        self.add(tr.state, tr.action, tr.reward, tr.next_state, tr.terminal)

    def _ordered(self):
        if self._size < self.capacity:
            return np.arange(self._size)
        return (self._next + np.arange(self.capacity)) % self.capacity

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [Transition(self.s[i].copy(), float(self.a[i]), float(self.r[i]),
                           self.s2[i].copy(), bool(self.term[i])) for i in self._ordered()]

    def sample(self, n: int, rng: RandomSource):
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, n)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.term[idx]


# --------------------------------------------------------------------------- exploration

def epsilon_at(episode: int, cfg: TrainConfig) -> float:
    return cfg.eps_end + (cfg.eps_start - cfg.eps_end) * math.exp(-episode / cfg.eps_decay)


def expl_sigma_at(episode: int, cfg: TrainConfig) -> float:
    frac = min(1.0, episode / max(cfg.episodes - 1, 1))
    return cfg.expl_sigma_start + (cfg.expl_sigma_end - cfg.expl_sigma_start) * frac


def select_action(actor: Mlp, state_input, episode: int, rng: RandomSource, cfg: TrainConfig,
                  epsilon: float | None = None, sigma: float | None = None) -> float:
    """Epsilon-greedy outer layer, Gaussian perturbation of the actor inside."""
    eps = epsilon_at(episode, cfg) if epsilon is None else epsilon
    sig = expl_sigma_at(episode, cfg) if sigma is None else sigma
    if rng.uniform() < eps:
        return rng.uniform(0.0, BATTERY_MAX)
    a = float(actor(np.asarray(state_input, dtype=float))[0])
    if sig > 0:
        a += sig * rng.normal()
    return min(BATTERY_MAX, max(0.0, a))


def _critic_input(states, actions):
    return np.hstack([states, np.asarray(actions, dtype=float).reshape(-1, 1) / BATTERY_MAX])


def td_target(critic_target: Mlp, actor_target: Mlp, batch, alpha: float) -> np.ndarray:
    _, _, r, s2, term = batch
    a2 = actor_target(s2)[:, 0]
    q2 = critic_target(_critic_input(s2, a2))[:, 0]
    return r + alpha * np.where(term, 0.0, q2)


# --------------------------------------------------------------------------- training

@dataclass
class TrainingLog:
    episode: list = field(default_factory=list)
    ret: list = field(default_factory=list)
    discounted_return: list = field(default_factory=list)
    eval_cost: list = field(default_factory=list)
    epsilon: list = field(default_factory=list)
    expl_sigma: list = field(default_factory=list)

    def __len__(self):
        return len(self.episode)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(SCHEMA_LOG + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", "return", "eval_cost", "epsilon", "expl_sigma", "discounted_return"])
            for row in zip(self.episode, self.ret, self.eval_cost, self.epsilon,
                           self.expl_sigma, self.discounted_return):
                e, r, ev, eps, sig, dr = row
                w.writerow([e, repr(r), "" if ev is None else repr(ev), repr(eps), repr(sig), repr(dr)])


@dataclass
class TrainResult:
    approach: int
    actor: Mlp
    critic: Mlp
    encoder: StateEncoder
    log: TrainingLog
    wall_seconds: float
    tolerance: float

    @property
    def policy(self) -> ActorPolicy:
        return ActorPolicy(self.actor, self.encoder, self.tolerance)


class DdpgAgent:
    """Online/target actor-critic pair with their optimizers."""

    def __init__(self, input_dim: int, cfg: TrainConfig, rng: RandomSource):
        self.cfg = cfg
        self.actor = make_actor(input_dim, rng.child("init", 0))
        self.critic = make_critic(input_dim, rng.child("init", 1))
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = AdamState.for_params(self.actor.params, cfg.actor_lr)
        self.critic_opt = AdamState.for_params(self.critic.params, cfg.critic_lr)

    def update(self, batch) -> tuple[float, float]:
        """One critic step on squared TD error, one actor step on -Q."""
        s, a, _, _, _ = batch
        n = len(a)
        y = td_target(self.critic_target, self.actor_target, batch, self.cfg.alpha)
        q, cache = self.critic.forward_cache(_critic_input(s, a))
        diff = q[:, 0] - y
        critic_loss = float(np.mean(diff * diff))
        grads, _ = self.critic.backward(cache, (2.0 / n) * diff[:, None])
        adam_step(self.critic_opt, self.critic.params, grads)

        mu, acache = self.actor.forward_cache(s)
        qa, ccache = self.critic.forward_cache(_critic_input(s, mu[:, 0]))
        _, gin = self.critic.backward(ccache, np.full((n, 1), -1.0 / n), param_grads=False)
        agrads, _ = self.actor.backward(acache, gin[:, -1:] / BATTERY_MAX)
        adam_step(self.actor_opt, self.actor.params, agrads)

        soft_update(self.critic_target, self.critic, self.cfg.tau)
        soft_update(self.actor_target, self.actor, self.cfg.tau)
        return critic_loss, -float(np.mean(qa))


def train(approach: int, cfg: TrainConfig, params: ModelParams, seed: int,
          progress=None) -> TrainResult:
    """Train one DDPG agent; ``params.T`` must equal ``cfg.episode_length``."""
    if approach not in APPROACHES:
        raise ValueError(f"approach must be one of {sorted(APPROACHES)}")
    if params.T != cfg.episode_length:
        raise ValueError(f"episode_length {cfg.episode_length} != params.T {params.T}")
    start = time.perf_counter()
    representation = APPROACHES[approach]
    schedule = bf.build_variance_schedule(params)
    encoder = StateEncoder(representation, params.T, float(schedule.posterior_var[0]))
    root = RandomSource(seed)
    agent = DdpgAgent(encoder.network_dim, cfg, root)
    buffer = ReplayBuffer(cfg.buffer_size, encoder.network_dim)
    replay_rng = root.child("replay")
    env = DroneEnv(params, schedule)
    log = TrainingLog()
    policy = ActorPolicy(agent.actor, encoder, cfg.action_tolerance)
    eval_seed = seed if cfg.eval_seed is None else cfg.eval_seed
    T = params.T

    for ep in range(cfg.episodes):
        env.reset(draw_episode_noise(root.child("train", ep), T))
        expl = root.child("exploration", ep)
        eps, sig = epsilon_at(ep, cfg), expl_sigma_at(ep, cfg)
        s_in = encoder.encode(env.state(representation)[None, :], 0)[0]
        ret = 0.0
        for t in range(T):
            a = select_action(agent.actor, s_in, ep, expl, cfg, eps, sig)
            a = float(dead_zone(a, cfg.action_tolerance))
            info = env.step(a)
            s2_in = encoder.encode(env.state(representation)[None, :], t + 1)[0]
            buffer.add(s_in, info.applied_action, -cfg.reward_scale * info.cost, s2_in, info.done)
            ret -= info.cost
            s_in = s2_in
            if len(buffer) >= cfg.batch_size:
                closs, aloss = agent.update(buffer.sample(cfg.batch_size, replay_rng))
                if not (math.isfinite(closs) and math.isfinite(aloss)):
                    raise TrainingDiverged(ep, "loss")
        eval_cost = None
        if (ep + 1) % cfg.eval_every == 0 or ep + 1 == cfg.episodes:
            eval_cost = evaluate_policy(policy, representation, cfg.eval_episodes, eval_seed, params).mean_cost
            if not math.isfinite(eval_cost):
                raise TrainingDiverged(ep, "evaluation cost")
        log.episode.append(ep)
        log.ret.append(ret)
        log.discounted_return.append(-env.discounted)
        log.eval_cost.append(eval_cost)
        log.epsilon.append(eps)
        log.expl_sigma.append(sig)
        if progress is not None:
            progress(ep, log)

    return TrainResult(approach, agent.actor, agent.critic, encoder, log,
                       time.perf_counter() - start, cfg.action_tolerance)


# --------------------------------------------------------------------------- checkpoints

def save_checkpoint(result: TrainResult, directory, meta: dict | None = None) -> None:
    """Write ``actor.bin`` and ``critic.bin`` with what is needed to rebuild the policy."""
    enc = result.encoder
    info = {"approach": result.approach, "representation": enc.representation, "T": enc.T,
            "var0": enc.var0, "tolerance": result.tolerance}
    info.update(meta or {})
    save_mlp(f"{directory}/actor.bin", result.actor, info)
    save_mlp(f"{directory}/critic.bin", result.critic, info)


def load_actor_policy(path) -> tuple[ActorPolicy, dict]:
    actor, meta = load_mlp(path)
    for key in ("representation", "T", "var0", "tolerance"):
        if key not in meta:
            raise ValueError(f"{path}: not an actor checkpoint (missing {key!r})")
    encoder = StateEncoder(meta["representation"], meta["T"], meta["var0"])
    if actor.sizes[0] != encoder.network_dim:
        raise ValueError(f"{path}: input width {actor.sizes[0]} does not match the encoder")
    return ActorPolicy(actor, encoder, meta["tolerance"]), meta
