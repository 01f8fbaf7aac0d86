"""Gaussian belief recursion for the battery level.

The cycle per decision epoch is: update with the reading of the current
level, act, then predict. Posterior variances do not depend on readings or
actions, so they are precomputed once per parameter set in a
:class:`VarianceSchedule`. Means are left unclamped (the Gaussian reduction
is exact only on the whole real line).

All functions accept scalar or array means.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ModelParams

SCHEMA_SCHEDULE = "# schema: belief-swarm/variance-schedule v1"


@dataclass(frozen=True)
class Belief:
    mean: float | np.ndarray
    var: float
    t: int

    def __post_init__(self):
        if not self.var > 0:
            raise ValueError(f"belief variance must be > 0, got {self.var}")


@dataclass(frozen=True)
class VarianceSchedule:
    """Deterministic filter quantities for t = 0..T.

    ``prior_var[t]`` and ``gain[t]`` are the prediction variance and gain
    used by the update that produces ``posterior_var[t]``; at t = 0 the
    prior is the initial-state distribution. ``process_noise_var[t]``
    (t < T) is the variance of the belief-mean innovation between t and t+1.
    """

    posterior_var: np.ndarray
    prior_var: np.ndarray
    gain: np.ndarray
    process_noise_var: np.ndarray

    @property
    def T(self) -> int:
        return len(self.process_noise_var)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(SCHEMA_SCHEDULE + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "posterior_var", "gain", "process_noise_var"])
            for t in range(self.T + 1):
                tau2 = repr(float(self.process_noise_var[t])) if t < self.T else ""
                w.writerow([t, repr(float(self.posterior_var[t])), repr(float(self.gain[t])), tau2])


def _gain(prior_var: float, params: ModelParams) -> float:
    return prior_var / (prior_var + params.sigma_eta ** 2)


def _posterior_var(prior_var: float, params: ModelParams) -> float:
    # Equal to (1 - K) P, but exact for round inputs (16 -> 3.2).
    r = params.sigma_eta ** 2
    return prior_var * r / (prior_var + r)


def build_variance_schedule(params: ModelParams) -> VarianceSchedule:
    T = params.T
    post = np.empty(T + 1)
    prior = np.empty(T + 1)
    gain = np.empty(T + 1)
    tau2 = np.empty(T)
    p = params.sigma_x0 ** 2
    for t in range(T + 1):
        # Same arithmetic as update() so replayed beliefs match bitwise.
        k = _gain(p, params)
        prior[t], gain[t] = p, k
        post[t] = _posterior_var(p, params)
        if t < T:
            p = post[t] + params.sigma_D ** 2
            tau2[t] = p * p / (p + params.sigma_eta ** 2)
    for arr in (post, prior, gain, tau2):
        arr.setflags(write=False)
    return VarianceSchedule(post, prior, gain, tau2)


def prior_belief(params: ModelParams) -> Belief:
    """The initial-state distribution, before the first reading."""
    return Belief(params.x0_bar, params.sigma_x0 ** 2, -1)


def update(prior: Belief, y, params: ModelParams) -> Belief:
    k = _gain(prior.var, params)
    mean = prior.mean + k * (y - prior.mean)
    return Belief(mean, _posterior_var(prior.var, params), prior.t + 1)


def initial_belief(y0, params: ModelParams) -> Belief:
    return update(prior_belief(params), y0, params)


def predict(b: Belief, a, params: ModelParams) -> Belief:
    if b.t >= params.T:
        raise ValueError(f"cannot predict past the horizon (t={b.t}, T={params.T})")
    return Belief(b.mean + a - params.D_bar, b.var + params.sigma_D ** 2, b.t)


def belief_mean_transition_noise(t: int, schedule: VarianceSchedule) -> float:
    if not 0 <= t < schedule.T:
        raise IndexError(f"t={t} outside [0, {schedule.T})")
    return float(schedule.process_noise_var[t])


def replay_beliefs(observations, actions, params: ModelParams) -> list[Belief]:
    """Posterior beliefs after each reading, rebuilt from the history alone."""
    observations = list(observations)
    actions = list(actions)
    if len(actions) < len(observations) - 1:
        raise ValueError("need one action between consecutive readings")
    out = []
    b = prior_belief(params)
    for t, y in enumerate(observations):
        if t > 0:
            b = predict(out[-1], actions[t - 1], params)
        out.append(update(b, y, params))
    return out


def fixed_point_variance(params: ModelParams) -> float:
    """Positive root of the stationary posterior-variance equation."""
    # s = (s + q) r / (s + q + r)  =>  s^2 + q s - q r = 0
    q, r = params.sigma_D ** 2, params.sigma_eta ** 2
    return (-q + np.sqrt(q * q + 4 * q * r)) / 2
