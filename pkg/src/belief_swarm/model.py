"""POMDP primitives for single-drone battery management.

Battery dynamics, noisy battery readings and the three-regime cost all live
here. The array-friendly helpers (``holding_cost``, ``advance``,
``discount_factors``) are shared by the scalar environment and the batched
rollout engine so both paths produce bitwise-identical numbers.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .rng import RandomSource

BATTERY_MAX = 100.0
SCHEMA_PARAMS = "# schema: belief-swarm/params v1"

PARAM_NAMES = (
    "K", "c_tilde", "x_safe", "beta_h", "beta_c", "M", "D_bar",
    "sigma_D", "sigma_eta", "x0_bar", "sigma_x0", "T", "alpha",
)


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input."""


@dataclass(frozen=True)
class ModelParams:
    K: float = 5.0            # fixed recharge cost
    c_tilde: float = 0.5      # energy cost per %
    x_safe: float = 20.0      # safe battery level, %
    beta_h: float = 0.1       # holding cost per %
    beta_c: float = 2.0       # critical proximity cost per %^2
    M: float = 100.0          # failure penalty
    D_bar: float = 3.0        # mean consumption per step, %
    sigma_D: float = 1.0      # consumption std, %
    sigma_eta: float = 2.0    # observation noise std, %
    x0_bar: float = 50.0      # initial battery mean, %
    sigma_x0: float = 4.0     # initial battery std, %
    T: int = 50               # horizon, steps
    alpha: float = 0.95       # discount

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ConfigError(f"{name} must be finite, got {v!r}")
        if isinstance(self.T, float):
            if self.T != int(self.T):
                raise ConfigError(f"T must be an integer, got {self.T}")
            object.__setattr__(self, "T", int(self.T))
        for name in ("sigma_D", "sigma_eta", "sigma_x0"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0 <= self.alpha < 1:
            raise ConfigError("alpha must lie in [0, 1)")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if not 0 <= self.x_safe <= BATTERY_MAX:
            raise ConfigError("x_safe must lie in [0, 100]")
        if self.D_bar / self.sigma_D < 3:
            warnings.warn(
                f"D_bar/sigma_D = {self.D_bar / self.sigma_D:.3g} < 3: negative "
                "consumption is no longer rare and the Gaussian model degrades",
                stacklevel=3,
            )

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_mapping(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @classmethod
    def from_mapping(cls, mapping) -> "ModelParams":
        unknown = set(mapping) - set(PARAM_NAMES)
        if unknown:
            raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        kwargs = {}
        for name, value in mapping.items():
            try:
                kwargs[name] = int(value) if name == "T" else float(value)
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for {name}: {value!r}") from None
        return cls(**kwargs)


def parse_params(text: str) -> ModelParams:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in mapping:
            raise ConfigError(f"line {lineno}: duplicate key {key}")
        mapping[key] = value
    return ModelParams.from_mapping(mapping)


def format_params(params: ModelParams) -> str:
    lines = [SCHEMA_PARAMS]
    for name, value in params.to_mapping().items():
        lines.append(f"{name} = {value!r}")
    return "\n".join(lines) + "\n"


def load_params(path) -> ModelParams:
    return parse_params(Path(path).read_text())


def save_params(params: ModelParams, path) -> None:
    Path(path).write_text(format_params(params))


def default_params() -> ModelParams:
    """The bundled default configuration (the published parameter table)."""
    text = resources.files("belief_swarm").joinpath("data/table2.cfg").read_text()
    return parse_params(text)


@dataclass(frozen=True)
class DroneState:
    x: float

    def __post_init__(self):
        if not 0.0 <= self.x <= BATTERY_MAX:
            raise ValueError(f"battery level {self.x} outside [0, 100]")


@dataclass(frozen=True)
class StepOutcome:
    next_state: DroneState
    realized_cost: float
    pre_clamp_level: float
    failure_flag: bool
    consumption: float
    applied_action: float


def holding_cost(level, params: ModelParams):
    """Holding / critical / failure cost of a post-decision battery level.

    ``level == x_safe`` falls in the linear branch. Works elementwise on
    arrays; returns a float for scalar input.
    """
    level_arr = np.asarray(level, dtype=float)
    gap = params.x_safe - level_arr
    out = np.where(
        level_arr >= params.x_safe,
        params.beta_h * level_arr,
        np.where(level_arr >= 0.0, params.beta_c * (gap * gap), params.M),
    )
    return float(out) if out.ndim == 0 else out


def _stage_cost(x, a, d, params: ModelParams):
    fixed = np.where(np.asarray(a) > 0.0, params.K, 0.0)
    return fixed + params.c_tilde * a + holding_cost(x + a - d, params)


def stage_cost(x, a: float, D_realized: float, params: ModelParams) -> float:
    if isinstance(x, DroneState):
        x = x.x
    if not a >= 0:
        raise ValueError(f"action must be >= 0, got {a}")
    return float(_stage_cost(x, a, D_realized, params))


def clip_action(x, a):
    """Feasible charge given the true level: ``a`` clipped to [0, 100 - x]."""
    return np.minimum(np.maximum(a, 0.0), BATTERY_MAX - x)


def advance(x, a, d, params: ModelParams):
    """Deterministic part of one transition given the realized consumption.

    ``a`` must already be feasible. Returns ``(next_x, pre_clamp, cost,
    failure)``; elementwise on arrays.
    """
    pre = x + a - d
    nxt = np.minimum(BATTERY_MAX, np.maximum(0.0, pre))
    cost = _stage_cost(x, a, d, params)
    return nxt, pre, cost, pre < 0.0


def consumption_from_noise(z, params: ModelParams):
    return params.D_bar + params.sigma_D * z


def observation_from_noise(x, z, params: ModelParams):
    return x + params.sigma_eta * z


def initial_level_from_noise(z, params: ModelParams):
    return np.minimum(BATTERY_MAX, np.maximum(0.0, params.x0_bar + params.sigma_x0 * z))


def transition(x: DroneState, a: float, rng: RandomSource, params: ModelParams) -> StepOutcome:
    if not a >= 0:
        raise ValueError(f"action must be >= 0, got {a}")
    a_c = float(clip_action(x.x, a))
    d = consumption_from_noise(rng.normal(), params)
    nxt, pre, cost, fail = advance(x.x, a_c, d, params)
    return StepOutcome(
        next_state=DroneState(float(nxt)),
        realized_cost=float(cost),
        pre_clamp_level=float(pre),
        failure_flag=bool(fail),
        consumption=d,
        applied_action=a_c,
    )


def observe(x: DroneState, rng: RandomSource, params: ModelParams) -> float:
    return observation_from_noise(x.x, rng.normal(), params)


def sample_initial_state(rng: RandomSource, params: ModelParams) -> DroneState:
    return DroneState(float(initial_level_from_noise(rng.normal(), params)))


def discount_factors(alpha: float, T: int) -> np.ndarray:
    """``alpha**t`` for t = 0..T-1, built by repeated multiplication."""
    out = np.empty(T)
    acc = 1.0
    for t in range(T):
        out[t] = acc
        acc *= alpha
    return out
