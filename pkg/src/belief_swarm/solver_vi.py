"""Exact baseline: value iteration on a discretized belief-mean line.

The belief mean moves as ``x_hat + a - D_bar + w`` with ``w ~ N(0, tau_t^2)``.
Cells are centred on grid nodes; the Gaussian mass of each cell comes from
CDF differences at the cell midpoints, with both tails lumped into the edge
cells. Expected stage costs use Gauss-Hermite quadrature.

Both the stage cost and the transition law depend on ``(node, a)`` only
through the post-decision level ``node + a``, so each backward step
evaluates them once per distinct level and broadcasts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from . import binfmt
from .belief import VarianceSchedule
from .env import Policy
from .model import BATTERY_MAX, ModelParams, holding_cost

SCHEMA_TABLES = "# schema: belief-swarm/vi-tables v1"
DEFAULT_QUAD_ORDER = 128
# numpy's Golub-Welsch weights overflow somewhere above 300 nodes.
MAX_QUAD_ORDER = 300


@dataclass(frozen=True)
class BeliefGrid:
    delta: float
    lower: float = -20.0
    upper: float = 120.0

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("grid step must be > 0")
        if not (self.lower < 0.0 and self.upper > BATTERY_MAX):
            raise ValueError("grid bounds must strictly bracket [0, 100]")
        cells = (self.upper - self.lower) / self.delta
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise ValueError("(upper - lower) must be a multiple of the grid step")

    @property
    def n(self) -> int:
        return int(round((self.upper - self.lower) / self.delta)) + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.lower + self.delta * np.arange(self.n)

    @property
    def boundaries(self) -> np.ndarray:
        """Interior cell boundaries (midpoints between consecutive nodes)."""
        nodes = self.nodes
        return 0.5 * (nodes[:-1] + nodes[1:])

    def nearest(self, x) -> np.ndarray:
        """Index of the nearest node; exact midpoints go to the lower node; clamps."""
        pos = (np.asarray(x, dtype=float) - self.lower) / self.delta
        return np.clip(np.ceil(pos - 0.5), 0, self.n - 1).astype(int)


@lru_cache(maxsize=None)
def _hermgauss(order: int):
    if not 1 <= order <= MAX_QUAD_ORDER:
        raise ValueError(f"quadrature order must lie in [1, {MAX_QUAD_ORDER}]")
    z, w = np.polynomial.hermite.hermgauss(order)
    return z, w / math.sqrt(math.pi)


def expected_holding(mean, var: float, params: ModelParams, order: int = DEFAULT_QUAD_ORDER):
    """``E[h(Z)]`` for ``Z ~ N(mean, var)``, elementwise over ``mean``."""
    z, w = _hermgauss(order)
    mean = np.asarray(mean, dtype=float)
    pts = mean[..., None] + math.sqrt(2.0 * var) * z
    out = holding_cost(pts, params) @ w
    return float(out) if out.ndim == 0 else out


def stage_variance(t: int, schedule: VarianceSchedule, params: ModelParams) -> float:
    """Variance of the post-decision true level given the belief at ``t``."""
    return float(schedule.posterior_var[t]) + params.sigma_D ** 2


def expected_stage_cost(x_hat, a, t: int, schedule: VarianceSchedule, params: ModelParams,
                        order: int = DEFAULT_QUAD_ORDER):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("actions must be >= 0")
    fixed = np.where(a > 0, params.K, 0.0)
    eh = expected_holding(np.asarray(x_hat, dtype=float) + a - params.D_bar,
                          stage_variance(t, schedule, params), params, order)
    out = fixed + params.c_tilde * a + eh
    return float(out) if np.ndim(out) == 0 else out


def kernel_rows(means, grid: BeliefGrid, tau: float) -> np.ndarray:
    """Cell probabilities for next-mean distributions ``N(mean, tau^2)``."""
    means = np.asarray(means, dtype=float)
    cdf = ndtr((grid.boundaries[None, :] - means[:, None]) / tau)
    m = len(means)
    edges = np.concatenate([np.zeros((m, 1)), cdf, np.ones((m, 1))], axis=1)
    return np.diff(edges, axis=1)


@dataclass(frozen=True)
class TransitionKernel:
    t: int
    action: float
    matrix: np.ndarray   # (n, n), row i -> distribution of next node


def build_kernel(t: int, a: float, grid: BeliefGrid, schedule: VarianceSchedule,
                 params: ModelParams) -> TransitionKernel:
    if not 0 <= t < schedule.T:
        raise IndexError(f"t={t} outside [0, {schedule.T})")
    tau = math.sqrt(schedule.process_noise_var[t])
    return TransitionKernel(t, float(a), kernel_rows(grid.nodes + a - params.D_bar, grid, tau))


@dataclass(frozen=True)
class ValueTable:
    grid: BeliefGrid
    V: np.ndarray          # (T+1, n); V[T] == 0


@dataclass(frozen=True)
class PolicyTable:
    grid: BeliefGrid
    action_step: float
    actions: np.ndarray    # (T, n)

    @property
    def T(self) -> int:
        return self.actions.shape[0]


def action_grid(grid: BeliefGrid, action_step: float):
    """Action levels and the per-node feasibility mask."""
    if not action_step > 0:
        raise ValueError("action step must be > 0")
    amax = np.minimum(BATTERY_MAX, grid.upper - grid.nodes)
    count = int(math.floor(amax.max() / action_step + 1e-9)) + 1
    actions = action_step * np.arange(count)
    mask = actions[None, :] <= amax[:, None] + 1e-9
    return actions, mask


def value_iteration(grid: BeliefGrid, action_step: float, schedule: VarianceSchedule,
                    params: ModelParams, quad_order: int = DEFAULT_QUAD_ORDER):
    """Finite-horizon backward induction; ties go to the smallest action."""
    T, n = schedule.T, grid.n
    actions, mask = action_grid(grid, action_step)
    nodes = grid.nodes
    post = nodes[:, None] + actions[None, :]
    _, first, inverse = np.unique(np.round(post[mask], 9), return_index=True, return_inverse=True)
    levels = post[mask][first]
    fixed = np.where(actions > 0, params.K, 0.0)
    lin = np.broadcast_to(fixed + params.c_tilde * actions, post.shape)[mask]

    V = np.zeros((T + 1, n))
    pol = np.zeros((T, n))
    Q = np.full(post.shape, np.inf)
    rows = np.arange(n)
    for t in range(T - 1, -1, -1):
        eh = expected_holding(levels - params.D_bar, stage_variance(t, schedule, params), params, quad_order)
        tau = math.sqrt(schedule.process_noise_var[t])
        cont = kernel_rows(levels - params.D_bar, grid, tau) @ V[t + 1]
        Q[mask] = (lin + eh[inverse]) + params.alpha * cont[inverse]
        best = np.argmin(Q, axis=1)
        V[t] = Q[rows, best]
        pol[t] = actions[best]
    for arr in (V, pol):
        arr.setflags(write=False)
    return ValueTable(grid, V), PolicyTable(grid, float(action_step), pol)


def brute_force_value_iteration(grid: BeliefGrid, action_step: float, schedule: VarianceSchedule,
                                params: ModelParams, quad_order: int = DEFAULT_QUAD_ORDER):
    """Independent reference: the Bellman sum written out cell by cell.

    Pure-Python loops over (t, i, a, j); quadratic in the grid size, so only
    for tiny instances.
    """
    T, n = schedule.T, grid.n
    nodes = [grid.lower + grid.delta * i for i in range(n)]
    bounds = [0.5 * (nodes[j] + nodes[j + 1]) for j in range(n - 1)]
    zs, ws = np.polynomial.hermite.hermgauss(quad_order)

    def phi(u):
        return 0.5 * math.erfc(-u / math.sqrt(2.0))

    V = [[0.0] * n for _ in range(T + 1)]
    pol = [[0.0] * n for _ in range(T)]
    for t in range(T - 1, -1, -1):
        sd = math.sqrt(schedule.posterior_var[t] + params.sigma_D ** 2)
        tau = math.sqrt(schedule.process_noise_var[t])
        for i in range(n):
            best_q, best_a = math.inf, 0.0
            k = 0
            while True:
                a = k * action_step
                if a > min(BATTERY_MAX, grid.upper - nodes[i]) + 1e-9:
                    break
                mu = nodes[i] + a - params.D_bar
                eh = 0.0
                for z, w in zip(zs, ws):
                    eh += w * holding_cost(mu + math.sqrt(2.0) * sd * z, params)
                cost = (params.K if a > 0 else 0.0) + params.c_tilde * a + eh / math.sqrt(math.pi)
                ev = 0.0
                lo_cdf = 0.0
                for j in range(n):
                    hi_cdf = phi((bounds[j] - mu) / tau) if j < n - 1 else 1.0
                    ev += (hi_cdf - lo_cdf) * V[t + 1][j]
                    lo_cdf = hi_cdf
                q = cost + params.alpha * ev
                if q < best_q:
                    best_q, best_a = q, a
                k += 1
            V[t][i] = best_q
            pol[t][i] = best_a
    return ValueTable(grid, np.array(V)), PolicyTable(grid, float(action_step), np.array(pol))


class TablePolicy(Policy):
    """Nearest-node lookup of a policy table (no interpolation)."""

    representation = "belief_mean"

    def __init__(self, table: PolicyTable):
        self.table = table

    def act_batch(self, states, t):
        if not 0 <= t < self.table.T:
            raise IndexError(f"t={t} outside the policy horizon {self.table.T}")
        idx = self.table.grid.nearest(np.asarray(states, dtype=float)[:, 0])
        return self.table.actions[t, idx]


def policy_as_function(pt: PolicyTable) -> TablePolicy:
    return TablePolicy(pt)


# --------------------------------------------------------------------------- persistence

def save_solution(path, vt: ValueTable, pt: PolicyTable, meta: dict | None = None) -> None:
    g = pt.grid
    info = {"delta": g.delta, "lower": g.lower, "upper": g.upper, "action_step": pt.action_step}
    info.update(meta or {})
    binfmt.dump(path, "vi-solution", {"V": vt.V, "policy": pt.actions}, info)


def load_solution(path):
    arrays, meta = binfmt.load(path, kind="vi-solution")
    grid = BeliefGrid(meta["delta"], meta["lower"], meta["upper"])
    return (ValueTable(grid, arrays["V"]),
            PolicyTable(grid, meta["action_step"], arrays["policy"]),
            meta)


def tables_to_csv(path, vt: ValueTable, pt: PolicyTable) -> None:
    nodes = vt.grid.nodes
    with open(path, "w", newline="") as fh:
        fh.write(SCHEMA_TABLES + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "node", "V", "a"])
        for t in range(pt.T):
            for i, node in enumerate(nodes):
                w.writerow([t, repr(float(node)), repr(float(vt.V[t, i])), repr(float(pt.actions[t, i]))])
