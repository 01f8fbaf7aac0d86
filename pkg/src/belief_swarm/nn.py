"""Small fully connected networks with hand-written backprop.

Hidden layers use ReLU (subgradient 0 at the kink). The output head is
either the identity or a sigmoid scaled to ``(0, output_scale)``. Weights
are stored as ``(fan_in, fan_out)`` so a batch ``X`` of shape ``(n, d)``
maps through ``X @ W + b``. Everything is float64.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import binfmt
from .rng import RandomSource

HEADS = ("identity", "sigmoid")


class Mlp:
    def __init__(self, sizes, head: str = "identity", output_scale: float = 1.0,
                 rng: RandomSource | None = None):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"bad layer sizes {sizes}")
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        self.sizes = sizes
        self.head = head
        self.output_scale = float(output_scale)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                self.weights.append(np.zeros((fan_in, fan_out)))
                self.biases.append(np.zeros(fan_out))
            else:
                bound = 1.0 / math.sqrt(fan_in)
                self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
                self.biases.append(rng.uniform(-bound, bound, fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def same_architecture(self, other: "Mlp") -> bool:
        return (self.sizes == other.sizes and self.head == other.head
                and self.output_scale == other.output_scale)

    def copy(self) -> "Mlp":
        net = Mlp(self.sizes, self.head, self.output_scale)
        net.weights = [w.copy() for w in self.weights]
        net.biases = [b.copy() for b in self.biases]
        return net

    def forward_cache(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {a.shape[1]} != {self.sizes[0]}")
        inputs, pre = [], []
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w + b
            pre.append(z)
            a = np.maximum(z, 0.0) if k < last else z
        if self.head == "sigmoid":
            sig = expit(a)
            out = self.output_scale * sig
        else:
            sig = None
            out = a
        cache = (single, inputs, pre, sig)
        return (out[0] if single else out), cache

    def forward(self, x):
        return self.forward_cache(x)[0]

    __call__ = forward

    def backward(self, cache, grad_out, param_grads: bool = True):
        """Gradients of ``sum(grad_out * output)``.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered
        like :attr:`params` (``None`` entries when ``param_grads`` is false).
        """
        single, inputs, pre, sig = cache
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None, :]
        if sig is not None:
            g = g * (self.output_scale * sig * (1.0 - sig))
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            if k < len(self.weights) - 1:
                g = g * (pre[k] > 0.0)
            if param_grads:
                grads[2 * k] = inputs[k].T @ g
                grads[2 * k + 1] = g.sum(axis=0)
            g = g @ self.weights[k].T
        return grads, (g[0] if single else g)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float, **kw) -> "AdamState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, params, grads):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter/gradient/state length mismatch")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    if not target.same_architecture(online):
        raise ValueError("soft_update needs identical architectures")
    for tp, op in zip(target.params, online.params):
        tp *= 1.0 - tau
        tp += tau * op
    return target


# --------------------------------------------------------------------------- checkpoints

def save_mlp(path, net: Mlp, meta: dict | None = None) -> None:
    info = {"sizes": net.sizes, "head": net.head, "output_scale": net.output_scale}
    info.update(meta or {})
    arrays = {}
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{k}"] = w
        arrays[f"b{k}"] = b
    binfmt.dump(path, "mlp", arrays, info)


def load_mlp(path):
    """Return ``(net, meta)``."""
    arrays, meta = binfmt.load(path, kind="mlp")
    net = Mlp(meta["sizes"], meta["head"], meta["output_scale"])
    net.weights = [arrays[f"W{k}"] for k in range(len(net.sizes) - 1)]
    net.biases = [arrays[f"b{k}"] for k in range(len(net.sizes) - 1)]
    return net, meta


def weights_to_csv(net: Mlp, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# schema: belief-swarm/weights v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["layer", "kind", "row", "col", "value"])
        for k, (W, b) in enumerate(zip(net.weights, net.biases)):
            for i, j in np.ndindex(W.shape):
                w.writerow([k, "W", i, j, repr(float(W[i, j]))])
            for j in range(len(b)):
                w.writerow([k, "b", 0, j, repr(float(b[j]))])
