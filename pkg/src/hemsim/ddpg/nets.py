"""Small fully-connected networks with hand-written backprop and Adam.

Hidden layers are ReLU; the output layer is tanh (actor) or linear
(critic). Gradients are exact analytic expressions, verified against
central finite differences in the test suite.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

FINAL_LAYER_BOUND = 3e-3


class Mlp:
    """Feed-forward net; parameters live in ``params`` as [W0, b0, W1, b1, ...]."""

    def __init__(self, sizes: Sequence[int], output: str, rng: np.random.Generator):
        if output not in ("tanh", "linear"):
            raise ValueError("output must be 'tanh' or 'linear'")
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        self.sizes = tuple(sizes)
        self.output = output
        self.params: list[np.ndarray] = []
        last = len(sizes) - 2
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            # fan-in scaling keeps activations O(1); the tiny final layer
            # starts the outputs near zero
            bound = FINAL_LAYER_BOUND if i == last else 1.0 / math.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, fan_out))

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Batch forward pass; returns the output and the activation stack."""
        acts = [x]
        h = x
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < n_layers - 1:
                h = np.maximum(z, 0.0)
            elif self.output == "tanh":
                h = np.tanh(z)
            else:
                h = z
            acts.append(h)
        return h, acts

    def backward(
        self, acts: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Backprop ``grad_out`` (dLoss/dOutput); returns parameter grads and dLoss/dInput."""
        grads: list[np.ndarray] = [np.empty(0)] * len(self.params)
        n_layers = len(self.sizes) - 1
        g = grad_out
        for i in reversed(range(n_layers)):
            h_out = acts[i + 1]
            if i == n_layers - 1:
                gz = g * (1.0 - h_out**2) if self.output == "tanh" else g
            else:
                gz = g * (h_out > 0.0)
            grads[2 * i] = acts[i].T @ gz
            grads[2 * i + 1] = gz.sum(axis=0)
            g = gz @ self.params[2 * i].T
        return grads, g

    def copy(self) -> "Mlp":
        clone = object.__new__(Mlp)
        clone.sizes = self.sizes
        clone.output = self.output
        clone.params = [p.copy() for p in self.params]
        return clone

    def set_params(self, params: Sequence[np.ndarray]) -> None:
        if len(params) != len(self.params):
            raise ValueError("parameter list shape mismatch")
        self.params = [np.asarray(p, dtype=float).copy() for p in params]


def soft_update(online: Mlp, target: Mlp, tau: float) -> None:
    """Polyak step: target <- tau * online + (1 - tau) * target, in place."""
    for p_online, p_target in zip(online.params, target.params):
        p_target *= 1.0 - tau
        p_target += tau * p_online


class Adam:
    """Standard Adam with bias correction, one moment pair per parameter."""

    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
