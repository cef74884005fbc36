"""Exploration noise processes, sampled in the actor's [-1, 1] output space."""

from __future__ import annotations

import numpy as np


class GaussianNoise:
    """I.i.d. zero-mean Gaussian noise."""

    def __init__(self, scale: float, rng: np.random.Generator, dim: int = 2):
        self.scale = scale
        self.rng = rng
        self.dim = dim

    def reset(self) -> None:
        pass

    def sample(self) -> np.ndarray:
        return self.rng.normal(0.0, self.scale, self.dim)


class OrnsteinUhlenbeckNoise:
    """Mean-reverting noise; successive samples are correlated."""

    def __init__(
        self,
        scale: float,
        rng: np.random.Generator,
        dim: int = 2,
        theta: float = 0.15,
        mu: float = 0.0,
        dt: float = 1.0,
    ):
        self.scale = scale
        self.rng = rng
        self.dim = dim
        self.theta = theta
        self.mu = mu
        self.dt = dt
        self.state = np.full(dim, mu, dtype=float)

    def reset(self) -> None:
        self.state = np.full(self.dim, self.mu, dtype=float)

    def sample(self) -> np.ndarray:
        drift = self.theta * (self.mu - self.state) * self.dt
        diffusion = self.scale * np.sqrt(self.dt) * self.rng.normal(0.0, 1.0, self.dim)
        self.state = self.state + drift + diffusion
        return self.state.copy()


def make_noise(kind: str, scale: float, rng: np.random.Generator, dim: int = 2):
    if kind == "gaussian":
        return GaussianNoise(scale, rng, dim)
    if kind == "ou":
        return OrnsteinUhlenbeckNoise(scale, rng, dim)
    raise ValueError(f"unknown noise kind {kind!r}")
