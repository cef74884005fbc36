"""Experience replay: fixed-size ring buffer plus min/max feature scaling."""

from __future__ import annotations

import numpy as np


class ReplayBuffer:
    """Ring buffer of (state, action, reward, next_state) tuples.

    Once full, every insert overwrites the oldest entry. Batches sample
    uniformly without replacement within one draw.
    """

    def __init__(self, capacity: int, state_dim: int = 8, action_dim: int = 2):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self._write = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def insert(self, state, action, reward, next_state) -> None:
        i = self._write
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self._write = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if batch_size > self._size:
            raise ValueError("not enough stored tuples for one batch")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return (
            self.states[idx],
            self.actions[idx],
            self.rewards[idx],
            self.next_states[idx],
        )

    def all_states(self) -> np.ndarray:
        """Every stored observation (states and successors), for fitting scalers."""
        return np.concatenate(
            [self.states[: self._size], self.next_states[: self._size]], axis=0
        )


class FeatureNorm:
    """Per-feature min/max scaling to [0, 1], fitted once on the initial buffer.

    Later observations outside the fitted range clamp to the box; actions
    are already in [0, 1] and pass through unchanged.
    """

    def __init__(self, low: np.ndarray, high: np.ndarray):
        self.low = np.asarray(low, dtype=float)
        self.high = np.asarray(high, dtype=float)
        span = self.high - self.low
        self._span = np.where(span > 0.0, span, 1.0)
        self._flat = span <= 0.0

    @classmethod
    def fit(cls, observations: np.ndarray) -> "FeatureNorm":
        if observations.ndim != 2 or observations.shape[0] == 0:
            raise ValueError("need a non-empty 2-D observation array")
        return cls(observations.min(axis=0), observations.max(axis=0))

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        scaled = (x - self.low) / self._span
        scaled = np.clip(scaled, 0.0, 1.0)
        if self._flat.any():
            scaled = np.where(self._flat, 0.0, scaled)
        return scaled
