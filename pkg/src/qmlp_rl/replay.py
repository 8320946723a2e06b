"""Fixed-capacity FIFO transition store with uniform sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, StateError

DEFAULT_CAPACITY = 100_000
MAX_CAPACITY = 1_000_000


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done_mask: float  # 1.0 only for true terminals; truncation keeps bootstrapping


@dataclass
class Batch:
    """Column-major batch: every array has the batch along axis 1."""

    s: np.ndarray       # (N, B)
    a: np.ndarray       # (A, B)
    r: np.ndarray       # (1, B)
    s_next: np.ndarray  # (N, B)
    done: np.ndarray    # (1, B)
    indices: np.ndarray

    def __len__(self):
        return self.s.shape[1]

    def transitions(self):
        return [Transition(self.s[:, i].copy(), self.a[:, i].copy(), float(self.r[0, i]),
                           self.s_next[:, i].copy(), float(self.done[0, i])) for i in range(len(self))]


class ReplayBuffer:
    def __init__(self, obs_dim: int, act_dim: int, capacity: int = DEFAULT_CAPACITY):
        if not 1 <= capacity <= MAX_CAPACITY:
            raise ValueError(f"capacity must be in [1, {MAX_CAPACITY}], got {capacity}")
        self.obs_dim, self.act_dim, self.capacity = obs_dim, act_dim, capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, act_dim))
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition):
        s, a, s2 = (np.asarray(x, dtype=np.float64).ravel() for x in (t.s, t.a, t.s_next))
        if s.shape != (self.obs_dim,) or s2.shape != (self.obs_dim,) or a.shape != (self.act_dim,):
            raise DimensionError(f"transition shapes {s.shape}, {a.shape}, {s2.shape} do not match "
                                 f"buffer dims obs={self.obs_dim} act={self.act_dim}")
        i = self.cursor
        self.s[i], self.a[i], self.r[i], self.s_next[i], self.done[i] = s, a, t.r, s2, t.done_mask
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def add(self, s, a, r, s_next, done_mask):
        self.push(Transition(s, a, r, s_next, done_mask))

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        """Uniform sampling with replacement."""
        if self.size == 0:
            raise StateError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, self.size, size=batch)
        return Batch(self.s[idx].T.copy(), self.a[idx].T.copy(), self.r[idx][None, :].copy(),
                     self.s_next[idx].T.copy(), self.done[idx][None, :].copy(), idx)
