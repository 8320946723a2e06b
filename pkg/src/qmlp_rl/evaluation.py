"""Policy evaluation records and learning curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .envs import Env, add_action_noise, add_observation_noise


@dataclass
class EvalRecord:
    step: int
    returns: np.ndarray

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=np.float64)

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns))

    @property
    def std(self) -> float:
        return float(np.std(self.returns))


def evaluate(actor, env: Env, episodes: int = 10, seed: int = 0, step: int = 0,
             action_noise: float = 0.0, obs_noise: float = 0.0, noise_mode: str = "additive",
             noise_seed: Optional[int] = None) -> EvalRecord:
    """Run ``episodes`` deterministic-policy episodes and record undiscounted returns.

    Episode ``i`` resets with seed ``seed + i``. Noise, when requested, is drawn
    from its own generator so that level 0 reproduces the noise-free evaluation.
    """
    spec = env.spec
    low, high = np.asarray(spec.action_low), np.asarray(spec.action_high)
    noise_rng = np.random.default_rng(seed if noise_seed is None else noise_seed)
    returns = []
    for i in range(episodes):
        obs = env.reset(seed=seed + i)
        total = 0.0
        while True:
            seen = add_observation_noise(obs, obs_noise, noise_rng, noise_mode) if obs_noise else obs
            a = actor.act(seen)
            if action_noise:
                a = add_action_noise(a, action_noise, noise_rng, low, high, noise_mode)
            res = env.step(a)
            total += res.reward
            obs = res.next_obs
            if res.done or res.truncated:
                break
        returns.append(total)
    return EvalRecord(step, np.array(returns))


@dataclass
class LearningCurve:
    """Evaluation means per (seed, eval step); ``per_seed_stds`` holds the episode spread."""

    eval_steps: np.ndarray
    per_seed_returns: np.ndarray  # (seeds, evals)
    seeds: list
    per_seed_stds: Optional[np.ndarray] = None

    def __post_init__(self):
        self.eval_steps = np.asarray(self.eval_steps, dtype=np.int64)
        self.per_seed_returns = np.asarray(self.per_seed_returns, dtype=np.float64).reshape(
            len(self.seeds), len(self.eval_steps))
        if self.per_seed_stds is None:
            self.per_seed_stds = np.zeros_like(self.per_seed_returns)
        self.per_seed_stds = np.asarray(self.per_seed_stds, dtype=np.float64).reshape(self.per_seed_returns.shape)
        self.seeds = [int(s) for s in self.seeds]
        if len(self.eval_steps) > 1 and np.any(np.diff(self.eval_steps) <= 0):
            raise ValueError("eval_steps must be strictly increasing")

    def seed_mean(self) -> np.ndarray:
        return self.per_seed_returns.mean(axis=0)

    def seed_std(self) -> np.ndarray:
        return self.per_seed_returns.std(axis=0)

    @classmethod
    def from_records(cls, seed, records):
        return cls([r.step for r in records], [[r.mean for r in records]], [seed],
                   [[r.std for r in records]])

    @classmethod
    def stack(cls, curves):
        curves = list(curves)
        steps = curves[0].eval_steps
        for c in curves[1:]:
            if not np.array_equal(c.eval_steps, steps):
                raise ValueError("curves have different evaluation steps")
        return cls(steps, np.vstack([c.per_seed_returns for c in curves]),
                   [s for c in curves for s in c.seeds], np.vstack([c.per_seed_stds for c in curves]))

    def __eq__(self, other):
        return (isinstance(other, LearningCurve) and self.seeds == other.seeds
                and np.array_equal(self.eval_steps, other.eval_steps)
                and np.array_equal(self.per_seed_returns, other.per_seed_returns)
                and np.array_equal(self.per_seed_stds, other.per_seed_stds))
