"""Small continuous-control environments with closed-form dynamics.

Every environment integrates with semi-implicit Euler (velocity first, then
position with the new velocity) at a fixed ``dt``. ``reset(seed)`` reseeds the
environment's own generator; ``reset()`` without a seed continues it, so a
training run that reseeds once is fully determined by that seed and the
actions it takes.

pendulum
    theta = 0 is upright. ``thdot += (3 g / (2 l) sin(theta) + 3 / (m l^2) u) dt``,
    clipped to [-8, 8]; ``theta += thdot dt``. g = 10, m = l = 1, dt = 0.05,
    |u| <= 2. Reward ``-(wrap(theta)^2 + 0.1 thdot^2 + 0.001 u^2)`` on the state
    before the step. Starts hanging down: theta ~ pi + U(-0.1, 0.1),
    thdot ~ U(-0.1, 0.1). 200 steps, never terminal. Obs (cos, sin, thdot).

mountain_car
    ``v += 0.0015 u - 0.0025 cos(3 x)`` clipped to [-0.07, 0.07];
    ``x += v`` clipped to [-1.2, 0.6] (v reset to 0 at the left wall when
    moving left). |u| <= 1. Reward ``-0.1 u^2`` plus 100 on reaching
    x >= 0.45, which terminates. Starts at x ~ U(-0.6, -0.4), v = 0.
    999 steps. Obs (x, v).

reacher
    Point mass in the plane with a random target: ``v += (u - 0.5 v) dt``,
    ``p += v dt``, dt = 0.05, |u_i| <= 1. Reward ``-|p - target| - 0.01 |u|^2``
    on the state after the step. Terminal when |p_i| > 2 for any i. Starts at
    p ~ U(-0.5, 0.5)^2, v = 0, target ~ U(-0.8, 0.8)^2. 100 steps.
    Obs (p, v, target, target - p).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import NumericFault


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    action_low: tuple
    action_high: tuple
    max_episode_steps: int
    constants: dict = field(default_factory=dict)

    @property
    def action_scale(self) -> np.ndarray:
        return (np.asarray(self.action_high) - np.asarray(self.action_low)) / 2.0


@dataclass
class StepResult:
    next_obs: np.ndarray
    reward: float
    done: bool
    truncated: bool

    def __iter__(self):
        return iter((self.next_obs, self.reward, self.done, self.truncated))


class Env:
    spec: EnvSpec

    def __init__(self):
        self.rng = np.random.default_rng(0)
        self.t = 0
        self.clip_events = 0

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = 0
        self._reset_state()
        return self.observe()

    def step(self, action) -> StepResult:
        a = np.asarray(action, dtype=np.float64).reshape(self.spec.act_dim)
        if not np.all(np.isfinite(a)):
            raise NumericFault(f"{self.spec.name}: non-finite action {a}")
        low, high = np.asarray(self.spec.action_low), np.asarray(self.spec.action_high)
        clipped = np.clip(a, low, high)
        if np.any(clipped != a):
            self.clip_events += 1
        reward, done = self._advance(clipped)
        self.t += 1
        truncated = (not done) and self.t >= self.spec.max_episode_steps
        return StepResult(self.observe(), float(reward), bool(done), bool(truncated))

    def _reset_state(self):
        raise NotImplementedError

    def _advance(self, a):
        raise NotImplementedError

    def observe(self) -> np.ndarray:
        raise NotImplementedError


def angle_normalize(x):
    return ((x + math.pi) % (2 * math.pi)) - math.pi


class Pendulum(Env):
    spec = EnvSpec("pendulum", 3, 1, (-2.0,), (2.0,), 200,
                   dict(g=10.0, m=1.0, l=1.0, dt=0.05, max_speed=8.0, max_torque=2.0))

    def __init__(self):
        super().__init__()
        self.theta, self.thetadot = math.pi, 0.0

    def _reset_state(self):
        self.theta = math.pi + self.rng.uniform(-0.1, 0.1)
        self.thetadot = self.rng.uniform(-0.1, 0.1)

    def set_state(self, theta, thetadot):
        self.theta, self.thetadot = float(theta), float(thetadot)

    def _advance(self, a):
        c = self.spec.constants
        u = float(a[0])
        th, thdot = self.theta, self.thetadot
        cost = angle_normalize(th) ** 2 + 0.1 * thdot ** 2 + 0.001 * u ** 2
        thdot = thdot + (3 * c["g"] / (2 * c["l"]) * math.sin(th) + 3.0 / (c["m"] * c["l"] ** 2) * u) * c["dt"]
        thdot = min(max(thdot, -c["max_speed"]), c["max_speed"])
        self.theta = th + thdot * c["dt"]
        self.thetadot = thdot
        return -cost, False

    def energy(self) -> float:
        """Mechanical energy per unit inertia for the torque-free system."""
        c = self.spec.constants
        return 0.5 * self.thetadot ** 2 + 3 * c["g"] / (2 * c["l"]) * math.cos(self.theta)

    def observe(self):
        return np.array([math.cos(self.theta), math.sin(self.theta), self.thetadot])


class MountainCar(Env):
    spec = EnvSpec("mountain_car", 2, 1, (-1.0,), (1.0,), 999,
                   dict(power=0.0015, gravity=0.0025, min_position=-1.2, max_position=0.6,
                        max_speed=0.07, goal_position=0.45))

    def __init__(self):
        super().__init__()
        self.position, self.velocity = -0.5, 0.0

    def _reset_state(self):
        self.position = self.rng.uniform(-0.6, -0.4)
        self.velocity = 0.0

    def _advance(self, a):
        c = self.spec.constants
        force = float(a[0])
        v = self.velocity + force * c["power"] - c["gravity"] * math.cos(3 * self.position)
        v = min(max(v, -c["max_speed"]), c["max_speed"])
        x = min(max(self.position + v, c["min_position"]), c["max_position"])
        if x == c["min_position"] and v < 0:
            v = 0.0
        self.position, self.velocity = x, v
        done = x >= c["goal_position"] and v >= 0
        reward = -0.1 * force ** 2 + (100.0 if done else 0.0)
        return reward, done

    def observe(self):
        return np.array([self.position, self.velocity])


class PointReacher(Env):
    spec = EnvSpec("reacher", 8, 2, (-1.0, -1.0), (1.0, 1.0), 100,
                   dict(dt=0.05, damping=0.5, arena=2.0))

    def __init__(self):
        super().__init__()
        self.pos = np.zeros(2)
        self.vel = np.zeros(2)
        self.target = np.zeros(2)

    def _reset_state(self):
        self.pos = self.rng.uniform(-0.5, 0.5, size=2)
        self.vel = np.zeros(2)
        self.target = self.rng.uniform(-0.8, 0.8, size=2)

    def _advance(self, a):
        c = self.spec.constants
        self.vel = self.vel + (a - c["damping"] * self.vel) * c["dt"]
        self.pos = self.pos + self.vel * c["dt"]
        reward = -float(np.linalg.norm(self.pos - self.target)) - 0.01 * float(a @ a)
        done = bool(np.any(np.abs(self.pos) > c["arena"]))
        return reward, done

    def observe(self):
        return np.concatenate([self.pos, self.vel, self.target, self.target - self.pos])


ENVS = {"pendulum": Pendulum, "mountain_car": MountainCar, "reacher": PointReacher}
ALIASES = {"mountain-car": "mountain_car", "mountaincar": "mountain_car", "point-reacher": "reacher"}


def make_env(name: str) -> Env:
    key = ALIASES.get(name, name)
    if key not in ENVS:
        raise KeyError(f"unknown environment {name!r}; available: {sorted(ENVS)}")
    return ENVS[key]()


def env_spec(name: str) -> EnvSpec:
    return make_env(name).spec


NOISE_MODES = ("additive", "multiplicative")


def add_action_noise(action, level, rng, low, high, mode="additive"):
    """Perturb an action with ``level``-scaled standard normal noise, then clip to bounds.

    additive: ``a + level * eps``; multiplicative: ``a * (1 + level * eps)``.
    """
    a = np.asarray(action, dtype=np.float64)
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return a.copy()
    eps = rng.standard_normal(a.shape)
    noisy = a + level * eps if mode == "additive" else a * (1.0 + level * eps)
    return np.clip(noisy, low, high)


def add_observation_noise(obs, level, rng, mode="additive"):
    o = np.asarray(obs, dtype=np.float64)
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return o.copy()
    eps = rng.standard_normal(o.shape)
    return o + level * eps if mode == "additive" else o * (1.0 + level * eps)
