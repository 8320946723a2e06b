"""TD3 and SAC agents and the off-policy training loop."""

from __future__ import annotations

from dataclasses import dataclass
import logging
import math
from typing import Callable, Optional

import numpy as np

from .envs import Env
from .errors import ConfigError, NumericFault
from .evaluation import EvalRecord, LearningCurve, evaluate
from .networks import (ArchitectureConfig, Critic, build_actor, save_checkpoint,
                       squashed_gaussian_backward, squashed_gaussian_sample)
from .nn import Adam, ParamArena, ParamBlock, derive_seed, make_rng, soft_update
from .replay import DEFAULT_CAPACITY, ReplayBuffer, Transition

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    algo: str = "td3"
    gamma: float = 0.99
    lr: float = 3e-4
    tau: float = 5e-3
    batch: int = 100
    policy_delay: int = 2
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    exploration_noise: float = 0.1
    start_steps: int = 1000
    total_steps: int = 30_000
    entropy_mode: str = "auto"
    alpha: float = 1.0
    buffer_size: int = DEFAULT_CAPACITY
    eval_every: int = 1000
    eval_episodes: int = 10
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.algo not in ("td3", "sac"):
            raise ConfigError(f"unknown algorithm {self.algo!r}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.entropy_mode not in ("auto", "fixed"):
            raise ConfigError(f"entropy_mode must be 'auto' or 'fixed', got {self.entropy_mode!r}")
        for name in ("batch", "policy_delay", "total_steps", "buffer_size", "eval_every", "eval_episodes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.start_steps < 0 or self.checkpoint_every < 0:
            raise ConfigError("start_steps and checkpoint_every must be non-negative")
        if self.lr < 0 or self.policy_noise < 0 or self.noise_clip < 0 or self.exploration_noise < 0:
            raise ConfigError("learning rate and noise settings must be non-negative")


def _mse_grad(q, y):
    diff = q - y
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.shape[1]


class TD3Agent:
    def __init__(self, arch: ArchitectureConfig, obs_dim: int, act_dim: int, action_scale,
                 cfg: TrainConfig, seed: int = 0):
        if arch.policy_kind != "deterministic":
            raise ConfigError("TD3 needs a deterministic actor")
        self.cfg = cfg
        self.scale = np.asarray(action_scale, dtype=np.float64).reshape(-1, 1) * np.ones((act_dim, 1))
        self.actor = build_actor(arch, obs_dim, act_dim, seed=derive_seed(seed, 1), action_scale=self.scale)
        self.actor_target = self.actor.clone()
        self.critic = Critic(obs_dim, act_dim, arch.critic_hidden, seed=derive_seed(seed, 2))
        self.critic_target = self.critic.clone()
        self.actor_opt = Adam(self.actor.params(), cfg.lr)
        self.critic_opt = Adam(self.critic.params(), cfg.lr)
        self.actor_target_arena = ParamArena(self.actor_target.params())
        self.critic_target_arena = ParamArena(self.critic_target.params())
        self.rng = make_rng(derive_seed(seed, 3))
        self.updates = 0

    def select_action(self, obs, rng: np.random.Generator) -> np.ndarray:
        a = self.actor.act(obs)
        a = a + rng.normal(0.0, self.cfg.exploration_noise, size=a.shape) * self.scale[:, 0]
        return np.clip(a, -self.scale[:, 0], self.scale[:, 0])

    def compute_target(self, batch) -> np.ndarray:
        cfg = self.cfg
        a2 = self.actor_target.forward_deterministic(batch.s_next)
        noise = self.rng.normal(0.0, cfg.policy_noise, size=a2.shape)
        noise = np.clip(noise, -cfg.noise_clip, cfg.noise_clip) * self.scale
        a2 = np.clip(a2 + noise, -self.scale, self.scale)
        q1, q2 = self.critic_target(batch.s_next, a2)
        return batch.r + cfg.gamma * (1.0 - batch.done) * np.minimum(q1, q2)

    def update(self, batch) -> dict:
        cfg = self.cfg
        y = self.compute_target(batch)
        q1, q2 = self.critic(batch.s, batch.a)
        l1, g1 = _mse_grad(q1, y)
        l2, g2 = _mse_grad(q2, y)
        critic_loss = l1 + l2
        if not math.isfinite(critic_loss):
            raise NumericFault("non-finite critic loss", self.updates)
        self.critic.backward(g1, g2)
        self.critic_opt.step()
        self.updates += 1
        info = {"critic_loss": critic_loss}
        if self.updates % cfg.policy_delay == 0:
            a = self.actor.forward_deterministic(batch.s)
            q = self.critic.forward_q1(batch.s, a)
            n = q.shape[1]
            actor_loss = -float(np.mean(q))
            if not math.isfinite(actor_loss):
                raise NumericFault("non-finite actor loss", self.updates)
            ga = self.critic.backward(g1=-np.ones_like(q) / n, accumulate=False)
            self.actor.backward_deterministic(ga)
            self.actor_opt.step()
            soft_update(self.critic_target_arena, self.critic_opt.arena, cfg.tau)
            soft_update(self.actor_target_arena, self.actor_opt.arena, cfg.tau)
            info["actor_loss"] = actor_loss
        return info

    def networks(self):
        return {"actor": self.actor, "critic": self.critic}


class SACAgent:
    def __init__(self, arch: ArchitectureConfig, obs_dim: int, act_dim: int, action_scale,
                 cfg: TrainConfig, seed: int = 0):
        if arch.policy_kind != "gaussian":
            raise ConfigError("SAC needs a gaussian actor")
        self.cfg = cfg
        self.act_dim = act_dim
        self.scale = np.asarray(action_scale, dtype=np.float64).reshape(-1, 1) * np.ones((act_dim, 1))
        self.actor = build_actor(arch, obs_dim, act_dim, seed=derive_seed(seed, 1), action_scale=self.scale)
        self.critic = Critic(obs_dim, act_dim, arch.critic_hidden, seed=derive_seed(seed, 2))
        self.critic_target = self.critic.clone()
        self.actor_opt = Adam(self.actor.params(), cfg.lr)
        self.critic_opt = Adam(self.critic.params(), cfg.lr)
        self.critic_target_arena = ParamArena(self.critic_target.params())
        self.log_alpha = ParamBlock(np.array([[math.log(cfg.alpha)]]) if cfg.alpha > 0 else np.array([[-np.inf]]),
                                    name="log_alpha")
        self.alpha_opt = Adam([self.log_alpha], cfg.lr)
        self.target_entropy = -float(act_dim)
        self.rng = make_rng(derive_seed(seed, 3))
        self.updates = 0

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha.value[0, 0]))

    def sample(self, s, eps=None):
        mean, log_std = self.actor.forward_gaussian(s)
        if eps is None:
            eps = self.rng.standard_normal(mean.shape)
        a, logp, cache = squashed_gaussian_sample(mean, log_std, eps)
        return self.scale * a, logp, cache

    def select_action(self, obs, rng: np.random.Generator) -> np.ndarray:
        mean, log_std = self.actor.forward_gaussian(obs)
        u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        return self.scale[:, 0] * np.tanh(u)

    def compute_target(self, batch) -> np.ndarray:
        a2, logp2, _ = self.sample(batch.s_next)
        q1, q2 = self.critic_target(batch.s_next, a2)
        soft_q = np.minimum(q1, q2) - self.alpha * logp2 if self.alpha > 0 else np.minimum(q1, q2)
        return batch.r + self.cfg.gamma * (1.0 - batch.done) * soft_q

    def actor_loss(self, s, eps, alpha=None):
        """Reparameterized actor objective ``mean(alpha * log_pi - min(Q1, Q2))`` for fixed noise."""
        alpha = self.alpha if alpha is None else alpha
        a, logp, _ = self.sample(s, eps)
        q1, q2 = self.critic(s, a)
        return float(np.mean(alpha * logp - np.minimum(q1, q2)))

    def update(self, batch) -> dict:
        cfg = self.cfg
        y = self.compute_target(batch)
        q1, q2 = self.critic(batch.s, batch.a)
        l1, g1 = _mse_grad(q1, y)
        l2, g2 = _mse_grad(q2, y)
        critic_loss = l1 + l2
        if not math.isfinite(critic_loss):
            raise NumericFault("non-finite critic loss", self.updates)
        self.critic.backward(g1, g2)
        self.critic_opt.step()

        alpha = self.alpha
        a, logp, cache = self.sample(batch.s)
        q1, q2 = self.critic(batch.s, a)
        n = q1.shape[1]
        actor_loss = float(np.mean(alpha * logp - np.minimum(q1, q2)))
        if not math.isfinite(actor_loss):
            raise NumericFault("non-finite actor loss", self.updates)
        first = q1 <= q2
        first = first.astype(np.float64)
        ga = self.critic.backward(-first / n, -(1.0 - first) / n, accumulate=False)
        gm, gls = squashed_gaussian_backward(cache, ga * self.scale, np.full_like(logp, alpha / n))
        self.actor.backward_gaussian(gm, gls)
        self.actor_opt.step()

        info = {"critic_loss": critic_loss, "actor_loss": actor_loss, "entropy": -float(np.mean(logp))}
        if cfg.entropy_mode == "auto":
            self.log_alpha.grad[0, 0] = alpha * float(np.mean(-logp - self.target_entropy))
            self.alpha_opt.step()
        info["alpha"] = self.alpha
        soft_update(self.critic_target_arena, self.critic_opt.arena, cfg.tau)
        self.updates += 1
        return info

    def networks(self):
        return {"actor": self.actor, "critic": self.critic}


def make_agent(arch: ArchitectureConfig, env: Env, cfg: TrainConfig, seed: int = 0):
    spec = env.spec
    if cfg.algo == "td3":
        if arch.policy_kind != "deterministic":
            arch = ArchitectureConfig(**{**arch.__dict__, "policy_kind": "deterministic"})
        return TD3Agent(arch, spec.obs_dim, spec.act_dim, spec.action_scale, cfg, seed)
    if arch.policy_kind != "gaussian":
        arch = ArchitectureConfig(**{**arch.__dict__, "policy_kind": "gaussian"})
    return SACAgent(arch, spec.obs_dim, spec.act_dim, spec.action_scale, cfg, seed)


def eval_seed(seed: int) -> int:
    return 100 + 1000 * int(seed)


def train(agent, env: Env, cfg: TrainConfig, eval_hook: Optional[Callable] = None, seed: int = 0,
          eval_env: Optional[Env] = None, checkpoint_dir=None, on_eval: Optional[Callable] = None) -> LearningCurve:
    """Interact with ``env`` for ``cfg.total_steps`` steps, one gradient update per step.

    Actions are uniform random for the first ``start_steps`` steps, updates start
    afterwards. ``eval_hook(step, agent) -> EvalRecord`` runs every ``eval_every``
    steps; by default it evaluates the deterministic policy on ``eval_env``.
    With ``checkpoint_dir`` set, ``best.ckpt`` tracks the best evaluation and
    ``step_<n>.ckpt`` is written every ``checkpoint_every`` steps.
    """
    spec = env.spec
    low, high = np.asarray(spec.action_low), np.asarray(spec.action_high)
    explore_rng = make_rng(derive_seed(seed, 4))
    sample_rng = make_rng(derive_seed(seed, 5))
    buffer = ReplayBuffer(spec.obs_dim, spec.act_dim, cfg.buffer_size)
    if eval_hook is None:
        eval_env = eval_env or type(env)()

        def eval_hook(step, ag):
            return evaluate(ag.actor, eval_env, cfg.eval_episodes, seed=eval_seed(seed), step=step)

    records: list[EvalRecord] = []
    best = -np.inf
    obs = env.reset(seed=derive_seed(seed, 6))
    for step in range(1, cfg.total_steps + 1):
        if step <= cfg.start_steps:
            a = explore_rng.uniform(low, high)
        else:
            a = agent.select_action(obs, explore_rng)
        res = env.step(a)
        buffer.push(Transition(obs, a, res.reward, res.next_obs, 1.0 if res.done else 0.0))
        obs = res.next_obs
        if res.done or res.truncated:
            obs = env.reset()
        if step > cfg.start_steps and len(buffer) >= 1:
            try:
                agent.update(buffer.sample(cfg.batch, sample_rng))
            except NumericFault as exc:
                raise NumericFault(str(exc).split(" (step")[0], step) from exc
        if step % cfg.eval_every == 0:
            rec = eval_hook(step, agent)
            records.append(rec)
            if on_eval is not None:
                on_eval(rec)
            if checkpoint_dir is not None and rec.mean > best:
                best = rec.mean
                save_checkpoint(checkpoint_dir / "best.ckpt", agent.networks(),
                                {"step": step, "eval_mean": rec.mean, "eval_seed": eval_seed(seed),
                                 "returns": rec.returns.tolist(), "seed": seed})
        if checkpoint_dir is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_dir / f"step_{step}.ckpt", agent.networks(), {"step": step, "seed": seed})
    return LearningCurve.from_records(seed, records)
