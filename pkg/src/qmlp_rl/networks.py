"""Actor and critic networks.

Four actor topologies share one MLP trunk (two relu hidden layers of width
``n_h`` and an identity output layer):

* ``mlp``    trunk only;
* ``qmlp``   trunk + quadratic neuron from the input straight to the output;
* ``lmlp``   trunk + bias-free linear map from the input to the output;
* ``lqmlp``  trunk + both shortcut units.

All unit outputs are summed *before* the final squashing. A deterministic actor
emits ``scale * tanh(sum)``; a gaussian actor emits ``2A`` values, the first A
being the mean and the last A the (clamped) log standard deviation, and the
shortcut units feed both halves.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
import copy
import json
import struct
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError, StateError
from .nn import MLP, DenseLayer, InitializerSpec, ParamBlock, derive_seed
from .quadratic import FeatureSizeSpec, QuadraticNeuron, feature_count, quad_param_count

ACTOR_KINDS = ("mlp", "qmlp", "lmlp", "lqmlp")
POLICY_KINDS = ("deterministic", "gaussian")
LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0


@dataclass
class ArchitectureConfig:
    actor_kind: str = "mlp"
    n_h: int = 256
    kappa: Optional[float] = None
    n_f: Optional[int] = None
    quad_init: str = "kaiming_uniform"
    policy_kind: str = "deterministic"
    critic_hidden: int = 256

    def __post_init__(self):
        if self.actor_kind not in ACTOR_KINDS:
            raise ConfigError(f"unknown actor kind {self.actor_kind!r}; expected one of {ACTOR_KINDS}")
        if self.policy_kind not in POLICY_KINDS:
            raise ConfigError(f"unknown policy kind {self.policy_kind!r}")
        if self.quad_init not in ("kaiming_uniform", "xavier_uniform", "zero"):
            raise ConfigError(f"unknown quadratic initializer {self.quad_init!r}")
        if self.n_h < 1 or self.critic_hidden < 1:
            raise ConfigError("hidden widths must be positive")
        if self.has_quad:
            if (self.kappa is None) == (self.n_f is None):
                raise ConfigError(f"actor kind {self.actor_kind!r} needs exactly one of kappa or n_f")
            if self.n_f is not None and self.n_f < 1:
                raise ConfigError("n_f must be positive")
            if self.kappa is not None and not 0.0 < self.kappa <= 1.0:
                raise ConfigError(f"kappa must lie in (0, 1], got {self.kappa}")

    @property
    def has_quad(self) -> bool:
        return self.actor_kind in ("qmlp", "lqmlp")

    @property
    def has_linear(self) -> bool:
        return self.actor_kind in ("lmlp", "lqmlp")

    def resolved_n_f(self, obs_dim: int) -> Optional[int]:
        if not self.has_quad:
            return None
        if self.n_f is not None:
            return self.n_f
        return feature_count(FeatureSizeSpec(self.kappa, obs_dim))


def count_parameters(arch: ArchitectureConfig, obs_dim: int, act_dim: int, policy_kind: Optional[str] = None) -> int:
    """Closed-form trainable scalar count of the actor described by ``arch``."""
    policy_kind = policy_kind or arch.policy_kind
    width = act_dim * (2 if policy_kind == "gaussian" else 1)
    n, h = obs_dim, arch.n_h
    total = (n * h + h) + (h * h + h) + (h * width + width)
    if arch.has_quad:
        total += quad_param_count(n, arch.resolved_n_f(obs_dim), width)
    if arch.has_linear:
        total += n * width
    return total


def format_k(n: int) -> str:
    """Round a weight count to the nearest hundred and print it as ``12.3k``."""
    hundreds = (int(n) + 50) // 100
    return f"{hundreds // 10}.{hundreds % 10}k"


class Actor:
    def __init__(self, config: ArchitectureConfig, obs_dim: int, act_dim: int,
                 action_scale=1.0, seed: int = 0):
        self.config = config
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.gaussian = config.policy_kind == "gaussian"
        self.out_width = act_dim * (2 if self.gaussian else 1)
        self.action_scale = np.broadcast_to(np.asarray(action_scale, dtype=np.float64).reshape(-1, 1),
                                            (act_dim, 1)).copy()
        self.seed = seed
        h = config.n_h
        self.trunk = MLP([obs_dim, h, h, self.out_width], "identity", "xavier_uniform",
                         seed=derive_seed(seed, 0), name="actor.trunk")
        self.quad_unit = None
        self.linear_unit = None
        if config.has_quad:
            self.quad_unit = QuadraticNeuron(obs_dim, config.resolved_n_f(obs_dim), self.out_width,
                                             init_kind=config.quad_init, seed=derive_seed(seed, 1),
                                             name="actor.quad")
        if config.has_linear:
            self.linear_unit = DenseLayer(obs_dim, self.out_width, "identity",
                                          InitializerSpec("xavier_uniform", derive_seed(seed, 2)),
                                          bias=False, name="actor.linear")
        self._squash = None

    def units(self):
        return [u for u in (self.trunk, self.quad_unit, self.linear_unit) if u is not None]

    def params(self) -> list[ParamBlock]:
        return [p for u in self.units() for p in u.params()]

    def num_params(self) -> int:
        return sum(p.size for p in self.params())

    def _as_batch(self, s):
        s = np.asarray(s, dtype=np.float64)
        single = s.ndim == 1
        if single:
            s = s[:, None]
        if s.shape[0] != self.obs_dim:
            raise DimensionError(f"actor expects observations of length {self.obs_dim}, got shape {s.shape}")
        return s, single

    def preactivation(self, s: np.ndarray) -> np.ndarray:
        """Sum of all unit outputs, shape ``(out_width, batch)``."""
        z = self.trunk.forward(s)
        if self.quad_unit is not None:
            z = z + self.quad_unit.forward(s)
        if self.linear_unit is not None:
            z = z + self.linear_unit.forward(s)
        return z

    def backward_preactivation(self, gz: np.ndarray, accumulate: bool = True) -> np.ndarray:
        gs = self.trunk.backward(gz, accumulate)
        if self.quad_unit is not None:
            gs = gs + self.quad_unit.backward(gz, accumulate)
        if self.linear_unit is not None:
            gs = gs + self.linear_unit.backward(gz, accumulate)
        return gs

    def forward_deterministic(self, s: np.ndarray) -> np.ndarray:
        if self.gaussian:
            raise ConfigError("forward_deterministic needs a deterministic actor; use forward_gaussian")
        s, single = self._as_batch(s)
        t = np.tanh(self.preactivation(s))
        self._squash = t
        a = self.action_scale * t
        return a[:, 0] if single else a

    def backward_deterministic(self, grad_action: np.ndarray, accumulate: bool = True) -> np.ndarray:
        if self._squash is None:
            raise StateError("actor backward called before forward")
        gz = grad_action * self.action_scale * (1.0 - self._squash ** 2)
        return self.backward_preactivation(gz, accumulate)

    def forward_gaussian(self, s: np.ndarray):
        """Return ``(mean, log_std)``; log_std is clamped to [-20, 2]."""
        if not self.gaussian:
            raise ConfigError("forward_gaussian needs a gaussian actor")
        s, single = self._as_batch(s)
        z = self.preactivation(s)
        mean, raw = z[:self.act_dim], z[self.act_dim:]
        self._raw_log_std = raw
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        if single:
            return mean[:, 0], log_std[:, 0]
        return mean, log_std

    def backward_gaussian(self, grad_mean, grad_log_std, accumulate: bool = True) -> np.ndarray:
        raw = self._raw_log_std
        inside = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        gz = np.concatenate([grad_mean, grad_log_std * inside], axis=0)
        return self.backward_preactivation(gz, accumulate)

    def act(self, s) -> np.ndarray:
        """Deterministic action used for evaluation (tanh of the mean for gaussian actors)."""
        s, single = self._as_batch(s)
        z = self.preactivation(s)
        a = self.action_scale * np.tanh(z[:self.act_dim])
        return a[:, 0] if single else a

    def clone(self) -> "Actor":
        return copy.deepcopy(self)


def squashed_gaussian_sample(mean, log_std, eps):
    """Reparameterized sample ``tanh(mean + exp(log_std) * eps)`` and its log-density.

    The log-density is of the squashed action in (-1, 1) per dimension, summed over
    dimensions, shape ``(1, batch)``. Returns ``(action, log_prob, cache)``.
    """
    std = np.exp(log_std)
    u = mean + std * eps
    a = np.tanh(u)
    # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u)), stable for large |u|
    log_det = 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    logp = -0.5 * eps ** 2 - log_std - 0.5 * np.log(2.0 * np.pi) - log_det
    return a, logp.sum(axis=0, keepdims=True), (u, a, std, eps)


def squashed_gaussian_backward(cache, grad_action, grad_logp):
    """Gradients w.r.t. ``(mean, log_std)`` given grads w.r.t. the squashed action and log-prob."""
    u, a, std, eps = cache
    gu = grad_action * (1.0 - a * a) + grad_logp * 2.0 * a
    return gu, gu * std * eps - grad_logp


class Critic:
    """Twin Q-networks on the concatenated (state, action); no shared parameters."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: int = 256, seed: int = 0):
        self.obs_dim, self.act_dim, self.hidden = obs_dim, act_dim, hidden
        sizes = [obs_dim + act_dim, hidden, hidden, 1]
        self.q1 = MLP(sizes, seed=derive_seed(seed, 10), name="critic.q1")
        self.q2 = MLP(sizes, seed=derive_seed(seed, 11), name="critic.q2")

    def params(self) -> list[ParamBlock]:
        return self.q1.params() + self.q2.params()

    def _input(self, s, a):
        s = np.asarray(s, dtype=np.float64)
        a = np.asarray(a, dtype=np.float64)
        if s.ndim == 1:
            s, a = s[:, None], a.reshape(-1, 1)
        if s.shape[0] != self.obs_dim or a.shape[0] != self.act_dim or s.shape[1] != a.shape[1]:
            raise DimensionError(f"critic expects ({self.obs_dim}, B) states and ({self.act_dim}, B) actions, "
                                 f"got {s.shape} and {a.shape}")
        return np.concatenate([s, a], axis=0)

    def forward(self, s, a):
        x = self._input(s, a)
        return self.q1.forward(x), self.q2.forward(x)

    __call__ = forward

    def forward_q1(self, s, a):
        return self.q1.forward(self._input(s, a))

    def backward(self, g1=None, g2=None, accumulate=True):
        """Backpropagate grads of the two heads; returns the gradient w.r.t. the action rows."""
        gx = None
        if g1 is not None:
            gx = self.q1.backward(g1, accumulate)
        if g2 is not None:
            g = self.q2.backward(g2, accumulate)
            gx = g if gx is None else gx + g
        return None if gx is None else gx[self.obs_dim:]

    def clone(self) -> "Critic":
        return copy.deepcopy(self)


def build_actor(config: ArchitectureConfig, obs_dim: int, act_dim: int, seed: int = 0,
                action_scale=1.0) -> Actor:
    actor = Actor(config, obs_dim, act_dim, action_scale, seed)
    assert actor.num_params() == count_parameters(config, obs_dim, act_dim)
    return actor


# --- checkpoints -------------------------------------------------------------
#
# Layout: 8-byte magic, uint32 version, uint64 header length (all little-endian),
# a UTF-8 JSON header, then every parameter block as little-endian float64 in
# row-major order, in the order listed under header["blocks"].

MAGIC = b"QMLPCKPT"
VERSION = 1


def save_checkpoint(path, networks: dict, meta: Optional[dict] = None):
    header = {"meta": meta or {}, "networks": {}, "blocks": []}
    arrays = []
    for key, net in networks.items():
        if isinstance(net, Actor):
            header["networks"][key] = {
                "type": "actor", "config": asdict(net.config), "obs_dim": net.obs_dim,
                "act_dim": net.act_dim, "action_scale": net.action_scale[:, 0].tolist(), "seed": net.seed}
        elif isinstance(net, Critic):
            header["networks"][key] = {"type": "critic", "obs_dim": net.obs_dim, "act_dim": net.act_dim,
                                       "hidden": net.hidden}
        else:
            raise TypeError(f"cannot checkpoint {type(net).__name__}")
        for p in net.params():
            header["blocks"].append({"name": f"{key}/{p.name}", "shape": list(p.shape)})
            arrays.append(p.value)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", VERSION, len(blob)) + blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Return ``(header, {block name: array})``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 8 + 12
    header = json.loads(data[offset:offset + hlen].decode("utf-8"))
    offset += hlen
    blocks = {}
    for b in header["blocks"]:
        n = int(np.prod(b["shape"]))
        blocks[b["name"]] = np.frombuffer(data, dtype="<f8", count=n, offset=offset).reshape(b["shape"]).copy()
        offset += 8 * n
    if offset != len(data):
        raise ValueError(f"{path}: trailing or missing bytes")
    return header, blocks


def load_checkpoint(path):
    """Rebuild every network stored in ``path``; returns ``(networks, meta)``."""
    header, blocks = read_checkpoint(path)
    nets = {}
    for key, rec in header["networks"].items():
        if rec["type"] == "actor":
            net = Actor(ArchitectureConfig(**rec["config"]), rec["obs_dim"], rec["act_dim"],
                        rec["action_scale"], rec["seed"])
        else:
            net = Critic(rec["obs_dim"], rec["act_dim"], rec["hidden"])
        for p in net.params():
            p.value[...] = blocks[f"{key}/{p.name}"]
        nets[key] = net
    return nets, header["meta"]


def load_actor(path) -> Actor:
    nets, _ = load_checkpoint(path)
    return nets["actor"]
