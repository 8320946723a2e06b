"""Dense layers with layer-local backward passes, initializers and Adam.

Conventions used throughout the package:

* arrays are ``float64``;
* a batch is a matrix of column vectors, shape ``(features, batch)``;
* losses are mean-reduced over the batch, so the gradient a caller feeds to
  ``backward`` already carries the ``1/batch`` factor;
* every random draw goes through ``numpy.random.Generator`` backed by PCG64
  (``numpy.random.default_rng``), which is portable across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError, NumericFault, StateError

ACTIVATIONS = ("relu", "tanh", "identity")
INIT_KINDS = ("kaiming_uniform", "xavier_uniform", "zero")


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def derive_seed(seed: int, *path: int) -> int:
    """Deterministically derive a 64-bit child seed from ``seed`` and a path of ints."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class ParamBlock:
    """A trainable array together with its gradient and Adam moments."""

    value: np.ndarray
    name: str = ""
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    step_count: int = 0

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64, ndmin=2)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self):
        self.grad.fill(0.0)


@dataclass(frozen=True)
class InitializerSpec:
    kind: str = "xavier_uniform"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown initializer {self.kind!r}; expected one of {INIT_KINDS}")


def init_params(shape, spec: InitializerSpec) -> np.ndarray:
    """Sample a weight matrix of ``shape = (fan_out, fan_in)``.

    kaiming_uniform draws from U(-sqrt(6/fan_in), sqrt(6/fan_in)), xavier_uniform
    from U(-sqrt(6/(fan_in+fan_out)), +...), zero returns zeros. Identical
    ``(kind, seed, shape)`` always yields identical values.
    """
    fan_out, fan_in = int(shape[0]), int(shape[1])
    if fan_out < 1 or fan_in < 1:
        raise ValueError(f"shape must be positive, got {shape}")
    if spec.kind == "zero":
        return np.zeros((fan_out, fan_in))
    if spec.kind == "kaiming_uniform":
        bound = np.sqrt(6.0 / fan_in)
    else:
        bound = np.sqrt(6.0 / (fan_in + fan_out))
    return make_rng(spec.seed).uniform(-bound, bound, size=(fan_out, fan_in))


def _check_input(x, width, what):
    if x.ndim != 2 or x.shape[0] != width:
        raise DimensionError(f"{what}: expected input of shape ({width}, batch), got {x.shape}")


class DenseLayer:
    """``activation(W @ x + b)`` on a batch of column vectors."""

    def __init__(self, n_in: int, n_out: int, activation: str = "identity",
                 init: InitializerSpec = InitializerSpec(), bias: bool = True, name: str = "dense"):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.name = name
        self.weights = ParamBlock(init_params((n_out, n_in), init), name=f"{name}.weights")
        self.bias = ParamBlock(np.zeros((n_out, 1)), name=f"{name}.bias") if bias else None
        self._x = None
        self._y = None

    def params(self) -> list[ParamBlock]:
        return [self.weights] if self.bias is None else [self.weights, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        _check_input(x, self.n_in, self.name)
        z = self.weights.value @ x
        if self.bias is not None:
            z += self.bias.value
        if self.activation == "relu":
            y = np.maximum(z, 0.0)
        elif self.activation == "tanh":
            y = np.tanh(z)
        else:
            y = z
        self._x, self._y = x, y
        return y

    __call__ = forward

    def backward(self, grad_out: np.ndarray, accumulate: bool = True) -> np.ndarray:
        """Propagate ``d loss / d output``; returns ``d loss / d input``.

        With ``accumulate=False`` only the input gradient is computed, which is how
        an actor update differentiates through a critic without touching it.
        """
        if self._x is None:
            raise StateError(f"{self.name}: backward called before forward")
        if grad_out.shape != self._y.shape:
            raise DimensionError(f"{self.name}: grad shape {grad_out.shape} != output shape {self._y.shape}")
        if self.activation == "relu":
            g = grad_out * (self._y > 0.0)
        elif self.activation == "tanh":
            g = grad_out * (1.0 - self._y * self._y)
        else:
            g = grad_out
        if accumulate:
            self.weights.grad += g @ self._x.T
            if self.bias is not None:
                self.bias.grad += g.sum(axis=1, keepdims=True)
        return self.weights.value.T @ g


def dense_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    return layer.forward(x)


class MLP:
    """Stack of dense layers: relu hidden layers and a configurable output activation."""

    def __init__(self, sizes, out_activation="identity", init_kind="xavier_uniform", seed=0, name="mlp"):
        self.layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            act = "relu" if i < len(sizes) - 2 else out_activation
            spec = InitializerSpec(init_kind, derive_seed(seed, i))
            self.layers.append(DenseLayer(n_in, n_out, act, spec, name=f"{name}.{i}"))

    def params(self) -> list[ParamBlock]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    __call__ = forward

    def backward(self, grad, accumulate=True):
        for layer in reversed(self.layers):
            grad = layer.backward(grad, accumulate)
        return grad


def zero_grads(params):
    for p in params:
        p.zero_grad()


def _check_finite_grads(params):
    for p in params:
        if not kernels.all_finite(p.grad.reshape(-1)):
            raise NumericFault(f"non-finite gradient in parameter block {p.name or '<unnamed>'}")


def adam_step(params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update over ``params``; zeroes grads afterwards."""
    params = list(params)
    _check_finite_grads(params)
    for p in params:
        p.step_count += 1
        t = p.step_count
        kernels.adam_update(p.value.reshape(-1), p.grad.reshape(-1), p.adam_m.reshape(-1),
                            p.adam_v.reshape(-1), lr, beta1, beta2, eps,
                            1.0 - beta1 ** t, 1.0 - beta2 ** t)
    return params


class ParamArena:
    """Moves a list of blocks into shared flat buffers so kernels touch them in one pass.

    Each block's ``value``/``grad``/``adam_m``/``adam_v`` become views into the
    arena; a block can live in at most one arena at a time. Copies made with
    ``copy.deepcopy`` or pickle re-establish the views in the copy.
    """

    _FIELDS = ("value", "grad", "adam_m", "adam_v")

    def __init__(self, params):
        self.params = list(params)
        total = sum(p.size for p in self.params)
        for attr in self._FIELDS:
            setattr(self, attr, np.empty(total))
        self._bind(copy_in=True)

    def _bind(self, copy_in):
        offset = 0
        for p in self.params:
            n, shape = p.size, p.shape
            sl = slice(offset, offset + n)
            for attr in self._FIELDS:
                flat = getattr(self, attr)
                if copy_in:
                    flat[sl] = getattr(p, attr).reshape(-1)
                setattr(p, attr, flat[sl].reshape(shape))
            offset += n

    def __setstate__(self, state):
        # copied blocks arrive holding standalone arrays; point them back at the buffers
        self.__dict__.update(state)
        self._bind(copy_in=False)

    def __len__(self):
        return self.value.size


class Adam:
    """Adam over a parameter list packed into one arena."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.arena = ParamArena(params)
        self.params = self.arena.params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = max((p.step_count for p in self.params), default=0)

    def zero_grad(self):
        self.arena.grad.fill(0.0)

    def step(self):
        if not kernels.all_finite(self.arena.grad):
            _check_finite_grads(self.params)
        self.t += 1
        for p in self.params:
            p.step_count = self.t
        kernels.adam_update(self.arena.value, self.arena.grad, self.arena.adam_m, self.arena.adam_v,
                            self.lr, self.beta1, self.beta2, self.eps,
                            1.0 - self.beta1 ** self.t, 1.0 - self.beta2 ** self.t)


def count(params) -> int:
    return int(sum(p.size for p in params))


def soft_update(target, online, tau):
    """Polyak averaging ``target <- tau * online + (1 - tau) * target``.

    Accepts two :class:`ParamArena` objects (single fused pass) or two matching
    lists of blocks.
    """
    if isinstance(target, ParamArena):
        kernels.soft_update(target.value, online.value, tau)
        return
    for t, o in zip(target, online):
        kernels.soft_update(t.value.reshape(-1), o.value.reshape(-1), tau)


def hard_update(target_params, online_params):
    for t, o in zip(target_params, online_params):
        t.value[...] = o.value
