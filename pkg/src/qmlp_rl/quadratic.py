"""Quadratic neuron: a factorized degree-2 map of the input followed by a linear head.

For an input ``x`` of length N the unit computes ``n_f`` features

    Q_f(x) = (theta_prime[f] . x) * (theta_double_prime[f] . x)

and maps them to the output with ``head_weights @ Q(x) + head_bias``. No
activation is applied inside the unit, so its output is exactly quadratic in
``x`` up to the constant bias.

:class:`ExplicitQuadratic` is the upper-triangular ``x^T Theta x`` form with
one weight per monomial. It costs O(N^2) per feature and is only used to check
the factorized unit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .errors import ConfigError, DimensionError, StateError
from .nn import InitializerSpec, ParamBlock, derive_seed, init_params


class QuadraticNeuron:
    def __init__(self, input_dim: int, n_f: int, output_dim: int,
                 init_kind: str = "kaiming_uniform", head_init_kind: str = "xavier_uniform",
                 seed: int = 0, name: str = "quad"):
        if min(input_dim, n_f, output_dim) < 1:
            raise ConfigError("quadratic neuron dimensions must be positive")
        self.input_dim, self.n_f, self.output_dim = input_dim, n_f, output_dim
        self.name = name
        shape = (n_f, input_dim)
        self.theta_prime = ParamBlock(init_params(shape, InitializerSpec(init_kind, derive_seed(seed, 0))),
                                      name=f"{name}.theta_prime")
        self.theta_double_prime = ParamBlock(init_params(shape, InitializerSpec(init_kind, derive_seed(seed, 1))),
                                             name=f"{name}.theta_double_prime")
        # Zero-init leaves the head weights random: with both projections at
        # zero the unit outputs zero anyway, and a zero head would never train.
        self.head_weights = ParamBlock(
            init_params((output_dim, n_f), InitializerSpec(head_init_kind, derive_seed(seed, 2))),
            name=f"{name}.head_weights")
        self.head_bias = ParamBlock(np.zeros((output_dim, 1)), name=f"{name}.head_bias")
        self._cache = None

    def params(self) -> list[ParamBlock]:
        return [self.theta_prime, self.theta_double_prime, self.head_weights, self.head_bias]

    def features(self, x: np.ndarray) -> np.ndarray:
        """Pre-head output Q(x), shape ``(n_f, batch)``."""
        if x.ndim != 2 or x.shape[0] != self.input_dim:
            raise DimensionError(f"{self.name}: expected input of shape ({self.input_dim}, batch), got {x.shape}")
        return (self.theta_prime.value @ x) * (self.theta_double_prime.value @ x)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[0] != self.input_dim:
            raise DimensionError(f"{self.name}: expected input of shape ({self.input_dim}, batch), got {x.shape}")
        u = self.theta_prime.value @ x
        v = self.theta_double_prime.value @ x
        q = u * v
        self._cache = (x, u, v, q)
        return self.head_weights.value @ q + self.head_bias.value

    __call__ = forward

    def backward(self, grad_out: np.ndarray, accumulate: bool = True) -> np.ndarray:
        if self._cache is None:
            raise StateError(f"{self.name}: backward called before forward")
        x, u, v, q = self._cache
        if grad_out.shape != (self.output_dim, x.shape[1]):
            raise DimensionError(f"{self.name}: grad shape {grad_out.shape} does not match output")
        gq = self.head_weights.value.T @ grad_out
        gu = gq * v
        gv = gq * u
        if accumulate:
            self.head_weights.grad += grad_out @ q.T
            self.head_bias.grad += grad_out.sum(axis=1, keepdims=True)
            self.theta_prime.grad += gu @ x.T
            self.theta_double_prime.grad += gv @ x.T
        return self.theta_prime.value.T @ gu + self.theta_double_prime.value.T @ gv


def quad_forward(q: QuadraticNeuron, x: np.ndarray) -> np.ndarray:
    """Evaluate the unit on a single vector or a batch of column vectors."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return q.forward(x[:, None])[:, 0]
    return q.forward(x)


@dataclass
class ExplicitQuadratic:
    """One upper-triangular ``N x N`` matrix per feature."""

    theta_hat: np.ndarray  # (n_f, N, N)

    def __post_init__(self):
        th = np.asarray(self.theta_hat, dtype=np.float64)
        if th.ndim == 2:
            th = th[None]
        if th.ndim != 3 or th.shape[1] != th.shape[2]:
            raise ValueError(f"theta_hat must be (n_f, N, N), got {th.shape}")
        if np.any(np.tril(th, k=-1) != 0.0):
            raise ValueError("theta_hat must be upper triangular (strictly lower entries non-zero)")
        self.theta_hat = th

    @property
    def n_f(self):
        return self.theta_hat.shape[0]

    @property
    def input_dim(self):
        return self.theta_hat.shape[1]

    @classmethod
    def from_factors(cls, theta_prime, theta_double_prime):
        """Fold each rank-1 product ``p q^T`` into the equivalent upper-triangular matrix."""
        p = np.atleast_2d(theta_prime)
        r = np.atleast_2d(theta_double_prime)
        outer = p[:, :, None] * r[:, None, :]
        folded = outer + np.swapaxes(outer, 1, 2)
        n = p.shape[1]
        diag = np.arange(n)
        folded[:, diag, diag] = outer[:, diag, diag]
        return cls(np.triu(folded))


def explicit_forward(e: ExplicitQuadratic, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (e.input_dim,):
        raise DimensionError(f"expected input of length {e.input_dim}, got shape {x.shape}")
    return np.einsum("i,fij,j->f", x, e.theta_hat, x)


@dataclass(frozen=True)
class FeatureSizeSpec:
    kappa: float
    input_dim: int


def feature_count(spec: FeatureSizeSpec) -> int:
    """Number of quadratic features: integer part of kappa^2 / 2 * N * (N + 1).

    ``kappa`` is taken at its decimal value (0.1 means 1/10), so products that
    are mathematically whole numbers are not truncated one below by float error.
    """
    kappa, n = spec.kappa, spec.input_dim
    if not 0.0 < kappa <= 1.0:
        raise ConfigError(f"kappa must lie in (0, 1], got {kappa}")
    if n < 1:
        raise ConfigError(f"input dimension must be positive, got {n}")
    k = Fraction(repr(float(kappa)))
    n_f = math.floor(k * k / 2 * n * (n + 1))
    if n_f < 1:
        raise ConfigError(f"kappa={kappa} with N={n} gives zero quadratic features; use a larger kappa")
    return n_f


def explicit_param_count(input_dim: int, n_f: int) -> int:
    return input_dim * (input_dim + 1) // 2 * n_f


def quad_param_count(input_dim: int, n_f: int, output_dim: int) -> int:
    return 2 * n_f * input_dim + output_dim * n_f + output_dim
