"""Numpy versions of the compiled kernels; same arithmetic order, used when the extension is absent."""

import numpy as np


def all_finite(x):
    return bool(np.isfinite(x).all())


def adam_update(value, grad, m, v, lr, beta1, beta2, eps, bc1, bc2):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * (grad * grad)
    step_size = lr / bc1
    inv_root_bc2 = 1.0 / np.sqrt(bc2)
    value -= step_size * m / (np.sqrt(v) * inv_root_bc2 + eps)
    grad.fill(0.0)


def soft_update(target, online, tau):
    target *= 1.0 - tau
    target += tau * online
