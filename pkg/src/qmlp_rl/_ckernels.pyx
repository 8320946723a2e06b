# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled elementwise kernels over flat float64 parameter arenas."""

from libc.math cimport sqrt


def all_finite(const double[::1] x):
    # inf/nan have every exponent bit set, so adding one to the exponent field
    # carries into bit 63 exactly for them; add/and/or reductions vectorize on
    # plain sse2 where a per-element isfinite branch does not
    cdef Py_ssize_t i, start, stop, n = x.shape[0]
    cdef unsigned long long bad
    cdef unsigned long long exp_mask = 0x7FF0000000000000ULL, exp_one = 0x0010000000000000ULL
    if n == 0:
        return True
    cdef const unsigned long long* bits = <const unsigned long long*>&x[0]
    for start in range(0, n, 4096):
        stop = min(start + 4096, n)
        bad = 0
        for i in range(start, stop):
            bad |= (bits[i] & exp_mask) + exp_one
        if bad >> 63:
            return False
    return True


def adam_update(double[::1] value, double[::1] grad, double[::1] m, double[::1] v,
                double lr, double beta1, double beta2, double eps, double bc1, double bc2):
    cdef Py_ssize_t i, n = value.shape[0]
    cdef double c1 = 1.0 - beta1, c2 = 1.0 - beta2
    cdef double step_size = lr / bc1, inv_root_bc2 = 1.0 / sqrt(bc2)
    cdef double g, mi, vi
    cdef double* pv = &value[0]
    cdef double* pg = &grad[0]
    cdef double* pm = &m[0]
    cdef double* pw = &v[0]
    with nogil:
        for i in range(n):
            g = pg[i]
            mi = pm[i] * beta1 + c1 * g
            vi = pw[i] * beta2 + c2 * (g * g)
            pm[i] = mi
            pw[i] = vi
            pv[i] = pv[i] - step_size * mi / (sqrt(vi) * inv_root_bc2 + eps)
            pg[i] = 0.0


def soft_update(double[::1] target, const double[::1] online, double tau):
    cdef Py_ssize_t i, n = target.shape[0]
    cdef double keep = 1.0 - tau
    with nogil:
        for i in range(n):
            target[i] = target[i] * keep + tau * online[i]
