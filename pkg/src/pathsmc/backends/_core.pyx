# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled mixture kernel.

Same contract as :func:`pathsmc.backends.pure.mixture_logpdf_score`.
Particles are partitioned statically across OpenMP threads; each row is
accumulated sequentially over components, so results do not depend on
the thread count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport exp, log, INFINITY

cnp.import_array()

cdef double _LOG_2PI = 1.8378770664093453


cdef inline void _row(
    const double* xi,
    const double* means,
    const double* log_w,
    Py_ssize_t n_comp,
    Py_ssize_t dim,
    double inv_two_var,
    double inv_var,
    double log_norm,
    double* out_logpdf,
    double* out_score,
) noexcept nogil:
    cdef Py_ssize_t k, j
    cdef double shift = -INFINITY
    cdef double a, q, diff, p, total
    for k in range(n_comp):
        q = 0.0
        for j in range(dim):
            diff = xi[j] - means[k * dim + j]
            q += diff * diff
        a = log_w[k] - q * inv_two_var
        if a > shift:
            shift = a
    total = 0.0
    for j in range(dim):
        out_score[j] = 0.0
    for k in range(n_comp):
        q = 0.0
        for j in range(dim):
            diff = xi[j] - means[k * dim + j]
            q += diff * diff
        p = exp(log_w[k] - q * inv_two_var - shift)
        total += p
        for j in range(dim):
            out_score[j] += p * means[k * dim + j]
    out_logpdf[0] = shift + log(total) - log_norm
    for j in range(dim):
        out_score[j] = (out_score[j] / total - xi[j]) * inv_var


def mixture_logpdf_score(x, means, log_weights, double var, int num_threads=1):
    cdef cnp.ndarray[double, ndim=2, mode="c"] xc = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] mc = np.ascontiguousarray(means, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] lwc = np.ascontiguousarray(log_weights, dtype=np.float64)
    cdef Py_ssize_t n = xc.shape[0]
    cdef Py_ssize_t dim = xc.shape[1]
    cdef Py_ssize_t n_comp = mc.shape[0]
    if mc.shape[1] != dim:
        raise ValueError("means dimension does not match x")
    if lwc.shape[0] != n_comp:
        raise ValueError("log_weights length does not match means")
    if var <= 0.0:
        raise ValueError("var must be positive")

    cdef cnp.ndarray[double, ndim=1, mode="c"] logpdf = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] score = np.empty((n, dim), dtype=np.float64)

    cdef double inv_two_var = 0.5 / var
    cdef double inv_var = 1.0 / var
    cdef double log_norm = 0.5 * dim * (_LOG_2PI + log(var))
    cdef int nt = num_threads if num_threads > 0 else 1
    cdef Py_ssize_t i

    cdef double* xp = &xc[0, 0]
    cdef double* mp = &mc[0, 0]
    cdef double* lwp = &lwc[0]
    cdef double* lp = &logpdf[0]
    cdef double* sp = &score[0, 0]

    if n == 0:
        return logpdf, score

    for i in prange(n, nogil=True, schedule="static", num_threads=nt):
        _row(xp + i * dim, mp, lwp, n_comp, dim, inv_two_var, inv_var, log_norm,
             lp + i, sp + i * dim)

    return logpdf, score
