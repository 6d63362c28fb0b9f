"""Pure NumPy reference implementation of the mixture kernel."""

from __future__ import annotations

import numpy as np

_LOG_2PI = float(np.log(2.0 * np.pi))


def mixture_logpdf_score(x, means, log_weights, var, num_threads=1):
    # num_threads is accepted for signature parity; NumPy/BLAS manage
    # their own threading.
    x = np.ascontiguousarray(x, dtype=np.float64)
    means = np.ascontiguousarray(means, dtype=np.float64)
    log_weights = np.asarray(log_weights, dtype=np.float64)
    n, d = x.shape
    # Squared distances via the expansion |x|^2 + |m|^2 - 2 x.m
    sq = (
        np.einsum("ij,ij->i", x, x)[:, None]
        + np.einsum("kj,kj->k", means, means)[None, :]
        - 2.0 * (x @ means.T)
    )
    np.maximum(sq, 0.0, out=sq)
    loga = log_weights[None, :] - sq / (2.0 * var)
    shift = loga.max(axis=1)
    p = np.exp(loga - shift[:, None])
    norm = p.sum(axis=1)
    logpdf = shift + np.log(norm) - 0.5 * d * (_LOG_2PI + np.log(var))
    # sum_k p_k m_k / sum_k p_k equals the posterior mean over components;
    # the score is (posterior mean - x) / var.
    score = ((p / norm[:, None]) @ means - x) / var
    return logpdf, score
