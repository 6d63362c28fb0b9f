"""Kernel backend selection.

The hot kernel (log-density and score of an isotropic Gaussian mixture,
evaluated for the whole ensemble every step) has two implementations: a
compiled Cython extension and a pure NumPy fallback. The extension is
preferred when importable; set ``PATHSMC_BACKEND=python`` to force the
fallback or ``PATHSMC_BACKEND=cython`` to fail loudly if the extension
is missing.

``PATHSMC_NUM_THREADS`` caps the compiled kernel's OpenMP threads
(default: machine parallelism). Results are bitwise independent of the
thread count; particles are partitioned with no cross-thread reduction.
"""

from __future__ import annotations

import os

_requested = os.environ.get("PATHSMC_BACKEND", "").strip().lower()

if _requested in ("", "cython", "compiled"):
    try:
        from . import _core as _impl

        BACKEND = "cython"
    except ImportError:
        if _requested:
            raise
        from . import pure as _impl

        BACKEND = "python"
elif _requested in ("python", "pure", "numpy"):
    from . import pure as _impl

    BACKEND = "python"
else:
    raise ValueError(f"PATHSMC_BACKEND={_requested!r} (use 'cython' or 'python')")


_CPU_COUNT = os.cpu_count() or 1


def num_threads() -> int:
    """Thread budget for compiled kernels, from the environment."""
    raw = os.environ.get("PATHSMC_NUM_THREADS", "").strip()
    if raw:
        value = int(raw)
        if value < 1:
            raise ValueError(f"PATHSMC_NUM_THREADS must be >= 1, got {value}")
        return value
    return _CPU_COUNT


def mixture_logpdf_score(x, means, log_weights, var):
    """Log-density and score of sum_k w_k N(means[k], var*I) at rows of x.

    Returns (logpdf, score) with shapes (n,) and (n, d).
    """
    return _impl.mixture_logpdf_score(x, means, log_weights, var, num_threads())
