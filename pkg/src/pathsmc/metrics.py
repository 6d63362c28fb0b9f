"""Sample-based distribution distances against the analytic posterior.

Four quantities are reported per run: RBF-kernel maximum mean
discrepancy (biased V-statistic, median-heuristic bandwidth by
default), sliced Wasserstein-2 distance over random unit projections,
weighted-mean l2 error, and weighted-covariance Frobenius error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .reward import TiltedGmm, tilted_moments

_MEDIAN_SUBSAMPLE = 2000
_KERNEL_CHUNK = 1024


@dataclass(frozen=True)
class MetricsReport:
    mmd: float
    swd: float
    mean_l2: float
    cov_frob: float
    n_samples: int
    seed: int

    def __post_init__(self) -> None:
        values = (self.mmd, self.swd, self.mean_l2, self.cov_frob)
        if not all(np.isfinite(v) and v >= 0.0 for v in values):
            raise ValueError(f"metrics must be finite and nonnegative, got {values}")


def median_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    """Median pairwise distance over the pooled samples, subsampled to
    at most 2000 points with an even stride (deterministic)."""
    pooled = np.vstack([np.atleast_2d(x), np.atleast_2d(y)])
    if pooled.shape[0] > _MEDIAN_SUBSAMPLE:
        idx = np.linspace(0, pooled.shape[0] - 1, _MEDIAN_SUBSAMPLE).astype(np.intp)
        pooled = pooled[idx]
    dists = cdist(pooled, pooled)
    off_diag = dists[~np.eye(dists.shape[0], dtype=bool)]
    return float(np.median(off_diag))


def _mean_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> float:
    # Chunked accumulation in a fixed order keeps memory bounded and the
    # result independent of chunk size; squared distances come from the
    # |a|^2 + |b|^2 - 2 a.b expansion so the inner product uses BLAS.
    y_sq = np.einsum("ij,ij->i", y, y)
    total = 0.0
    for start in range(0, x.shape[0], _KERNEL_CHUNK):
        block = x[start : start + _KERNEL_CHUNK]
        sq = np.einsum("ij,ij->i", block, block)[:, None] + y_sq[None, :] - 2.0 * (block @ y.T)
        np.maximum(sq, 0.0, out=sq)
        total += float(np.exp(-gamma * sq).sum())
    return total / (x.shape[0] * y.shape[0])


def mmd_rbf(x: np.ndarray, y: np.ndarray, bandwidth: float | str = "median") -> float:
    """Biased V-statistic MMD with kernel exp(-|a-b|^2 / (2 h^2)).

    bandwidth may be a positive float or the string 'median' for the
    pooled median heuristic. Returns sqrt(max(MMD^2, 0)).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError("mmd_rbf needs at least 2 samples on each side")
    if isinstance(bandwidth, str):
        if bandwidth != "median":
            raise ValueError(f"unknown bandwidth mode {bandwidth!r}")
        h = median_bandwidth(x, y)
    else:
        h = float(bandwidth)
    if h <= 0.0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    gamma = 1.0 / (2.0 * h * h)
    mmd2 = (
        _mean_kernel(x, x, gamma)
        + _mean_kernel(y, y, gamma)
        - 2.0 * _mean_kernel(x, y, gamma)
    )
    return float(np.sqrt(max(mmd2, 0.0)))


def sliced_wasserstein(
    x: np.ndarray,
    y: np.ndarray,
    n_proj: int = 128,
    gen: np.random.Generator | None = None,
    directions: np.ndarray | None = None,
) -> float:
    """Sliced W2: sqrt of the mean over unit directions of the 1D
    squared Wasserstein distance between sorted projections.

    Sample counts must match; if not, the larger set is subsampled
    without replacement using gen. Directions are drawn from gen unless
    given explicitly (they are normalized either way).
    """
    if n_proj < 1:
        raise ValueError(f"need n_proj >= 1, got {n_proj}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[1] != y.shape[1]:
        raise ValueError("sample dimensions differ")
    if x.shape[0] != y.shape[0]:
        if gen is None:
            raise ValueError("unequal sample counts and no generator to subsample with")
        if x.shape[0] > y.shape[0]:
            x = x[gen.choice(x.shape[0], size=y.shape[0], replace=False)]
        else:
            y = y[gen.choice(y.shape[0], size=x.shape[0], replace=False)]
    dim = x.shape[1]
    if directions is None:
        if gen is None:
            raise ValueError("need either directions or a generator")
        directions = np.empty((n_proj, dim))
        filled = 0
        while filled < n_proj:
            cand = gen.standard_normal((n_proj - filled, dim))
            norms = np.linalg.norm(cand, axis=1)
            keep = cand[norms > 0.0]
            directions[filled : filled + keep.shape[0]] = keep / norms[norms > 0.0][:, None]
            filled += keep.shape[0]
    else:
        directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
        norms = np.linalg.norm(directions, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValueError("zero-norm projection direction")
        directions = directions / norms
    proj_x = np.sort(x @ directions.T, axis=0)
    proj_y = np.sort(y @ directions.T, axis=0)
    w2_sq = np.mean((proj_x - proj_y) ** 2, axis=0)
    return float(np.sqrt(np.mean(w2_sq)))


def moment_errors(
    states: np.ndarray, weights: np.ndarray, oracle: TiltedGmm
) -> tuple[float, float]:
    """(|weighted mean - oracle mean|_2, |weighted cov - oracle cov|_F)."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    mean = weights @ states
    centered = states - mean
    cov = (centered.T * weights) @ centered
    oracle_mean, oracle_cov = tilted_moments(oracle)
    return (
        float(np.linalg.norm(mean - oracle_mean)),
        float(np.linalg.norm(cov - oracle_cov, ord="fro")),
    )
