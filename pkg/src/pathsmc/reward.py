"""Rewards, guidance potentials, and the analytic tilted posterior.

A quadratic base reward

    r_base(x) = -1/2 (x - mu_r)^T P (x - mu_r),   P symmetric positive definite,

is interpolated in time by g(t) (constant 1, or t/T), giving
r(x, t) = g(t) r_base(x) together with every derivative the weighting
schemes need: gradient, Laplacian, and time derivative. Tilting an
isotropic Gaussian mixture by exp(r_base) stays a Gaussian mixture with
a shared full covariance, which provides the exact ground truth for the
benchmark.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve

from .gmm import GmmTarget

_SYM_TOL = 1e-10

CONSTANT = "constant"
LINEAR = "linear"


class RewardTerms(NamedTuple):
    """Value and derivatives of r(x, t) at a batch of states."""

    value: np.ndarray       # (n,)
    grad: np.ndarray        # (n, d)
    laplacian: float        # shared by all states (quadratic reward)
    time_derivative: np.ndarray  # (n,)


@dataclass(frozen=True)
class QuadraticReward:
    """r_base(x) = -1/2 (x - mu)^T prec (x - mu), always <= 0."""

    mu: np.ndarray
    prec: np.ndarray

    def __post_init__(self) -> None:
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        prec = np.asarray(self.prec, dtype=np.float64)
        if prec.ndim == 0:
            prec = prec * np.eye(mu.shape[0])
        elif prec.ndim == 1:
            prec = np.diag(prec)
        if prec.shape != (mu.shape[0], mu.shape[0]):
            raise ValueError(f"prec shape {prec.shape} does not match mu ({mu.shape[0]})")
        asym = np.abs(prec - prec.T).max()
        if asym > _SYM_TOL:
            raise ValueError(f"prec is not symmetric (max asymmetry {asym:.3g})")
        prec = 0.5 * (prec + prec.T)
        try:
            cholesky(prec, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ValueError("prec is not positive definite") from exc
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "prec", prec)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def value(self, x: np.ndarray) -> np.ndarray:
        diff = np.atleast_2d(x) - self.mu
        return -0.5 * np.einsum("ij,ij->i", diff @ self.prec, diff)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return -(np.atleast_2d(x) - self.mu) @ self.prec

    @property
    def laplacian(self) -> float:
        return -float(np.trace(self.prec))


@dataclass(frozen=True)
class ScheduledReward:
    """r(x, t) = g(t) * r_base(x) on [0, horizon].

    interp 'constant' sets g == 1 (time-independent reward); 'linear'
    sets g(t) = t / horizon, so the tilt switches on smoothly with
    g(0) = 0 and g(horizon) = 1.
    """

    base: QuadraticReward
    interp: str = CONSTANT
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if self.interp not in (CONSTANT, LINEAR):
            raise ValueError(f"interp must be 'constant' or 'linear', got {self.interp!r}")
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    def g(self, t: float) -> float:
        return 1.0 if self.interp == CONSTANT else t / self.horizon

    def g_dot(self, t: float) -> float:
        return 0.0 if self.interp == CONSTANT else 1.0 / self.horizon

    def value(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.g(t) * self.base.value(x)

    def grad(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.g(t) * self.base.grad(x)

    def laplacian(self, t: float) -> float:
        return self.g(t) * self.base.laplacian

    def time_derivative(self, x: np.ndarray, t: float) -> np.ndarray:
        return self.g_dot(t) * self.base.value(x)

    def eval(self, x: np.ndarray, t: float) -> RewardTerms:
        """All four mutually consistent quantities in one pass."""
        x2d = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if not np.all(np.isfinite(x2d)):
            raise ValueError("reward evaluation: non-finite input state")
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        base_value = self.base.value(x2d)
        g = self.g(t)
        return RewardTerms(
            value=g * base_value,
            grad=g * self.base.grad(x2d),
            laplacian=g * self.base.laplacian,
            time_derivative=self.g_dot(t) * base_value,
        )


NONE = "none"
REWARD = "reward"
SCALED = "scaled"


@dataclass(frozen=True)
class GuidanceChoice:
    """Guidance potential G relative to the scheduled reward.

    'none' is G == 0, 'reward' is G == r, and 'scaled' is G == kappa * r,
    so gradients and Laplacians follow by the same factor.
    """

    variant: str = REWARD
    kappa: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in (NONE, REWARD, SCALED):
            raise ValueError(f"unknown guidance variant {self.variant!r}")

    @property
    def factor(self) -> float:
        if self.variant == NONE:
            return 0.0
        if self.variant == REWARD:
            return 1.0
        return self.kappa

    @property
    def is_zero(self) -> bool:
        return self.variant == NONE

    @property
    def matches_reward(self) -> bool:
        """True when G == r exactly (score-free weighting applies)."""
        return self.variant == REWARD or (self.variant == SCALED and self.kappa == 1.0)

    def grad(self, reward: ScheduledReward, x: np.ndarray, t: float) -> np.ndarray:
        return self.factor * reward.grad(x, t)

    def laplacian(self, reward: ScheduledReward, t: float) -> float:
        return self.factor * reward.laplacian(t)


@dataclass(frozen=True)
class TiltedGmm:
    """Mixture sum_i weights[i] * N(means[i], cov) with shared full cov."""

    means: np.ndarray   # (K, d)
    cov: np.ndarray     # (d, d)
    weights: np.ndarray  # (K,)

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if means.ndim != 2 or cov.shape != (means.shape[1], means.shape[1]):
            raise ValueError("inconsistent tilted-mixture shapes")
        if abs(weights.sum() - 1.0) > 1e-10 or np.any(weights < 0.0):
            raise ValueError("tilted weights must be a probability vector")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        """n >= 0 i.i.d. draws."""
        if n < 0:
            raise ValueError(f"need n >= 0, got {n}")
        chol = cholesky(self.cov, lower=True)
        comp = gen.choice(self.means.shape[0], size=n, p=self.weights)
        return self.means[comp] + gen.standard_normal((n, self.dim)) @ chol.T


def tilt_posterior(target: GmmTarget, reward: QuadraticReward) -> TiltedGmm:
    """Closed-form posterior mixture proportional to p_data(x) exp(r_base(x)).

    With components N(mu_i, s^2 I) and precision P = prec_r:

        cov_tilde   = (P + I/s^2)^{-1}
        mean_tilde_i = cov_tilde (mu_i / s^2 + P mu_r)
        w_tilde_i   propto w_i * exp(-1/2 (mu_i - mu_r)^T (Sigma_r + s^2 I)^{-1} (mu_i - mu_r))

    computed without inverting P, so the limit P -> 0 degrades gracefully
    to the untilted mixture.
    """
    if reward.dim != target.dim:
        raise ValueError(f"reward dimension {reward.dim} != target dimension {target.dim}")
    s2 = target.component_var
    eye = np.eye(target.dim)
    # B = (I + s^2 P)^{-1}; then cov_tilde = s^2 B and
    # (Sigma_r + s^2 I)^{-1} = P B (B commutes with P).
    b = solve(eye + s2 * reward.prec, eye, assume_a="pos")
    cov_tilde = s2 * b
    cov_tilde = 0.5 * (cov_tilde + cov_tilde.T)
    means_tilde = target.means @ b.T + (s2 * b @ reward.prec) @ reward.mu
    pb = 0.5 * (reward.prec @ b + (reward.prec @ b).T)
    diff = target.means - reward.mu
    log_w = target.log_weights - 0.5 * np.einsum("ij,ij->i", diff @ pb, diff)
    log_w -= log_w.max()
    w = np.exp(log_w)
    return TiltedGmm(means_tilde, cov_tilde, w / w.sum())


def tilted_moments(tg: TiltedGmm) -> tuple[np.ndarray, np.ndarray]:
    """Exact mean and covariance of the tilted mixture."""
    mean = tg.weights @ tg.means
    centered = tg.means - mean
    cov = tg.cov + (centered.T * tg.weights) @ centered
    return mean, 0.5 * (cov + cov.T)


def tilted_logpdf(tg: TiltedGmm, x: np.ndarray) -> np.ndarray:
    """log-density of the tilted mixture at rows of x (test utility)."""
    x2d = np.atleast_2d(np.asarray(x, dtype=np.float64))
    factor = cho_factor(tg.cov, lower=True)
    _, logdet = np.linalg.slogdet(tg.cov)
    diff = x2d[:, None, :] - tg.means[None, :, :]
    solved = np.stack(
        [cho_solve(factor, diff[:, k, :].T).T for k in range(tg.means.shape[0])], axis=1
    )
    quad = np.einsum("nkd,nkd->nk", diff, solved)
    loga = np.log(tg.weights)[None, :] - 0.5 * quad
    shift = loga.max(axis=1)
    return (
        shift
        + np.log(np.exp(loga - shift[:, None]).sum(axis=1))
        - 0.5 * (tg.dim * np.log(2.0 * np.pi) + logdet)
    )
