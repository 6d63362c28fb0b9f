"""Generative diffusion with analytic Gaussian-mixture marginals.

The base (unguided) generative process runs in time t from 0 to the
horizon T and is the time reversal of a variance-preserving noising of
the mixture target, so forward time is u = T - t. Because noising an
isotropic mixture stays an isotropic mixture, the marginal density, its
score, and exact marginal sampling are all closed-form:

    p(x, t) = sum_k w_k N(x; alpha(u) mu_k, (alpha(u)^2 s^2 + sigma2(u)) I)

with (alpha, sigma2) from the schedule. The reverse-time drift is

    v(x, t) = 1/2 beta(u) x + beta(u) * grad log p(x, t),   u = T - t,

and the diffusion coefficient is V(t) = sqrt(beta(T - t)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .gmm import GmmTarget
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class DiffusionSpec:
    schedule: NoiseSchedule
    target: GmmTarget

    @property
    def horizon(self) -> float:
        return self.schedule.horizon

    @property
    def dim(self) -> int:
        return self.target.dim

    def diffusion_coeff(self, t: float) -> float:
        """V(t) = sqrt(beta(T - t)); positive for every t in [0, T]."""
        self._check_time(t)
        return float(np.sqrt(self.schedule.beta(self.horizon - t)))

    def component_scale(self, t: float) -> tuple[float, float]:
        """(alpha, total_var) of the mixture components at generative t.

        total_var = alpha^2 s^2 + sigma2 is the shared isotropic variance
        of each diffused component; it is bounded below by
        alpha(T)^2 * s^2 > 0, so no clamping is needed.
        """
        self._check_time(t)
        alpha, sigma2 = self.schedule.alpha_sigma2(self.horizon - t)
        return alpha, alpha * alpha * self.target.component_var + sigma2

    def marginal_logpdf(self, x: np.ndarray, t: float) -> np.ndarray:
        """log p(x, t) for rows of x; accepts a single vector too."""
        x2d, squeeze = _as_batch(x, self.dim)
        alpha, total_var = self.component_scale(t)
        logpdf, _ = backends.mixture_logpdf_score(
            x2d, alpha * self.target.means, self.target.log_weights, total_var
        )
        return logpdf[0] if squeeze else logpdf

    def marginal_score(self, x: np.ndarray, t: float) -> np.ndarray:
        """grad_x log p(x, t), computed in log space with a max shift."""
        x2d, squeeze = _as_batch(x, self.dim)
        if not np.all(np.isfinite(x2d)):
            raise ValueError("marginal_score: non-finite input state")
        alpha, total_var = self.component_scale(t)
        _, score = backends.mixture_logpdf_score(
            x2d, alpha * self.target.means, self.target.log_weights, total_var
        )
        return score[0] if squeeze else score

    def drift(self, x: np.ndarray, t: float) -> np.ndarray:
        """Reverse-time drift v(x, t) of the base generative process."""
        beta = self.schedule.beta(self.horizon - t)
        return 0.5 * beta * np.asarray(x, dtype=np.float64) + beta * self.marginal_score(x, t)

    def sample_marginal(self, t: float, n: int, gen: np.random.Generator) -> np.ndarray:
        """n exact i.i.d. draws from p(., t)."""
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        alpha, total_var = self.component_scale(t)
        comp = gen.choice(self.target.n_components, size=n, p=self.target.weights)
        return alpha * self.target.means[comp] + np.sqrt(total_var) * gen.standard_normal(
            (n, self.dim)
        )

    def _check_time(self, t: float) -> None:
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"generative time {t} outside [0, {self.horizon}]")


def _as_batch(x: np.ndarray, dim: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"state has dimension {arr.shape[0]}, expected {dim}")
        return arr[None, :], True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"states must be (n, {dim}), got shape {arr.shape}")
    return arr, False
