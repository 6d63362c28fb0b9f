"""Variance-preserving noise schedule.

Forward time ``u`` runs from 0 (clean data) to ``horizon`` (fully
noised). The rate ``beta(u)`` is linear in ``u``, which gives the
closed forms

    alpha(u)  = exp(-1/2 * int_0^u beta)
    sigma2(u) = 1 - alpha(u)^2

so the noised marginal of an isotropic Gaussian N(mu, s^2 I) is
N(alpha*mu, (alpha^2 s^2 + sigma2) I). Setting beta_min == beta_max
recovers a constant-rate schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class NoiseSchedule:
    beta_min: float = 0.1
    beta_max: float = 20.0
    horizon: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 < self.beta_min <= self.beta_max:
            raise ValueError(
                f"need 0 < beta_min <= beta_max, got ({self.beta_min}, {self.beta_max})"
            )
        if self.horizon <= 0.0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")

    def beta(self, u: float) -> float:
        """Noise rate at forward time u."""
        return self.beta_min + (self.beta_max - self.beta_min) * u / self.horizon

    def integrated_beta(self, u: float) -> float:
        """int_0^u beta, in closed form."""
        return self.beta_min * u + (self.beta_max - self.beta_min) * u * u / (2.0 * self.horizon)

    def alpha_sigma2(self, u: float) -> tuple[float, float]:
        """Signal coefficient alpha(u) and noise variance sigma2(u).

        Raises ValueError if u lies outside [0, horizon].
        """
        if not 0.0 <= u <= self.horizon:
            raise ValueError(f"forward time {u} outside [0, {self.horizon}]")
        alpha = math.exp(-0.5 * self.integrated_beta(u))
        return alpha, 1.0 - alpha * alpha
