"""Isotropic Gaussian mixture targets.

The benchmark data distribution is a K-component mixture with shared
isotropic component variance. Component means are either given
explicitly or regenerated from a seed, and seeded regeneration is
byte-stable across runs (see :mod:`pathsmc.rng`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from . import rng

_WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class GmmTarget:
    """Mixture sum_i weights[i] * N(means[i], component_var * I).

    Parameters
    ----------
    means : ndarray, shape (K, d)
        Component means.
    component_var : float
        Shared isotropic component variance s^2, > 0.
    weights : ndarray, shape (K,)
        Component probabilities, all > 0, summing to 1.
    """

    means: np.ndarray
    component_var: float
    weights: np.ndarray
    origin: dict | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        means = np.asarray(self.means, dtype=np.float64)
        if means.ndim != 2:
            raise ValueError(f"means must be (K, d), got shape {means.shape}")
        if not np.all(np.isfinite(means)):
            raise ValueError("means contain non-finite entries")
        if self.component_var <= 0.0:
            raise ValueError(f"component_var must be positive, got {self.component_var}")
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (means.shape[0],):
            raise ValueError("weights shape does not match number of components")
        if np.any(weights <= 0.0):
            raise ValueError("all mixture weights must be positive")
        if abs(weights.sum() - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights sum to {weights.sum()}, not 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "component_var", float(self.component_var))

    @classmethod
    def from_seed(
        cls,
        seed: int,
        n_components: int = 40,
        dim: int = 30,
        component_var: float = 40.0,
        mean_range: float = 40.0,
    ) -> "GmmTarget":
        """Build a uniform-weight target with means i.i.d. uniform on
        [-mean_range, mean_range]^dim from the dedicated target stream."""
        gen = rng.stream(seed, rng.TARGET)
        means = gen.uniform(-mean_range, mean_range, size=(n_components, dim))
        weights = np.full(n_components, 1.0 / n_components)
        origin = {
            "seed": int(seed),
            "n_components": int(n_components),
            "dim": int(dim),
            "component_var": float(component_var),
            "mean_range": float(mean_range),
        }
        return cls(means, component_var, weights, origin=origin)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def mean(self) -> np.ndarray:
        """Closed-form mixture mean."""
        return self.weights @ self.means

    def cov(self) -> np.ndarray:
        """Closed-form mixture covariance."""
        m = self.mean()
        centered = self.means - m
        return self.component_var * np.eye(self.dim) + (
            centered.T * self.weights
        ) @ centered

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        """Draw n i.i.d. samples (component choice, then Gaussian)."""
        comp = gen.choice(self.n_components, size=n, p=self.weights)
        return self.means[comp] + np.sqrt(self.component_var) * gen.standard_normal(
            (n, self.dim)
        )

    def to_dict(self) -> dict:
        """Serializable form: the seeded recipe if one exists, otherwise
        explicit means."""
        if self.origin is not None:
            return dict(self.origin)
        return {
            "means": self.means.tolist(),
            "component_var": float(self.component_var),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GmmTarget":
        known_seeded = {"seed", "n_components", "dim", "component_var", "mean_range"}
        known_explicit = {"means", "component_var", "weights"}
        keys = set(data)
        if "seed" in keys:
            extra = keys - known_seeded
            if extra:
                raise ValueError(f"unknown target keys: {sorted(extra)}")
            return cls.from_seed(
                data["seed"],
                n_components=data.get("n_components", 40),
                dim=data.get("dim", 30),
                component_var=data.get("component_var", 40.0),
                mean_range=data.get("mean_range", 40.0),
            )
        extra = keys - known_explicit
        if extra:
            raise ValueError(f"unknown target keys: {sorted(extra)}")
        if "means" not in keys:
            raise ValueError("target needs either a seed or explicit means")
        means = np.asarray(data["means"], dtype=np.float64)
        if means.ndim == 1:
            means = means[:, None]
        weights = data.get("weights")
        if weights is None:
            weights = np.full(means.shape[0], 1.0 / means.shape[0])
        return cls(means, float(data.get("component_var", 1.0)), np.asarray(weights, dtype=np.float64))


def save_target(target: GmmTarget, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(target.to_dict(), fh, sort_keys=True)


def load_target(path: str) -> GmmTarget:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping")
    return GmmTarget.from_dict(data)
