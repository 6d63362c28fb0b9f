"""Experiment configuration: strict parsing, round-trippable YAML.

A run is fully described by one mapping; unknown keys anywhere are a
hard error naming the offending path, so typos never silently fall
back to defaults. All randomness derives from exactly two seeds here:
``target.seed`` fixes the mixture geometry, ``seed`` drives the run
(the metric reference draw uses the run seed plus a fixed offset).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .diffusion import DiffusionSpec
from .engine import SCHEMES, ResamplePolicy
from .gmm import GmmTarget
from .reward import GuidanceChoice, QuadraticReward, ScheduledReward
from .schedule import NoiseSchedule

METRIC_SEED_OFFSET = 10_007


class ConfigError(ValueError):
    """Invalid configuration; message carries the key path."""


def _require_keys(data: dict, known: dict[str, type | tuple], where: str) -> None:
    for key in data:
        if key not in known:
            raise ConfigError(f"{where}.{key}: unknown key (expected one of {sorted(known)})")
    for key, expected in known.items():
        if key in data and expected is not None and not isinstance(data[key], expected):
            name = expected.__name__ if isinstance(expected, type) else "/".join(
                t.__name__ for t in expected
            )
            raise ConfigError(f"{where}.{key}: expected {name}, got {type(data[key]).__name__}")


@dataclass(frozen=True)
class RunConfig:
    method: str = "urge"
    guidance: dict = field(default_factory=lambda: {"variant": "reward"})
    target: dict = field(default_factory=lambda: {"seed": 0})
    reward: dict = field(default_factory=lambda: {"mu_r": 0.0, "prec_diag": 0.01, "interp": "constant"})
    schedule: dict = field(default_factory=lambda: {"beta_min": 0.1, "beta_max": 20.0, "horizon": 1.0})
    n_particles: int = 8192
    steps: int = 500
    resample: dict = field(default_factory=lambda: {"mode": "ess_threshold", "threshold": 0.8})
    seed: int = 0
    init: str = "exact"
    metrics: dict = field(default_factory=lambda: {"bandwidth": "median", "n_projections": 128, "n_reference": 8192})

    def __post_init__(self) -> None:
        if self.method not in SCHEMES:
            raise ConfigError(f"method: must be one of {SCHEMES}, got {self.method!r}")
        if self.n_particles < 1:
            raise ConfigError(f"n_particles: must be >= 1, got {self.n_particles}")
        if self.steps < 1:
            raise ConfigError(f"steps: must be >= 1, got {self.steps}")
        if self.init not in ("exact", "standard_normal"):
            raise ConfigError(f"init: must be 'exact' or 'standard_normal', got {self.init!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed: must be a nonnegative integer, got {self.seed!r}")
        # Validate the blocks eagerly so a bad config fails at parse time.
        self.build()

    # -- block builders ------------------------------------------------

    def build_target(self) -> GmmTarget:
        try:
            return GmmTarget.from_dict(self.target)
        except ValueError as exc:
            raise ConfigError(f"target: {exc}") from exc

    def build_schedule(self) -> NoiseSchedule:
        _require_keys(self.schedule, {"beta_min": (int, float), "beta_max": (int, float), "horizon": (int, float)}, "schedule")
        try:
            return NoiseSchedule(
                beta_min=float(self.schedule.get("beta_min", 0.1)),
                beta_max=float(self.schedule.get("beta_max", 20.0)),
                horizon=float(self.schedule.get("horizon", 1.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from exc

    def build_reward(self, dim: int, horizon: float) -> ScheduledReward:
        _require_keys(
            self.reward,
            {"mu_r": (int, float, list), "prec_diag": (int, float, list), "interp": str},
            "reward",
        )
        mu = self.reward.get("mu_r", 0.0)
        mu = np.full(dim, float(mu)) if np.isscalar(mu) else np.asarray(mu, dtype=np.float64)
        prec = self.reward.get("prec_diag", 0.01)
        prec = np.full(dim, float(prec)) if np.isscalar(prec) else np.asarray(prec, dtype=np.float64)
        if mu.shape != (dim,) or prec.shape != (dim,):
            raise ConfigError(f"reward: mu_r/prec_diag must broadcast to dimension {dim}")
        try:
            base = QuadraticReward(mu, np.diag(prec))
            return ScheduledReward(base, interp=self.reward.get("interp", "constant"), horizon=horizon)
        except ValueError as exc:
            raise ConfigError(f"reward: {exc}") from exc

    def build_guidance(self) -> GuidanceChoice:
        _require_keys(self.guidance, {"variant": str, "kappa": (int, float)}, "guidance")
        try:
            return GuidanceChoice(
                variant=self.guidance.get("variant", "reward"),
                kappa=float(self.guidance.get("kappa", 1.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"guidance: {exc}") from exc

    def build_resample_policy(self) -> ResamplePolicy:
        _require_keys(self.resample, {"mode": str, "threshold": (int, float)}, "resample")
        try:
            return ResamplePolicy(
                mode=self.resample.get("mode", "ess_threshold"),
                threshold=float(self.resample.get("threshold", 0.8)),
            )
        except ValueError as exc:
            raise ConfigError(f"resample: {exc}") from exc

    def metrics_settings(self) -> dict:
        _require_keys(
            self.metrics,
            {"bandwidth": (str, int, float), "n_projections": int, "n_reference": int},
            "metrics",
        )
        out = {
            "bandwidth": self.metrics.get("bandwidth", "median"),
            "n_projections": int(self.metrics.get("n_projections", 128)),
            "n_reference": int(self.metrics.get("n_reference", 8192)),
        }
        if out["n_projections"] < 1 or out["n_reference"] < 2:
            raise ConfigError("metrics: n_projections >= 1 and n_reference >= 2 required")
        return out

    def build(self) -> tuple[DiffusionSpec, ScheduledReward, GuidanceChoice, ResamplePolicy]:
        target = self.build_target()
        schedule = self.build_schedule()
        spec = DiffusionSpec(schedule, target)
        reward = self.build_reward(target.dim, schedule.horizon)
        self.metrics_settings()
        return spec, reward, self.build_guidance(), self.build_resample_policy()

    # -- (de)serialization ---------------------------------------------

    _TOP_KEYS = {
        "method": str,
        "guidance": dict,
        "target": dict,
        "reward": dict,
        "schedule": dict,
        "n_particles": int,
        "steps": int,
        "resample": dict,
        "seed": int,
        "init": str,
        "metrics": dict,
    }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"config root: expected a mapping, got {type(data).__name__}")
        _require_keys(data, cls._TOP_KEYS, "config")
        kwargs: dict[str, Any] = {}
        for f in cls.__dataclass_fields__.values():
            if f.name in data:
                kwargs[f.name] = copy.deepcopy(data[f.name])
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "guidance": copy.deepcopy(self.guidance),
            "target": copy.deepcopy(self.target),
            "reward": copy.deepcopy(self.reward),
            "schedule": copy.deepcopy(self.schedule),
            "n_particles": self.n_particles,
            "steps": self.steps,
            "resample": copy.deepcopy(self.resample),
            "seed": self.seed,
            "init": self.init,
            "metrics": copy.deepcopy(self.metrics),
        }

    def replace(self, **changes) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        return RunConfig.from_dict(data)

    def with_override(self, dotted_key: str, value) -> "RunConfig":
        """Return a copy with one possibly nested key replaced
        (e.g. 'reward.prec_diag')."""
        data = self.to_dict()
        parts = dotted_key.split(".")
        node = data
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"{dotted_key}: no such config block")
            node = node[part]
        node[parts[-1]] = value
        return RunConfig.from_dict(data)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    return RunConfig.from_dict(data)


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def parse_override(text: str) -> tuple[str, Any]:
    """Parse a --set KEY=VALUE item; VALUE goes through YAML scalars."""
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)
