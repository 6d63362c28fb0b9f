"""Particle propagation, weighting schemes, resampling, and the sampler loop.

Particles follow the guided SDE

    dX = (v(X, t) + V(t)^2 grad G(X, t)) dt + V(t) dW

under explicit Euler-Maruyama, with all drift and gradient terms
evaluated at the interval start. Four per-interval log-weight updates
are available:

    urge          endpoint reward change minus the Girsanov correction,
                  reusing the step's own noise draws; needs no reward
                  derivatives and no score
    fk_steering   endpoint reward change only
    afdps         generator potential rate times dt; needs reward
                  gradient/Laplacian/time-derivative and, unless G == r,
                  the marginal score
    pure_guidance always zero

Weights live in log space, are reset to zero at every resample, and are
normalized with a max shift wherever they are exponentiated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .diffusion import DiffusionSpec
from .reward import GuidanceChoice, ScheduledReward

SCHEMES = ("urge", "afdps", "fk_steering", "pure_guidance")

EVERY_STEP = "every_step"
ESS_THRESHOLD = "ess_threshold"
NEVER = "never"

# Spread of log-weights beyond which normalization is flagged as fragile.
_LOG_SPREAD_WARN = 700.0
_COLLAPSE_ESS = 1.0 + 1e-9
_COLLAPSE_STREAK = 10


class WeightCollapseError(RuntimeError):
    """All particle mass concentrated on (numerically) one particle."""


@dataclass
class Ensemble:
    """N particle states with log-weights accumulated since the last resample.

    Attributes
    ----------
    states : ndarray, shape (n, d)
    log_w : ndarray, shape (n,)
        Finite log-weights; all zero immediately after a resample.
    step_index : int
        Number of propagation steps taken so far.
    resample_count : int
    seed : int
        Root seed of the run's random streams.
    """

    states: np.ndarray
    log_w: np.ndarray
    step_index: int = 0
    resample_count: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.float64)
        self.log_w = np.asarray(self.log_w, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[0] < 1:
            raise ValueError(f"states must be (n >= 1, d), got {self.states.shape}")
        if self.log_w.shape != (self.states.shape[0],):
            raise ValueError("log_w length does not match particle count")
        if not np.all(np.isfinite(self.log_w)):
            raise ValueError("log-weights must be finite")

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def normalized_weights(self) -> np.ndarray:
        w = np.exp(self.log_w - self.log_w.max())
        return w / w.sum()

    def ess(self) -> float:
        return ess(self.log_w)

    def weighted_mean(self) -> np.ndarray:
        return self.normalized_weights() @ self.states

    def weighted_cov(self) -> np.ndarray:
        w = self.normalized_weights()
        centered = self.states - w @ self.states
        return (centered.T * w) @ centered


@dataclass(frozen=True)
class StepIncrement:
    """Record of one propagation step: the exact noise draws consumed,
    the step size, and the interval-start time. The path-weight update
    must reuse these draws, never fresh ones."""

    xi: np.ndarray
    dt: float
    t: float


@dataclass(frozen=True)
class ResamplePolicy:
    """When to resample: every step, on ESS < threshold * n, or never."""

    mode: str = ESS_THRESHOLD
    threshold: float = 0.8

    def __post_init__(self) -> None:
        if self.mode not in (EVERY_STEP, ESS_THRESHOLD, NEVER):
            raise ValueError(f"unknown resample mode {self.mode!r}")
        if self.mode == ESS_THRESHOLD and not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"ESS threshold must be in (0, 1], got {self.threshold}")

    def should_resample(self, ess_value: float, n: int) -> bool:
        if self.mode == EVERY_STEP:
            return True
        if self.mode == NEVER:
            return False
        return ess_value < self.threshold * n


def em_step(
    ens: Ensemble,
    spec: DiffusionSpec,
    guidance: GuidanceChoice,
    reward: ScheduledReward,
    t: float,
    dt: float,
    gen: np.random.Generator,
) -> tuple[Ensemble, StepIncrement]:
    """One Euler-Maruyama step of the guided SDE from time t to t + dt.

    Returns the propagated ensemble (weights untouched) and the
    StepIncrement holding the exact standard-normal draws used.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    xi = gen.standard_normal((ens.n, ens.dim))
    big_v = spec.diffusion_coeff(t)
    drift = spec.drift(ens.states, t)
    if not guidance.is_zero:
        drift = drift + (big_v * big_v) * guidance.grad(reward, ens.states, t)
    new_states = ens.states + drift * dt + (big_v * math.sqrt(dt)) * xi
    finite = np.isfinite(new_states).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise FloatingPointError(
            f"non-finite state after step at t={t}: particle {bad} (drift blow-up?)"
        )
    out = Ensemble(
        new_states,
        ens.log_w.copy(),
        step_index=ens.step_index + 1,
        resample_count=ens.resample_count,
        seed=ens.seed,
    )
    return out, StepIncrement(xi=xi, dt=dt, t=t)


def reward_difference(
    states_before: np.ndarray,
    states_after: np.ndarray,
    t: float,
    dt: float,
    reward: ScheduledReward,
) -> np.ndarray:
    """r(x_after, t + dt) - r(x_before, t), per particle."""
    return reward.value(states_after, t + dt) - reward.value(states_before, t)


def fk_steering_log_increment(
    states_before: np.ndarray,
    states_after: np.ndarray,
    t: float,
    dt: float,
    reward: ScheduledReward,
) -> np.ndarray:
    """Endpoint reward change only."""
    return reward_difference(states_before, states_after, t, dt, reward)


def urge_log_increment(
    ens_before: Ensemble | np.ndarray,
    inc: StepIncrement,
    ens_after: Ensemble | np.ndarray,
    guidance: GuidanceChoice,
    reward: ScheduledReward,
    spec: DiffusionSpec,
) -> np.ndarray:
    """Per-interval path log-weight

        r(x', t+dt) - r(x, t) - V(t) grad G(x, t).(sqrt(dt) xi)
                             - 1/2 V(t)^2 |grad G(x, t)|^2 dt

    evaluated with the propagation's own noise draws. Only reward
    values are used; no derivatives of r and no score.
    """
    before = ens_before.states if isinstance(ens_before, Ensemble) else np.asarray(ens_before)
    after = ens_after.states if isinstance(ens_after, Ensemble) else np.asarray(ens_after)
    if before.shape != after.shape or before.shape != inc.xi.shape:
        raise ValueError("mismatched state/noise shapes in path-weight update")
    delta = reward_difference(before, after, inc.t, inc.dt, reward)
    if guidance.is_zero:
        return delta
    grad_g = guidance.grad(reward, before, inc.t)
    big_v = spec.diffusion_coeff(inc.t)
    ito = np.einsum("ij,ij->i", grad_g, inc.xi)
    sq = np.einsum("ij,ij->i", grad_g, grad_g)
    return delta - big_v * math.sqrt(inc.dt) * ito - 0.5 * big_v * big_v * sq * inc.dt


def afdps_rate(
    states: np.ndarray,
    t: float,
    guidance: GuidanceChoice,
    reward: ScheduledReward,
    spec: DiffusionSpec,
    score: np.ndarray | None = None,
) -> np.ndarray:
    """Generator potential rate at (states, t).

    When G == r the score term vanishes identically and the reduced
    branch

        dr/dt + grad r . v + 1/2 V^2 (lap r + |grad r|^2)

    is used, skipping the score evaluation entirely. Otherwise the
    general form

        dr/dt - 1/2 V^2 (lap r + |grad r|^2) + grad r . (v + V^2 grad G)
              + V^2 score . grad(G - r) + V^2 lap G

    requires the marginal score (passed in, or computed from spec).
    """
    terms = reward.eval(states, t)
    big_v2 = spec.diffusion_coeff(t) ** 2
    v = spec.drift(states, t)
    grad_dot_v = np.einsum("ij,ij->i", terms.grad, v)
    grad_sq = np.einsum("ij,ij->i", terms.grad, terms.grad)
    if guidance.matches_reward and score is None:
        return (
            terms.time_derivative
            + grad_dot_v
            + 0.5 * big_v2 * terms.laplacian
            + 0.5 * big_v2 * grad_sq
        )
    grad_g = guidance.grad(reward, states, t)
    if score is None:
        score = spec.marginal_score(states, t)
    cross = np.einsum("ij,ij->i", score, grad_g - terms.grad)
    return (
        terms.time_derivative
        - 0.5 * big_v2 * (terms.laplacian + grad_sq)
        + grad_dot_v
        + big_v2 * np.einsum("ij,ij->i", terms.grad, grad_g)
        + big_v2 * cross
        + big_v2 * guidance.laplacian(reward, t)
    )


def afdps_log_increment(
    ens_before: Ensemble | np.ndarray,
    guidance: GuidanceChoice,
    reward: ScheduledReward,
    spec: DiffusionSpec,
    t: float,
    dt: float,
) -> np.ndarray:
    """Potential rate at the interval start, times dt."""
    states = ens_before.states if isinstance(ens_before, Ensemble) else np.asarray(ens_before)
    return afdps_rate(states, t, guidance, reward, spec) * dt


def ess(log_w: np.ndarray) -> float:
    """Effective sample size (sum w)^2 / sum w^2, in [1, n]."""
    log_w = np.asarray(log_w, dtype=np.float64)
    shift = log_w.max()
    if not np.isfinite(shift):
        raise WeightCollapseError("all log-weights are -inf")
    w = np.exp(log_w - shift)
    s = w.sum()
    return float(s * s / (w @ w))


def multinomial_resample(ens: Ensemble, gen: np.random.Generator) -> Ensemble:
    """Draw N ancestors i.i.d. from Categorical(normalized weights).

    Uses inverse-CDF selection: ancestor(v) is the smallest k with
    cumsum(w)[k] >= v. States are copied, log-weights reset to zero,
    and the resample counter advances.
    """
    log_w = ens.log_w
    shift = log_w.max()
    if not np.isfinite(shift):
        raise WeightCollapseError("cannot resample: all log-weights are -inf")
    w = np.exp(log_w - shift)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise WeightCollapseError("cannot resample: degenerate weights")
    cum = np.cumsum(w / total)
    cum[-1] = 1.0
    ancestors = np.searchsorted(cum, gen.random(ens.n), side="left")
    return Ensemble(
        ens.states[ancestors].copy(),
        np.zeros(ens.n),
        step_index=ens.step_index,
        resample_count=ens.resample_count + 1,
        seed=ens.seed,
    )


def _scheme_increment(scheme, before, inc, after, guidance, reward, spec):
    if scheme == "urge":
        return urge_log_increment(before, inc, after, guidance, reward, spec)
    if scheme == "fk_steering":
        return fk_steering_log_increment(before.states, after.states, inc.t, inc.dt, reward)
    if scheme == "afdps":
        return afdps_log_increment(before, guidance, reward, spec, inc.t, inc.dt)
    if scheme == "pure_guidance":
        return np.zeros(before.n)
    raise ValueError(f"unknown weighting scheme {scheme!r}")


@dataclass
class RunDiagnostics:
    """Per-step ESS and weight statistics for one sampler run."""

    steps: np.ndarray
    times: np.ndarray
    ess: np.ndarray
    min_logw: np.ndarray
    max_logw: np.ndarray
    resampled: np.ndarray
    warnings: list[str] = field(default_factory=list)

    @property
    def resample_total(self) -> int:
        return int(self.resampled.sum())

    def write_csv(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write("step,t,ess,min_logw,max_logw,resampled\n")
            for i in range(len(self.steps)):
                fh.write(
                    f"{int(self.steps[i])},{self.times[i]:.12g},{self.ess[i]:.12g},"
                    f"{self.min_logw[i]:.12g},{self.max_logw[i]:.12g},{int(self.resampled[i])}\n"
                )


def run_sampler(cfg) -> tuple[Ensemble, RunDiagnostics]:
    """Execute the full sampler described by a RunConfig.

    Initializes particles from the exact marginal at t = 0 (or a
    standard normal, per cfg.init), then for each interval propagates,
    applies the scheme's log-weight increment, and resamples per
    policy. The returned ensemble carries the weights accumulated since
    the last resample, so consumers must use weighted statistics.
    """
    spec, reward, guidance, policy = cfg.build()
    n, steps, seed = cfg.n_particles, cfg.steps, cfg.seed
    horizon = spec.horizon
    dt = horizon / steps

    init_gen = rng.stream(seed, rng.INIT)
    if cfg.init == "exact":
        states = spec.sample_marginal(0.0, n, init_gen)
    else:
        states = init_gen.standard_normal((n, spec.dim))
    ens = Ensemble(states, np.zeros(n), seed=seed)

    stat_steps = np.arange(steps)
    stat_t = np.empty(steps)
    stat_ess = np.empty(steps)
    stat_min = np.empty(steps)
    stat_max = np.empty(steps)
    stat_res = np.zeros(steps, dtype=np.int64)
    warnings: list[str] = []
    collapse_streak = 0

    for k in range(steps):
        t = k * dt
        ens_new, inc = em_step(ens, spec, guidance, reward, t, dt, rng.stream(seed, rng.PROPAGATE, k))
        dlw = _scheme_increment(cfg.method, ens, inc, ens_new, guidance, reward, spec)
        ens_new.log_w += dlw
        ens = ens_new

        spread = float(ens.log_w.max() - ens.log_w.min())
        if spread > _LOG_SPREAD_WARN:
            warnings.append(f"step {k}: log-weight spread {spread:.1f} exceeds {_LOG_SPREAD_WARN}")
        ess_value = ess(ens.log_w)
        collapse_streak = collapse_streak + 1 if ess_value < _COLLAPSE_ESS else 0
        if collapse_streak >= _COLLAPSE_STREAK:
            raise WeightCollapseError(
                f"ESS pinned at 1 for {_COLLAPSE_STREAK} consecutive steps (step {k})"
            )

        stat_t[k] = t + dt
        stat_ess[k] = ess_value
        stat_min[k] = float(ens.log_w.min())
        stat_max[k] = float(ens.log_w.max())
        if policy.should_resample(ess_value, n):
            ens = multinomial_resample(ens, rng.stream(seed, rng.RESAMPLE, k))
            stat_res[k] = 1

    diag = RunDiagnostics(stat_steps, stat_t, stat_ess, stat_min, stat_max, stat_res, warnings)
    return ens, diag
