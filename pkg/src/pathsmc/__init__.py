"""Particle samplers for reward-tilted diffusion posteriors.

Simulates guided reverse diffusions with Euler-Maruyama, corrects the
guidance bias with sequential Monte Carlo over trajectory weights, and
benchmarks four weighting schemes against an analytic Gaussian-mixture
ground truth.
"""

from .schedule import NoiseSchedule
from .gmm import GmmTarget
from .diffusion import DiffusionSpec
from .reward import GuidanceChoice, QuadraticReward, ScheduledReward, TiltedGmm, tilt_posterior, tilted_moments
from .engine import Ensemble, ResamplePolicy, StepIncrement, ess, multinomial_resample, run_sampler

__version__ = "0.1.0"

__all__ = [
    "NoiseSchedule",
    "GmmTarget",
    "DiffusionSpec",
    "QuadraticReward",
    "ScheduledReward",
    "GuidanceChoice",
    "TiltedGmm",
    "tilt_posterior",
    "tilted_moments",
    "Ensemble",
    "StepIncrement",
    "ResamplePolicy",
    "ess",
    "multinomial_resample",
    "run_sampler",
]
