import math

import numpy as np
import pytest
from scipy.integrate import quad

from pathsmc.schedule import NoiseSchedule


def test_alpha_sigma_at_zero():
    sched = NoiseSchedule(0.1, 20.0, 1.0)
    alpha, sigma2 = sched.alpha_sigma2(0.0)
    assert alpha == 1.0
    assert sigma2 == 0.0


def test_constant_rate_closed_form():
    sched = NoiseSchedule(2.0, 2.0, 1.0)
    alpha, sigma2 = sched.alpha_sigma2(1.0)
    assert alpha == pytest.approx(math.exp(-1.0), rel=1e-14)
    assert sigma2 == pytest.approx(1.0 - math.exp(-2.0), rel=1e-14)


def test_linear_rate_against_quadrature():
    sched = NoiseSchedule(0.1, 20.0, 1.0)
    for u in (0.15, 0.5, 0.83, 1.0):
        integral, _ = quad(sched.beta, 0.0, u)
        alpha, sigma2 = sched.alpha_sigma2(u)
        assert alpha == pytest.approx(math.exp(-0.5 * integral), rel=1e-10)
        assert sigma2 == pytest.approx(1.0 - alpha * alpha, rel=1e-12)
    # Spot values for the default schedule at the end of the horizon,
    # frozen from the quadrature oracle: exp(-5.025) and its complement.
    alpha, sigma2 = sched.alpha_sigma2(1.0)
    assert alpha == pytest.approx(0.0065715865, abs=5e-9)
    assert sigma2 == pytest.approx(0.9999568, abs=5e-7)


def test_alpha_strictly_decreasing_sigma2_in_range():
    sched = NoiseSchedule(0.05, 12.0, 2.0)
    grid = np.linspace(0.0, 2.0, 200)
    alphas = np.array([sched.alpha_sigma2(u)[0] for u in grid])
    sigmas = np.array([sched.alpha_sigma2(u)[1] for u in grid])
    assert np.all(np.diff(alphas) < 0.0)
    assert alphas[0] == 1.0
    assert np.all((sigmas >= 0.0) & (sigmas < 1.0))


def test_beta_nondecreasing():
    sched = NoiseSchedule(0.1, 20.0, 1.0)
    grid = np.linspace(0.0, 1.0, 50)
    betas = np.array([sched.beta(u) for u in grid])
    assert np.all(np.diff(betas) >= 0.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"beta_min": 0.0, "beta_max": 1.0},
        {"beta_min": -0.1, "beta_max": 1.0},
        {"beta_min": 2.0, "beta_max": 1.0},
        {"beta_min": 0.1, "beta_max": 1.0, "horizon": 0.0},
    ],
)
def test_invalid_schedules_rejected(kwargs):
    with pytest.raises(ValueError):
        NoiseSchedule(**kwargs)


def test_domain_error_outside_horizon():
    sched = NoiseSchedule()
    with pytest.raises(ValueError):
        sched.alpha_sigma2(-0.01)
    with pytest.raises(ValueError):
        sched.alpha_sigma2(1.01)
