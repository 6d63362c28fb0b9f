import math

import numpy as np
import pytest

from pathsmc import rng
from pathsmc.diffusion import DiffusionSpec
from pathsmc.gmm import GmmTarget
from pathsmc.schedule import NoiseSchedule


def _spec(means, s2, weights=None, beta=(0.1, 20.0), horizon=1.0):
    means = np.asarray(means, dtype=np.float64)
    if weights is None:
        weights = np.full(means.shape[0], 1.0 / means.shape[0])
    return DiffusionSpec(
        NoiseSchedule(beta[0], beta[1], horizon),
        GmmTarget(means, s2, np.asarray(weights)),
    )


def test_diffusion_coeff_positive_matches_rate():
    spec = _spec([[0.0]], 1.0)
    for t in (0.0, 0.3, 1.0):
        v = spec.diffusion_coeff(t)
        assert v > 0.0
        assert v == pytest.approx(math.sqrt(spec.schedule.beta(1.0 - t)), rel=1e-14)


def test_single_gaussian_score():
    # One zero-mean unit-variance component: total variance is
    # alpha^2 + sigma2 and the score is exactly -x / total.
    spec = _spec([[0.0, 0.0, 0.0]], 1.0)
    gen = rng.stream(1, rng.ORACLE, 0)
    x = gen.standard_normal((64, 3)) * 2.0
    for t in (0.0, 0.4, 1.0):
        _, total = spec.component_scale(t)
        assert total == pytest.approx(1.0, rel=1e-12)
        assert np.allclose(spec.marginal_score(x, t), -x / total, rtol=1e-12)


def test_score_matches_log_density_finite_differences():
    spec = _spec([[-1.0, 0.5], [1.0, -0.25], [3.0, 2.0]], 0.25, weights=[0.5, 0.3, 0.2])
    gen = rng.stream(2, rng.ORACLE, 0)
    for t in (0.05, 0.5, 0.95):
        _, total = spec.component_scale(t)
        step = 1e-4 * math.sqrt(total)
        x = spec.sample_marginal(t, 32, gen)
        score = spec.marginal_score(x, t)
        fd = np.empty_like(score)
        for j in range(x.shape[1]):
            hi = x.copy()
            lo = x.copy()
            hi[:, j] += step
            lo[:, j] -= step
            fd[:, j] = (spec.marginal_logpdf(hi, t) - spec.marginal_logpdf(lo, t)) / (2 * step)
        err = np.linalg.norm(score - fd, axis=1)
        bound = 1e-4 * (1.0 + np.linalg.norm(score, axis=1))
        assert np.all(err <= bound)


def test_score_symmetry_at_midpoint():
    # Components mirrored across x0 = 0: at points on the symmetry axis
    # the score has no axis-crossing component.
    spec = _spec([[-2.0, 1.0], [2.0, 1.0]], 0.5)
    x = np.array([[0.0, 0.0], [0.0, 2.5]])
    for t in (0.1, 0.9):
        score = spec.marginal_score(x, t)
        assert np.allclose(score[:, 0], 0.0, atol=1e-12)


def test_drift_degenerate_rate_limit():
    spec = _spec([[1.0]], 1.0, beta=(1e-12, 1e-12))
    x = np.array([[0.5], [-2.0]])
    assert np.allclose(spec.drift(x, 0.5), 0.0, atol=1e-11)


def test_drift_single_component_closed_form():
    spec = _spec([[0.0]], 4.0)
    gen = rng.stream(3, rng.ORACLE, 0)
    x = gen.standard_normal((16, 1)) * 3.0
    for t in (0.2, 0.7):
        beta = spec.schedule.beta(1.0 - t)
        _, total = spec.component_scale(t)
        expected = 0.5 * beta * x - beta * x / total
        assert np.allclose(spec.drift(x, t), expected, rtol=1e-12)


def test_drift_odd_symmetry():
    spec = _spec([[-3.0], [3.0]], 1.0)
    zero = np.zeros((1, 1))
    for t in (0.0, 0.5, 1.0):
        assert abs(spec.drift(zero, t)[0, 0]) < 1e-12


def test_sample_marginal_terminal_moments():
    target_means = [[-2.0], [1.0], [4.0]]
    spec = _spec(target_means, 0.5, weights=[0.25, 0.5, 0.25])
    n = 100_000
    samples = spec.sample_marginal(1.0, n, rng.stream(4, rng.ORACLE, 0))
    mean = spec.target.mean()
    var = spec.target.cov()[0, 0]
    assert abs(samples.mean() - mean[0]) < 4.0 * math.sqrt(var / n)
    second = samples[:, 0] ** 2
    exact_second = var + mean[0] ** 2
    se = second.std(ddof=1) / math.sqrt(n)
    assert abs(second.mean() - exact_second) < 4.0 * se


def test_sample_marginal_unit_gaussian_case():
    spec = _spec([[0.0]], 1.0)
    samples = spec.sample_marginal(0.35, 50_000, rng.stream(5, rng.ORACLE, 0))
    assert abs(samples.mean()) < 4.0 / math.sqrt(50_000)
    assert abs(samples.var() - 1.0) < 4.0 * math.sqrt(2.0 / 50_000)


def test_sample_marginal_rejects_empty():
    spec = _spec([[0.0]], 1.0)
    with pytest.raises(ValueError):
        spec.sample_marginal(0.0, 0, rng.stream(0, rng.ORACLE, 0))


def test_total_component_variance_positive_and_continuous():
    spec = _spec([[0.0]], 40.0)
    grid = np.linspace(0.0, 1.0, 400)
    totals = np.array([spec.component_scale(t)[1] for t in grid])
    assert np.all(totals > 0.0)
    assert np.max(np.abs(np.diff(totals))) < 0.5


def test_non_finite_state_rejected():
    spec = _spec([[0.0]], 1.0)
    with pytest.raises(ValueError):
        spec.marginal_score(np.array([[np.nan]]), 0.5)


def test_forward_simulation_weak_consistency():
    # Euler-Maruyama under the reverse-time drift, started from the exact
    # t=0 marginal, must reproduce the data-distribution moments at the
    # horizon up to Monte Carlo error (a fine grid keeps the remaining
    # discretization bias inside the band).
    spec = _spec([[-2.0], [2.0]], 0.5, beta=(0.1, 8.0))
    n, steps = 20_000, 4000
    dt = 1.0 / steps
    x = spec.sample_marginal(0.0, n, rng.stream(6, rng.ORACLE, 0))
    for k in range(steps):
        t = k * dt
        xi = rng.stream(6, rng.PROPAGATE, k).standard_normal((n, 1))
        x = x + spec.drift(x, t) * dt + spec.diffusion_coeff(t) * math.sqrt(dt) * xi
    mean = spec.target.mean()[0]
    var = spec.target.cov()[0, 0]
    z_mean = (x.mean() - mean) / math.sqrt(var / n)
    second = x[:, 0] ** 2
    z_second = (second.mean() - (var + mean**2)) / (second.std(ddof=1) / math.sqrt(n))
    assert abs(z_mean) < 4.0
    assert abs(z_second) < 4.0
