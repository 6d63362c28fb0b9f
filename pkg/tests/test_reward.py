import math

import numpy as np
import pytest

from pathsmc import rng
from pathsmc.gmm import GmmTarget
from pathsmc.reward import (
    GuidanceChoice,
    QuadraticReward,
    ScheduledReward,
    tilt_posterior,
    tilted_moments,
)


def test_quadratic_reward_validation():
    with pytest.raises(ValueError, match="symmetric"):
        QuadraticReward(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="positive definite"):
        QuadraticReward(np.zeros(2), np.array([[1.0, 0.0], [0.0, -1.0]]))
    rw = QuadraticReward(np.zeros(2), 2.0)
    assert np.array_equal(rw.prec, 2.0 * np.eye(2))


def test_reward_value_nonpositive():
    rw = QuadraticReward(np.array([1.0, -2.0]), np.diag([0.5, 3.0]))
    x = rng.stream(0, rng.ORACLE, 1).standard_normal((100, 2)) * 5.0
    assert np.all(rw.value(x) <= 0.0)
    assert rw.value(rw.mu[None, :])[0] == 0.0


def test_eval_at_minimum():
    base = QuadraticReward(np.array([1.0, 2.0]), np.diag([2.0, 3.0]))
    sr = ScheduledReward(base, interp="linear", horizon=2.0)
    terms = sr.eval(base.mu[None, :], 1.0)
    assert terms.value[0] == 0.0
    assert np.allclose(terms.grad, 0.0)
    assert terms.time_derivative[0] == 0.0
    assert terms.laplacian == pytest.approx(-sr.g(1.0) * 5.0)


def test_eval_direct_1d_values():
    sr = ScheduledReward(QuadraticReward(np.array([0.0]), np.array([[1.0]])), interp="constant")
    terms = sr.eval(np.array([[2.0]]), 0.3)
    assert terms.value[0] == pytest.approx(-2.0)
    assert terms.grad[0, 0] == pytest.approx(-2.0)
    assert terms.laplacian == pytest.approx(-1.0)
    assert terms.time_derivative[0] == 0.0


@pytest.mark.parametrize("interp", ["constant", "linear"])
def test_derivatives_match_finite_differences(interp):
    gen = rng.stream(1, rng.ORACLE, 2)
    prec = np.array([[1.2, 0.3], [0.3, 0.8]])
    sr = ScheduledReward(QuadraticReward(np.array([0.5, -1.0]), prec), interp=interp, horizon=1.0)
    x = gen.standard_normal((20, 2)) * 3.0
    t = 0.6
    terms = sr.eval(x, t)
    eps = 1e-5
    # Gradient against central differences of the value.
    for j in range(2):
        hi, lo = x.copy(), x.copy()
        hi[:, j] += eps
        lo[:, j] -= eps
        fd = (sr.value(hi, t) - sr.value(lo, t)) / (2 * eps)
        denom = np.maximum(np.abs(terms.grad[:, j]), 1e-3)
        assert np.all(np.abs(fd - terms.grad[:, j]) / denom < 1e-6)
    # Laplacian against the second-difference trace.
    lap_fd = 0.0
    for j in range(2):
        hi, lo = x.copy(), x.copy()
        hi[:, j] += eps
        lo[:, j] -= eps
        lap_fd += (sr.value(hi, t) - 2 * sr.value(x, t) + sr.value(lo, t)) / eps**2
    assert np.allclose(lap_fd, terms.laplacian, rtol=1e-3, atol=1e-3)
    # Time derivative against central differences in t.
    fd_t = (sr.value(x, t + eps) - sr.value(x, t - eps)) / (2 * eps)
    assert np.allclose(fd_t, terms.time_derivative, rtol=1e-6, atol=1e-9)


def test_guidance_variants():
    base = QuadraticReward(np.array([0.0]), np.array([[2.0]]))
    sr = ScheduledReward(base, interp="constant")
    x = np.array([[1.5]])
    none = GuidanceChoice("none")
    assert none.is_zero and none.factor == 0.0
    assert np.allclose(none.grad(sr, x, 0.5), 0.0)
    rewardg = GuidanceChoice("reward")
    assert rewardg.matches_reward
    assert np.allclose(rewardg.grad(sr, x, 0.5), sr.grad(x, 0.5))
    scaled = GuidanceChoice("scaled", kappa=2.5)
    assert np.allclose(scaled.grad(sr, x, 0.5), 2.5 * sr.grad(x, 0.5))
    assert scaled.laplacian(sr, 0.5) == pytest.approx(2.5 * sr.laplacian(0.5))
    with pytest.raises(ValueError):
        GuidanceChoice("other")


def _grid_tilt_oracle(target, reward, n_grid=200_001, span=10.0):
    """Brute-force 1D quadrature of mixture density times exp(reward)."""
    s2 = target.component_var
    prec = reward.prec[0, 0]
    mu_r = reward.mu[0]
    sd = math.sqrt(max(s2, 1.0 / prec))
    lo = min(target.means.min(), mu_r) - span * sd
    hi = max(target.means.max(), mu_r) + span * sd
    x = np.linspace(lo, hi, n_grid)
    r_x = -0.5 * prec * (x - mu_r) ** 2
    z, m, v = [], [], []
    for i in range(target.n_components):
        log_f = -0.5 * (x - target.means[i, 0]) ** 2 / s2 + r_x
        shift = log_f.max()
        f = np.exp(log_f - shift)
        zi = np.trapezoid(f, x)
        mi = np.trapezoid(x * f, x) / zi
        vi = np.trapezoid(x * x * f, x) / zi - mi * mi
        z.append(zi * math.exp(shift) * target.weights[i])
        m.append(mi)
        v.append(vi)
    z = np.array(z)
    return z / z.sum(), np.array(m), np.array(v)


def test_tilt_posterior_unit_case():
    target = GmmTarget(np.array([[0.0]]), 1.0, np.array([1.0]))
    reward = QuadraticReward(np.array([0.0]), np.array([[1.0]]))
    tg = tilt_posterior(target, reward)
    assert tg.cov[0, 0] == pytest.approx(0.5, rel=1e-12)
    assert tg.means[0, 0] == pytest.approx(0.0, abs=1e-14)
    assert tg.weights[0] == 1.0
    w_grid, m_grid, v_grid = _grid_tilt_oracle(target, reward)
    assert v_grid[0] == pytest.approx(0.5, rel=1e-6)


def test_tilt_posterior_vanishing_reward_limit():
    target = GmmTarget(np.array([[-3.0], [1.0], [4.0]]), 40.0, np.array([0.2, 0.5, 0.3]))
    reward = QuadraticReward(np.array([2.0]), np.array([[1e-10]]))
    tg = tilt_posterior(target, reward)
    assert np.allclose(tg.cov, 40.0, atol=1e-6)
    assert np.allclose(tg.means, target.means, atol=1e-6)
    assert np.allclose(tg.weights, target.weights, atol=1e-6)


def test_tilt_posterior_two_component_weight_ratio():
    target = GmmTarget(np.array([[-3.0], [3.0]]), 1.0, np.array([0.5, 0.5]))
    reward = QuadraticReward(np.array([3.0]), np.array([[1.0]]))
    tg = tilt_posterior(target, reward)
    assert tg.weights[1] / tg.weights[0] == pytest.approx(math.exp(9.0), rel=1e-10)
    w_grid, m_grid, v_grid = _grid_tilt_oracle(target, reward)
    assert np.allclose(tg.weights, w_grid, rtol=1e-6)
    assert np.allclose(tg.means[:, 0], m_grid, rtol=1e-6)
    assert tg.cov[0, 0] == pytest.approx(v_grid[0], rel=1e-6)


def test_tilted_moments_single_component():
    target = GmmTarget(np.array([[2.0, -1.0]]), 2.0, np.array([1.0]))
    reward = QuadraticReward(np.array([0.0, 0.0]), np.diag([0.5, 0.25]))
    tg = tilt_posterior(target, reward)
    mean, cov = tilted_moments(tg)
    assert np.allclose(mean, tg.means[0])
    assert np.allclose(cov, tg.cov)


def test_tilted_moments_symmetric_mean_zero():
    target = GmmTarget(np.array([[-2.0], [2.0]]), 1.0, np.array([0.5, 0.5]))
    reward = QuadraticReward(np.array([0.0]), np.array([[0.7]]))
    mean, _ = tilted_moments(tilt_posterior(target, reward))
    assert abs(mean[0]) < 1e-12


def test_tilted_moments_against_monte_carlo():
    target = GmmTarget(np.array([[-1.0, 2.0], [3.0, 0.5]]), 1.5, np.array([0.4, 0.6]))
    reward = QuadraticReward(np.array([1.0, -0.5]), np.diag([0.3, 0.6]))
    tg = tilt_posterior(target, reward)
    mean, cov = tilted_moments(tg)
    n = 1_000_000
    samples = tg.sample(n, rng.stream(2, rng.ORACLE, 3))
    se = np.sqrt(np.diag(cov) / n)
    assert np.all(np.abs(samples.mean(axis=0) - mean) < 4.0 * se)
    assert np.allclose(np.cov(samples.T), cov, atol=0.02)


def test_tilt_never_inflates_component_covariance():
    gen = rng.stream(3, rng.ORACLE, 4)
    for _ in range(10):
        d = int(gen.integers(1, 4))
        target = GmmTarget(gen.standard_normal((3, d)), float(gen.uniform(0.5, 5.0)), np.full(3, 1 / 3))
        a = gen.standard_normal((d, d))
        reward = QuadraticReward(gen.standard_normal(d), a @ a.T + 0.1 * np.eye(d))
        tg = tilt_posterior(target, reward)
        eigs = np.linalg.eigvalsh(target.component_var * np.eye(d) - tg.cov)
        assert np.all(eigs > -1e-10)


def test_dimension_mismatch_rejected():
    target = GmmTarget(np.zeros((2, 3)), 1.0, np.array([0.5, 0.5]))
    reward = QuadraticReward(np.zeros(2), np.eye(2))
    with pytest.raises(ValueError):
        tilt_posterior(target, reward)
