import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gvc.diffusion.schedule import (
    NoiseSchedule,
    forward_sample,
    make_schedule,
    posterior_mean,
    posterior_variance,
    predict_x0,
)

mpmath.mp.dps = 50


def test_single_step_schedule():
    s = NoiseSchedule.from_betas([0.5])
    assert s.num_steps == 1
    assert s.alpha_bar[1] == 0.5
    assert s.beta_tilde[1] == 0.0


def test_alpha_bar_1000_matches_high_precision_product():
    s = make_schedule(1000, 1e-4, 0.02)
    prod = mpmath.mpf(1)
    for i in range(1000):
        beta = mpmath.mpf("1e-4") + (mpmath.mpf("0.02") - mpmath.mpf("1e-4")) * i / 999
        prod *= 1 - beta
    assert float(s.alpha_bar[1000]) == pytest.approx(float(prod), rel=1e-10)


def test_near_zero_betas():
    s = make_schedule(50, 1e-12, 1e-12)
    assert np.allclose(s.alpha_bar, 1.0, atol=1e-9)


@pytest.mark.parametrize("args", [(0, 1e-4, 0.02), (10, 0.0, 0.02), (10, 0.03, 0.02), (10, 1e-4, 1.0)])
def test_make_schedule_rejects(args):
    with pytest.raises(ValueError):
        make_schedule(*args)


def test_step_bounds():
    s = make_schedule(10)
    with pytest.raises(IndexError):
        forward_sample(0.0, 0, 0.0, s)
    with pytest.raises(IndexError):
        posterior_mean(0.0, 0.0, 11, s)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(1e-5, 0.999), min_size=1, max_size=60))
def test_identities_on_random_schedules(betas):
    s = NoiseSchedule.from_betas(betas)
    t = np.arange(1, s.num_steps + 1)
    assert s.alpha_bar[0] == 1.0 and s.beta_tilde[1] == 0.0
    assert np.all(np.diff(s.alpha_bar) < 0)
    expect = np.cumprod(1 - np.asarray(betas))
    assert np.allclose(s.alpha_bar[1:], expect, rtol=1e-12, atol=0)
    lhs = s.beta_tilde[t] * (1 - s.alpha_bar[t])
    rhs = s.beta[t] * (1 - s.alpha_bar[t - 1])
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-300)


def test_posterior_mean_at_t1_is_x0():
    s = make_schedule(10)
    x0 = np.array([0.3, -0.7])
    assert np.allclose(posterior_mean(np.array([5.0, -2.0]), x0, 1, s), x0, atol=1e-15)


def bayes_posterior(betas, t, xt, x0):
    """Exact Gaussian posterior q(x_{t-1} | x_t, x_0) by completing the square."""
    b = [mpmath.mpf(x) for x in betas]
    ab_prev = mpmath.fprod([1 - x for x in b[:t - 1]])
    a_t = 1 - b[t - 1]
    # likelihood N(x_t; sqrt(a_t) x, beta_t), prior N(x; sqrt(ab_prev) x0, 1 - ab_prev)
    prec = a_t / b[t - 1] + 1 / (1 - ab_prev)
    mean = (mpmath.sqrt(a_t) * xt / b[t - 1] + mpmath.sqrt(ab_prev) * x0 / (1 - ab_prev)) / prec
    return float(mean), float(1 / prec)


@pytest.mark.parametrize("seed", range(5))
def test_posterior_matches_bayes_oracle(seed):
    rng = np.random.default_rng(seed)
    betas = np.sort(rng.uniform(0.01, 0.5, 3))
    s = NoiseSchedule.from_betas(betas)
    for t in (2, 3):
        xt, x0 = rng.normal(), rng.uniform(-1, 1)
        mean, var = bayes_posterior(betas, t, mpmath.mpf(xt), mpmath.mpf(x0))
        assert float(posterior_mean(xt, x0, t, s)) == pytest.approx(mean, rel=1e-9)
        assert posterior_variance(t, s) == pytest.approx(var, rel=1e-9)


def test_forward_marginal_monte_carlo():
    rng = np.random.default_rng(0)
    n = 10_000
    s = NoiseSchedule.from_betas([0.1, 0.2, 0.15, 0.3, 0.05])
    x0 = 0.6
    for t in range(1, 6):
        # compose the one-step kernels q(x_t | x_{t-1})
        x = np.full(n, x0)
        for k in range(1, t + 1):
            x = np.sqrt(1 - s.beta[k]) * x + np.sqrt(s.beta[k]) * rng.standard_normal(n)
        mean_cf = np.sqrt(s.alpha_bar[t]) * x0
        var_cf = 1 - s.alpha_bar[t]
        se_mean = np.sqrt(var_cf / n)
        se_var = var_cf * np.sqrt(2 / (n - 1))
        assert abs(x.mean() - mean_cf) < 3 * se_mean
        assert abs(x.var(ddof=1) - var_cf) < 3 * se_var
        # closed-form sampler itself
        y = forward_sample(np.full(n, x0), t, rng.standard_normal(n), s)
        assert abs(y.mean() - mean_cf) < 3 * se_mean
        assert abs(y.var(ddof=1) - var_cf) < 3 * se_var


def test_zero_noise_schedule_forward_is_identity():
    s = make_schedule(5, 1e-15, 1e-15)
    x0 = np.linspace(-1, 1, 7)
    assert np.allclose(forward_sample(x0, 3, np.ones(7), s), x0, atol=1e-7)


def test_predict_x0_inverts_forward():
    s = make_schedule(100, 1e-4, 0.2)
    rng = np.random.default_rng(1)
    x0, eps = rng.uniform(-1, 1, 50), rng.normal(size=50)
    for t in (1, 50, 100):
        assert np.allclose(predict_x0(forward_sample(x0, t, eps, s), t, eps, s), x0, atol=1e-9)
