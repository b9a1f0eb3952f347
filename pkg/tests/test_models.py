import math

import numpy as np
import pytest

from odabc.errors import NumericalFailure
from odabc.models import (
    MODELS,
    Dataset,
    ParameterPoint,
    get_model,
    latent_path,
    latent_states,
    log_normal_interval,
    normal_means,
    normal_scale,
    prior_logpdf,
    prior_sample,
    simulate_dataset,
    stable_garch,
)
from odabc.rng import RngStream


def garch_point(b0=0.1, b1=0.5, b2=0.2, x0=1.0):
    return ParameterPoint([b0, b1, b2], [x0])


def test_registry_round_trip():
    for name in MODELS:
        assert get_model(name).name == name
    with pytest.raises(KeyError):
        get_model("arma")


def test_hyperparameters_override():
    m = get_model("normal-means", sigma=2.0)
    assert m.hyper["sigma"] == 2.0


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.empty((0, 1)))
    with pytest.raises(ValueError):
        Dataset([1.0, np.nan])
    d = Dataset([1.0, 2.0, 3.0])
    assert d.n == 3 and d.obs_dim == 1 and np.array_equal(d.y0, [0.0])
    assert d.head(2).n == 2


def test_parameter_point_equality_and_hash():
    a = ParameterPoint([1.0, 2.0], [3.0])
    b = ParameterPoint(np.array([1.0, 2.0]), 3.0)
    assert a == b and hash(a) == hash(b)
    assert np.array_equal(a.vector, [1.0, 2.0, 3.0])


def test_point_checks_dimensions():
    m = stable_garch()
    with pytest.raises(ValueError):
        m.check(ParameterPoint([0.1, 0.2], [1.0]))
    with pytest.raises(ValueError):
        m.check(ParameterPoint([0.1, 0.2, 0.3]))
    with pytest.raises(ValueError):
        normal_means().check(ParameterPoint([0.1], [1.0]))


def test_normal_means_path_constant():
    m = normal_means(x0=1.0)
    d = Dataset(np.arange(6.0))
    assert np.array_equal(latent_path(m, ParameterPoint([0.3]), d, 5), [1.0])


def test_garch_hand_recursion():
    m = stable_garch()
    d = Dataset([2.0])
    assert latent_path(m, garch_point(), d, 2)[0] == pytest.approx(1.4, abs=1e-15)


def test_k1_returns_x0():
    d = Dataset([0.5, -0.2])
    assert latent_path(stable_garch(), garch_point(x0=3.0), d, 1)[0] == 3.0
    assert latent_path(normal_means(x0=2.0), ParameterPoint([0.0]), d, 1)[0] == 2.0
    with pytest.raises(ValueError):
        latent_path(normal_means(), ParameterPoint([0.0]), d, 4)


def test_path_fn_matches_phi_iteration():
    m = stable_garch()
    gamma = garch_point(0.01, 0.3, 0.4, 0.05)
    d, _ = simulate_dataset(m, gamma, 50, RngStream(1))
    fast = latent_states(m, gamma, d)
    x = gamma.x0.copy()
    slow = [x]
    for yk in d.y:
        x = m.phi(gamma.theta, x, yk)
        slow.append(x)
    assert np.array_equal(fast, np.array(slow))


def test_garch_overflow_reports_index():
    m = stable_garch()
    d = Dataset(np.full(10, 1e200))
    with pytest.raises(NumericalFailure) as err:
        latent_states(m, garch_point(), d)
    assert err.value.index == 1


def test_garch_positive_states():
    m = stable_garch()
    d, path = simulate_dataset(m, garch_point(0.005, 0.3, 0.1, 0.02), 500, RngStream(3))
    assert np.all(path > 0)
    assert np.array_equal(path, latent_states(m, garch_point(0.005, 0.3, 0.1, 0.02), d))


def test_garch_degenerate_recursion():
    m = stable_garch()
    _, path = simulate_dataset(m, garch_point(0.7, 0.0, 0.0, 2.0), 20, RngStream(4))
    assert np.all(path[1:] == 0.7)


def test_simulate_normal_means_mean():
    m = normal_means(x0=1.0)
    d, _ = simulate_dataset(m, ParameterPoint([0.0]), 10_000, RngStream(5))
    assert abs(d.y.mean()) < 4 / math.sqrt(10_000)


def test_simulate_same_seed_identical():
    m = stable_garch()
    a, pa = simulate_dataset(m, garch_point(), 30, RngStream(6))
    b, pb = simulate_dataset(m, garch_point(), 30, RngStream(6))
    assert np.array_equal(a.y, b.y) and np.array_equal(pa, pb)


def test_normal_means_prior_at_zero():
    lp = prior_logpdf(normal_means(), ParameterPoint([0.0]))
    assert lp == pytest.approx(-0.918939, abs=1e-6)


def test_garch_prior_outside_support():
    assert prior_logpdf(stable_garch(), garch_point(b1=-0.1)) == -math.inf
    assert prior_logpdf(stable_garch(), garch_point(x0=0.0)) == -math.inf


def test_gamma_prior_value():
    # Gamma(2, rate 1/8) at 16 is (1/8)^2 * 16 * exp(-2)
    m = stable_garch()
    one = prior_logpdf(m, garch_point(1.0, 1.0, 1.0, 1.0))
    at16 = prior_logpdf(m, garch_point(1.0, 1.0, 1.0, 16.0))
    gamma1 = math.log(1 / 64) - 1 / 8
    assert at16 - (one - gamma1) == pytest.approx(math.log(0.25) - 2, abs=1e-6)
    assert at16 - (one - gamma1) == pytest.approx(-3.386294, abs=1e-6)


def test_normal_scale_prior_matches_scipy():
    from scipy import stats

    m = normal_scale(a=2.0, b=2.0)
    for v in (0.3, 1.0, 2.7):
        ref = stats.gamma.logpdf(v, 2.0, scale=0.5)
        assert prior_logpdf(m, ParameterPoint([v])) == pytest.approx(ref, rel=1e-12)
    assert prior_logpdf(m, ParameterPoint([-1.0])) == -math.inf


def test_gamma_prior_sample_mean():
    m = stable_garch()
    gen = RngStream(7).generator()
    x0 = np.array([m.prior_sample(gen).x0[0] for _ in range(20_000)])
    se = math.sqrt(2 * 64 / x0.size)
    assert abs(x0.mean() - 16) < 3 * se
    assert np.all(x0 > 0)


def test_prior_sample_shapes_and_determinism():
    p = prior_sample(normal_means(), RngStream(8))
    assert p.x0.size == 0 and p.theta.shape == (1,)
    assert prior_sample(stable_garch(), RngStream(8)) == prior_sample(stable_garch(), RngStream(8))


def test_phi_deterministic():
    m = stable_garch()
    t, x, y = np.array([0.1, 0.2, 0.3]), np.array([0.5]), np.array([1.5])
    assert np.array_equal(m.phi(t, x, y), m.phi(t, x, y))


@pytest.mark.parametrize("factory,theta", [(normal_means, 0.7), (normal_scale, 1.8)])
def test_sampler_moments_match_density(factory, theta):
    m = factory()
    xs = np.array([[1.0]])
    u = m.obs_sampler(np.array([theta]), xs, 200_000, RngStream(9).generator())[0, :, 0]
    grid = np.linspace(-6, 6, 4001)
    dens = np.exp(m.obs_logdensity(np.array([theta]), xs[0], grid[:, None]))
    mean = np.trapezoid(grid * dens, grid)
    var = np.trapezoid((grid - mean) ** 2 * dens, grid)
    assert abs(u.mean() - mean) < 4 * math.sqrt(var / u.size)
    assert abs(u.var() - var) < 4 * var * math.sqrt(2 / u.size)


@pytest.mark.parametrize("factory", [normal_means, normal_scale])
def test_smoothed_density_is_ball_average(factory):
    m = factory()
    gen = RngStream(10).generator()
    eps = 0.6
    for _ in range(5):
        theta = np.array([gen.uniform(0.3, 1.5)])
        y = gen.normal()
        z = y + eps * (2 * gen.random(100_000) - 1)
        vals = np.exp(m.obs_logdensity(theta, np.array([1.0]), z[:, None]))
        est, se = vals.mean(), vals.std() / math.sqrt(vals.size)
        exact = math.exp(m.smoothed_logdensity(theta, np.array([[1.0]]), np.array([[y]]), eps)[0])
        assert abs(est - exact) < 3 * se


def test_log_normal_interval_tails():
    from scipy import stats

    lo, hi = np.array([-1.0, 8.0, -40.0]), np.array([1.0, 9.0, -39.0])
    ref0 = math.log(stats.norm.cdf(1) - stats.norm.cdf(-1))
    got = log_normal_interval(lo, hi)
    assert got[0] == pytest.approx(ref0, rel=1e-12)
    assert np.isfinite(got).all()
    # far tail: log(sf(8) - sf(9)) ~ logsf(8)
    assert got[1] == pytest.approx(stats.norm.logsf(8.0) + math.log1p(-stats.norm.sf(9) / stats.norm.sf(8)), rel=1e-9)
    assert log_normal_interval(np.array([1.0]), np.array([1.0]))[0] == -math.inf
