import numpy as np
import pytest
from scipy import stats

from tailgp.errors import FitError, InvalidArgumentError
from tailgp.input_models import (
    Empirical,
    InputModel,
    LogNormal,
    Normal,
    TwoStratumMixture,
    build_tail_mixture,
    fit_censored_weibull,
    read_values_csv,
    sample,
)
from tailgp.problems import short_column_model


def test_normal_moments():
    x = sample(InputModel((Normal(0.0, 1.0),)), 100_000, 0)[:, 0]
    assert abs(x.mean()) < 0.02
    assert abs(x.std() - 1.0) < 0.02


def test_degenerate_empirical():
    x = sample(InputModel((Empirical([1.0]),)), 500, 1)
    assert np.all(x == 1.0)


def test_mixture_lower_fraction():
    m = TwoStratumMixture(Empirical([0.0, 1.0]), Empirical([10.0, 11.0]), p1=0.5)
    x = sample(InputModel((m,)), 100_000, 2)[:, 0]
    assert abs(np.mean(x < 5) - 0.5) < 0.01


def test_sampling_is_reproducible_and_lognormal_positive():
    model = short_column_model()
    a = sample(model, 1000, 7)
    assert np.array_equal(a, sample(model, 1000, 7))
    assert np.all(a[:, 2] > 0)


def test_short_column_marginal_means():
    x = sample(short_column_model(), 1_000_000, 0)
    expected = np.array([2000.0, 500.0, np.exp(5.125)])
    assert np.allclose(x.mean(axis=0), expected, rtol=5e-3)


def test_lognormal_design_bounds_on_log_scale():
    lo, hi, tr = LogNormal(5.0, 0.5).design_bounds()
    assert (lo, hi, tr) == (3.5, 6.5, "exponential")


def test_marginal_validation():
    with pytest.raises(InvalidArgumentError):
        Normal(0.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        LogNormal(0.0, -1.0)
    with pytest.raises(InvalidArgumentError):
        Empirical([])
    with pytest.raises(InvalidArgumentError):
        sample(InputModel((Normal(0, 1),)), 0, 0)


# ------------------------------------------------------------ tail mixtures


def test_build_tail_mixture_deciles():
    m = build_tail_mixture(np.arange(1, 11), 0.1, 0.5)
    assert np.array_equal(m.lower_part.data, [1.0])
    assert np.array_equal(m.upper_part.data, np.arange(2, 11))
    assert m.p1 == 0.5 and m.natural_p == pytest.approx(0.1)


def test_proportionate_mixture_matches_empirical_law():
    data = np.random.default_rng(0).normal(size=200)
    m = build_tail_mixture(data, 0.1, 0.1)
    full = Empirical(data)
    grid = np.linspace(-4, 4, 101)
    assert np.allclose(m.cdf(grid), full.cdf(grid), atol=1e-12)


def test_mixture_cdf_identity():
    data = np.random.default_rng(1).gamma(2.0, size=300)
    m = build_tail_mixture(data, 0.1, 0.5)
    x = np.linspace(0, 10, 57)
    assert np.array_equal(m.cdf(x), 0.5 * m.lower_part.cdf(x) + 0.5 * m.upper_part.cdf(x))


def test_mixture_ppf_inverts_cdf():
    m = TwoStratumMixture(Normal(0, 1), Normal(5, 1), p1=0.3)
    q = np.array([0.05, 0.3, 0.7])
    assert np.allclose(m.cdf(m.ppf(q)), q, atol=1e-9)


def test_tail_mixture_rejects_bad_split():
    with pytest.raises(InvalidArgumentError):
        build_tail_mixture([1.0, 2.0, 3.0], 0.1, 0.5)
    with pytest.raises(InvalidArgumentError):
        build_tail_mixture(np.arange(10), 0.1, 1.0)


def test_read_values_csv(tmp_path):
    p = tmp_path / "moe.csv"
    p.write_text("moe\n1.5\n\n2.5\n")
    assert np.array_equal(read_values_csv(p, header=True), [1.5, 2.5])
    assert np.array_equal(read_values_csv(p), [1.5, 2.5])
    q = tmp_path / "bare.csv"
    q.write_text("1.0\n2.0\n")
    assert np.array_equal(read_values_csv(q), [1.0, 2.0])
    q.write_text("1.0\nbad\n")
    with pytest.raises(ValueError):
        read_values_csv(q)


# ---------------------------------------------------------- censored Weibull


def test_censored_weibull_recovers_parameters():
    shapes, scales = [], []
    for rep in range(20):
        data = stats.weibull_min.rvs(2.0, scale=1.0, size=5000, random_state=rep)
        fit = fit_censored_weibull(data, 0.1, 2, seed=rep)
        shapes.append(fit.shape)
        scales.append(fit.scale)
        assert fit.log_likelihood >= max(fit.start_log_likelihoods) - 1e-9
    # every replicate within 15% of truth
    assert np.max(np.abs(np.array(shapes) - 2.0) / 2.0) < 0.15
    assert np.max(np.abs(np.array(scales) - 1.0)) < 0.15


def test_uncensored_fit_matches_full_mle():
    data = stats.weibull_min.rvs(1.7, scale=3.0, size=800, random_state=4)
    fit = fit_censored_weibull(data, 1.0, 2)
    c, _, scale = stats.weibull_min.fit(data, floc=0)
    assert fit.shape == pytest.approx(c, rel=1e-3)
    assert fit.scale == pytest.approx(scale, rel=1e-3)


def test_three_parameter_fit_runs():
    data = 2.0 + stats.weibull_min.rvs(2.0, scale=1.0, size=3000, random_state=5)
    fit = fit_censored_weibull(data, 0.1, 3)
    assert fit.location < data.min()
    assert fit.n_complete == 300 and fit.n_censored == 2700


def test_degenerate_weibull_data():
    with pytest.raises(FitError):
        fit_censored_weibull(np.r_[np.full(20, 1.0), np.arange(2.0, 182.0)], 0.1, 2)
