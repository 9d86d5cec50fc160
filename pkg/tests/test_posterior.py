import numpy as np
import pytest
from scipy import stats

from tailgp.errors import InvalidArgumentError
from tailgp.gp_core import CorrelationParams, TrainingSet, conditional_predict
from tailgp.posterior import (
    MCMCConfig,
    PsiPrior,
    PsiSample,
    fit_surrogate,
    log_posterior,
    map_psi,
    mixture_predict,
    sample_psi,
)


@pytest.fixture(scope="module")
def train():
    rng = np.random.default_rng(3)
    X = rng.random((12, 2))
    return TrainingSet(X, np.sin(4 * X[:, 0]) + X[:, 1] ** 2, np.zeros(2), np.ones(2))


def test_degenerate_chain_returns_initial(train):
    init = CorrelationParams([2.0, 0.5], [1.3, 1.8])
    cfg = MCMCConfig(burn_in=0, thin=1, M=1, step_theta=0.0, step_p=0.0, adapt=False)
    out = sample_psi(train, config=cfg, seed=1, initial=init)
    assert out.M == 1
    assert np.allclose(out.draws[0].theta, init.theta)
    assert np.allclose(out.draws[0].p, init.p)


def test_seed_determinism_and_prior_containment(train):
    cfg = MCMCConfig(burn_in=50, thin=2, M=30)
    a = sample_psi(train, config=cfg, seed=11)
    b = sample_psi(train, config=cfg, seed=11)
    assert np.array_equal(a.thetas, b.thetas) and np.array_equal(a.ps, b.ps)
    prior = PsiPrior()
    assert all(prior.contains(psi) for psi in a.draws)
    c = sample_psi(train, config=cfg, seed=12)
    assert not np.array_equal(a.thetas, c.thetas)


def test_flat_likelihood_recovers_prior():
    X = np.linspace(0, 1, 6)[:, None]
    train = TrainingSet(X, np.full(6, 2.0))
    cfg = MCMCConfig(burn_in=200, thin=1, M=10_000)
    out = sample_psi(train, config=cfg, seed=5)
    assert stats.kstest(out.ps[:, 0], "uniform", args=(1.0, 1.0)).statistic < 0.05
    lo, hi = PsiPrior().log_theta_bounds
    lt = np.log(out.thetas[:, 0])
    assert stats.kstest(lt, "uniform", args=(lo, hi - lo)).statistic < 0.05


def test_posterior_recovers_known_range():
    theta_true = 5.0
    medians = []
    for rep in range(20):
        rng = np.random.default_rng(100 + rep)
        X = np.sort(rng.random(15))
        R = np.exp(-theta_true * (X[:, None] - X[None, :]) ** 2) + 1e-10 * np.eye(15)
        y = np.linalg.cholesky(R) @ rng.standard_normal(15)
        train = TrainingSet(X[:, None], y, [0.0], [1.0])
        out = sample_psi(train, config=MCMCConfig(burn_in=200, thin=2, M=100), seed=rep)
        medians.append(np.median(out.thetas[:, 0]))
    assert theta_true / 3 <= np.median(medians) <= theta_true * 3


def test_acceptance_warning_is_attached_not_raised(train):
    cfg = MCMCConfig(burn_in=0, thin=1, M=20, step_theta=1000.0, step_p=1000.0, adapt=False)
    out = sample_psi(train, config=cfg, seed=0)
    assert out.acceptance_rate < 0.05
    assert out.warnings and "acceptance" in out.warnings[0]


def test_map_mode(train):
    out = sample_psi(train, config=MCMCConfig(mode="map", map_starts=3), seed=0)
    assert out.M == 1
    best = log_posterior(train, out.draws[0])
    for psi in sample_psi(train, config=MCMCConfig(burn_in=20, M=10), seed=2).draws:
        assert best >= log_posterior(train, psi) - 1e-6
    assert map_psi(train, starts=3, seed=0).draws[0] == out.draws[0]


def test_log_posterior_outside_support(train):
    psi = CorrelationParams([1e3, 1.0], [1.5, 1.5])
    assert log_posterior(train, psi) == -np.inf


def test_mcmc_config_validation():
    with pytest.raises(InvalidArgumentError):
        MCMCConfig(M=0)
    with pytest.raises(InvalidArgumentError):
        MCMCConfig(mode="vi")
    with pytest.raises(InvalidArgumentError):
        PsiPrior(log_theta_bounds=(1.0, 0.0))


# ------------------------------------------------------------ mixtures


def test_single_draw_matches_conditional(train):
    psi = CorrelationParams([1.5, 0.7], [1.9, 1.2])
    x = [0.3, 0.6]
    mix = mixture_predict(x, train, PsiSample((psi,), 1.0, 0))
    cond = conditional_predict(x, train, psi)
    assert mix.mean == pytest.approx(cond.mean, rel=1e-12)
    assert mix.variance == pytest.approx(cond.variance, rel=1e-12)


def test_identical_draws_have_no_between_term(train):
    psi = CorrelationParams([1.5, 0.7], [1.9, 1.2])
    mix = mixture_predict([0.2, 0.2], train, PsiSample((psi,) * 4, 1.0, 0))
    cond = conditional_predict([0.2, 0.2], train, psi)
    assert mix.variance == pytest.approx(cond.variance, rel=1e-12)


def test_two_draw_hand_value(monkeypatch):
    import tailgp.posterior as post

    per = iter([(np.array([0.0]), np.array([1.0])), (np.array([2.0]), np.array([1.0]))])
    monkeypatch.setattr(post, "conditional_state", lambda *a, **k: None)
    monkeypatch.setattr(post, "predict_arrays", lambda *a, **k: next(per))
    tr = TrainingSet([[0.0], [1.0]], [0.0, 1.0])
    psi = CorrelationParams([1.0], [2.0])
    mix = mixture_predict([0.5], tr, PsiSample((psi, psi), 1.0, 0))
    assert mix.mean == pytest.approx(1.0)
    assert mix.variance == pytest.approx(3.0)


def test_surrogate_batch_matches_pointwise_and_dominance(train):
    sur = fit_surrogate(train, config=MCMCConfig(burn_in=50, thin=2, M=8), seed=4)
    X = np.random.default_rng(0).random((7, 2))
    m, v = sur.predict(X)
    for i, x in enumerate(X):
        mix = mixture_predict(x, train, sur.psis)
        assert m[i] == pytest.approx(mix.mean, rel=1e-9, abs=1e-9)
        assert v[i] == pytest.approx(mix.variance, rel=1e-6, abs=1e-12)
        assert mix.variance >= np.mean([pv for _, pv in mix.per_draw]) - 1e-15
