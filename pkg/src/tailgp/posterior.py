"""Bayesian handling of the correlation parameters.

The constant mean (flat prior) and process variance (Jeffreys prior) are
integrated out analytically, leaving a marginal likelihood for
``psi = (theta, p)``.  That is sampled with component-wise random-walk
Metropolis on ``(log theta_j, logit(p_j - 1))``; predictions average the
conditional Student-t moments over the draws.
"""
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
from scipy.optimize import minimize

from tailgp import kernels
from tailgp.gp_core import CorrelationParams, conditional_state, factorize, predict_arrays
from tailgp.errors import InvalidArgumentError

log = logging.getLogger(__name__)

TARGET_ACCEPTANCE = 0.30
_ADAPT_BATCH = 25


@dataclass(frozen=True)
class PsiPrior:
    """Independent uniform priors on ``log theta_j`` and ``p_j``."""

    log_theta_bounds: tuple = (float(np.log(0.01)), float(np.log(50.0)))
    p_bounds: tuple = (1.0, 2.0)
    independent: bool = True

    def __post_init__(self):
        lo, hi = self.log_theta_bounds
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise InvalidArgumentError(f"bad log-theta bounds {self.log_theta_bounds}")
        if tuple(self.p_bounds) != (1.0, 2.0):
            raise InvalidArgumentError("smoothness prior support is fixed to [1, 2]")

    def center(self, d):
        return CorrelationParams(np.full(d, np.exp(np.mean(self.log_theta_bounds))),
                                 np.full(d, 1.5))

    def contains(self, psi):
        lt = np.log(psi.theta)
        lo, hi = self.log_theta_bounds
        return bool(np.all((lt >= lo) & (lt <= hi) & (psi.p >= 1) & (psi.p <= 2)))


@dataclass(frozen=True)
class MCMCConfig:
    burn_in: int = 500
    thin: int = 5
    M: int = 100
    step_theta: float = 0.5
    step_p: float = 1.0
    adapt: bool = True
    mode: str = "mcmc"          # or "map"
    map_starts: int = 8

    def __post_init__(self):
        problems = []
        if self.burn_in < 0:
            problems.append("burn_in must be >= 0")
        if self.thin < 1:
            problems.append("thin must be >= 1")
        if self.M < 1:
            problems.append("M must be >= 1")
        if self.step_theta < 0 or self.step_p < 0:
            problems.append("step sizes must be >= 0")
        if self.mode not in ("mcmc", "map"):
            problems.append(f"mode must be 'mcmc' or 'map', got {self.mode!r}")
        if self.map_starts < 1:
            problems.append("map_starts must be >= 1")
        if problems:
            raise InvalidArgumentError("; ".join(problems))


@dataclass(frozen=True, eq=False)
class PsiSample:
    draws: tuple
    acceptance_rate: float
    chain_seed: int
    warnings: tuple = ()

    @property
    def M(self):
        return len(self.draws)

    @property
    def thetas(self):
        return np.array([d.theta for d in self.draws])

    @property
    def ps(self):
        return np.array([d.p for d in self.draws])


@dataclass(frozen=True, eq=False)
class MixturePrediction:
    mean: float
    variance: float
    per_draw: tuple = field(default=())


# ------------------------------------------------------------- likelihood


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def _to_psi(z, d):
    return np.exp(z[:d]), 1.0 + _sigmoid(z[d:])


def _log_jacobian(u):
    # log dp/du for p = 1 + sigmoid(u)
    return -np.logaddexp(0.0, -u) - np.logaddexp(0.0, u)


class _Target:
    def __init__(self, train, prior):
        self.d = train.d
        self.logdiff = np.ascontiguousarray(kernels.pairwise_log_absdiff(train.scaled))
        self.y = np.ascontiguousarray(train.outputs)
        # constant outputs carry no information about psi
        self.flat = np.ptp(self.y) == 0.0
        self.lo, self.hi = prior.log_theta_bounds

    def loglik(self, theta, p):
        if self.flat:
            return 0.0
        return kernels.log_marginal(self.logdiff, self.y, theta, p)[0]

    def logpost(self, z):
        d = self.d
        lt = z[:d]
        if np.any(lt < self.lo) or np.any(lt > self.hi):
            return -np.inf
        theta, p = _to_psi(z, d)
        ll = self.loglik(theta, p)
        return ll + float(np.sum(_log_jacobian(z[d:])))


def log_posterior(train, psi, prior=PsiPrior()):
    """Log posterior density of ``psi`` in (log theta, p) coordinates, up to a constant."""
    if not prior.contains(psi):
        return -np.inf
    return _Target(train, prior).loglik(psi.theta, psi.p)


# ------------------------------------------------------------------ samplers


def sample_psi(train, prior=PsiPrior(), config=MCMCConfig(), seed=0, initial=None):
    """Draw ``config.M`` correlation-parameter values from the posterior.

    With ``config.mode == "map"`` a single multi-start MAP estimate is
    returned instead (M = 1).
    """
    if config.mode == "map":
        return map_psi(train, prior, config.map_starts, seed)
    rng = np.random.default_rng(seed)
    target = _Target(train, prior)
    d = train.d
    if initial is None:
        initial = prior.center(d)
    p0 = np.clip(initial.p, 1.0 + 1e-9, 2.0 - 1e-9)
    z = np.concatenate([np.log(initial.theta), np.log(p0 - 1.0) - np.log(2.0 - p0)])
    lp = target.logpost(z)
    steps = np.concatenate([np.full(d, config.step_theta), np.full(d, config.step_p)])
    ncomp = 2 * d

    batch_acc = np.zeros(ncomp)
    for sweep in range(config.burn_in):
        for c in range(ncomp):
            z, lp, acc = _mh_step(target, z, lp, c, steps[c], rng)
            batch_acc[c] += acc
        if config.adapt and (sweep + 1) % _ADAPT_BATCH == 0:
            rate = batch_acc / _ADAPT_BATCH
            steps = steps * np.exp(2.0 * (rate - TARGET_ACCEPTANCE))
            batch_acc[:] = 0.0

    draws = []
    n_acc = 0
    n_prop = 0
    for sweep in range(config.M * config.thin):
        for c in range(ncomp):
            z, lp, acc = _mh_step(target, z, lp, c, steps[c], rng)
            n_acc += acc
            n_prop += 1
        if (sweep + 1) % config.thin == 0:
            theta, p = _to_psi(z, d)
            draws.append(CorrelationParams(theta, p))
    rate = n_acc / n_prop if n_prop else 0.0
    notes = ()
    if not 0.05 <= rate <= 0.95:
        notes = (f"MCMC acceptance rate {rate:.3f} outside [0.05, 0.95]",)
        log.warning(notes[0])
    return PsiSample(tuple(draws), rate, int(seed) if np.isscalar(seed) else -1, notes)


def _mh_step(target, z, lp, c, step, rng):
    eps = rng.standard_normal()
    prop = z.copy()
    prop[c] += step * eps
    lp_prop = target.logpost(prop)
    if lp_prop - lp >= np.log(rng.random()) or (lp_prop == lp):
        return prop, lp_prop, 1
    return z, lp, 0


def map_psi(train, prior=PsiPrior(), starts=8, seed=0):
    """Multi-start bounded quasi-Newton maximization of the log posterior."""
    rng = np.random.default_rng(seed)
    target = _Target(train, prior)
    d = train.d
    lo, hi = prior.log_theta_bounds
    bounds = [(lo, hi)] * d + [(1.0, 2.0)] * d

    def negpost(v):
        val = target.loglik(np.exp(v[:d]), v[d:])
        return -val if np.isfinite(val) else 1e300

    x0s = [np.concatenate([np.full(d, 0.5 * (lo + hi)), np.full(d, 1.5)])]
    for _ in range(starts - 1):
        x0s.append(np.concatenate([rng.uniform(lo, hi, d), rng.uniform(1, 2, d)]))
    best = None
    for x0 in x0s:
        res = minimize(negpost, x0, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    v = np.clip(best.x, [b[0] for b in bounds], [b[1] for b in bounds])
    psi = CorrelationParams(np.exp(v[:d]), v[d:])
    return PsiSample((psi,), 1.0, int(seed) if np.isscalar(seed) else -1)


# --------------------------------------------------------------- prediction


@dataclass(frozen=True, eq=False)
class DrawStack:
    """Per-draw conditional quantities packed as arrays for the kernels."""

    thetas: np.ndarray
    ps: np.ndarray
    mus: np.ndarray
    sigma2s: np.ndarray
    coefs: np.ndarray
    chols: np.ndarray
    ones_solved: np.ndarray
    one_r_one: np.ndarray
    jitters: np.ndarray

    @property
    def M(self):
        return self.thetas.shape[0]


def stack_draws(train, psis):
    states = [conditional_state(train, psi, factorize(train, psi)) for psi in psis.draws]
    return DrawStack(
        thetas=np.ascontiguousarray(psis.thetas),
        ps=np.ascontiguousarray(psis.ps),
        mus=np.array([s.mu for s in states]),
        sigma2s=np.array([s.sigma2 for s in states]),
        coefs=np.ascontiguousarray([s.coef for s in states]),
        chols=np.ascontiguousarray([s.chol for s in states]),
        ones_solved=np.ascontiguousarray([s.ones_solved for s in states]),
        one_r_one=np.array([s.one_r_one for s in states]),
        jitters=np.array([s.jitter for s in states]),
    )


def mixture_predict(xstar, train, psis):
    """Model-averaged predictive mean and variance at a single point."""
    if psis.M < 1:
        raise InvalidArgumentError("need at least one draw")
    xs = train.scale(np.atleast_2d(np.asarray(xstar, dtype=float)))
    per = []
    for psi in psis.draws:
        state = conditional_state(train, psi)
        m, v = predict_arrays(xs, train, psi, state)
        per.append((float(m[0]), float(v[0])))
    means = np.array([m for m, _ in per])
    vars_ = np.array([v for _, v in per])
    var = vars_.mean()
    if len(per) > 1:
        var += means.var(ddof=1)
    return MixturePrediction(float(means.mean()), float(var), tuple(per))


class Surrogate:
    """A fitted GP: training data plus posterior draws, ready for batch prediction."""

    def __init__(self, train, psis):
        self.train = train
        self.psis = psis
        self.draws = stack_draws(train, psis)

    @property
    def max_jitter(self):
        return float(self.draws.jitters.max())

    def predict(self, X, want_var=True):
        """Mixture mean and variance arrays at simulator-unit points ``X``."""
        Xs = self.train.scale(np.atleast_2d(np.asarray(X, dtype=float)))
        return kernels.mixture_moments(Xs, self.train.scaled, self.draws, want_var)


def fit_surrogate(train, prior=PsiPrior(), config=MCMCConfig(), seed=0):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        psis = sample_psi(train, prior, config, seed)
    return Surrogate(train, psis)
