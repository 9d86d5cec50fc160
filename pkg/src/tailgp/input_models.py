"""Random-input distributions for X: independent marginals, empirical data,
two-stratum tail-over-sampling mixtures and censored Weibull tail fits."""
from dataclasses import dataclass, field
import csv

import numpy as np
from scipy import stats
from scipy.optimize import minimize

from tailgp.errors import FitError, InvalidArgumentError

MIN_STRATUM = 1


class Marginal:
    """One-dimensional input distribution."""

    kind = "abstract"

    def sample(self, rng, n):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, q):
        raise NotImplementedError

    def design_bounds(self):
        """Design-region box ``(lower, upper, transform)`` for this input."""
        raise NotImplementedError


@dataclass(frozen=True)
class Normal(Marginal):
    mean: float
    sd: float
    kind = "normal"

    def __post_init__(self):
        if not self.sd > 0:
            raise InvalidArgumentError(f"normal sd must be > 0, got {self.sd}")

    def sample(self, rng, n):
        return rng.normal(self.mean, self.sd, n)

    def cdf(self, x):
        return stats.norm.cdf(x, self.mean, self.sd)

    def ppf(self, q):
        return stats.norm.ppf(q, self.mean, self.sd)

    def design_bounds(self):
        return self.mean - 3 * self.sd, self.mean + 3 * self.sd, "identity"


@dataclass(frozen=True)
class LogNormal(Marginal):
    """Lognormal with ``log_mean``/``log_sd`` the parameters of log(X)."""

    log_mean: float
    log_sd: float
    kind = "lognormal"

    def __post_init__(self):
        if not self.log_sd > 0:
            raise InvalidArgumentError(f"lognormal log_sd must be > 0, got {self.log_sd}")

    def sample(self, rng, n):
        return np.exp(rng.normal(self.log_mean, self.log_sd, n))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return stats.norm.cdf(np.log(np.where(x > 0, x, 0.0)), self.log_mean, self.log_sd)

    def ppf(self, q):
        return np.exp(stats.norm.ppf(q, self.log_mean, self.log_sd))

    def design_bounds(self):
        return (self.log_mean - 3 * self.log_sd, self.log_mean + 3 * self.log_sd,
                "exponential")


@dataclass(frozen=True, eq=False)
class Empirical(Marginal):
    data: np.ndarray
    kind = "empirical"

    def __post_init__(self):
        data = np.sort(np.asarray(self.data, dtype=float).ravel())
        if data.size == 0 or not np.all(np.isfinite(data)):
            raise InvalidArgumentError("empirical data must be nonempty and finite")
        object.__setattr__(self, "data", data)

    def sample(self, rng, n):
        return self.data[rng.integers(0, self.data.size, n)]

    def cdf(self, x):
        return np.searchsorted(self.data, x, side="right") / self.data.size

    def ppf(self, q):
        return np.quantile(self.data, q, method="inverted_cdf")

    def design_bounds(self):
        return float(self.data[0]), float(self.data[-1]), "identity"


@dataclass(frozen=True, eq=False)
class TwoStratumMixture(Marginal):
    """H(x) = p1 * G1(x) + p2 * G2(x) with G1 the lower stratum.

    ``natural_p`` is the probability of the lower stratum under the true
    input distribution; stratified estimators reweight with it.
    """

    lower_part: Marginal
    upper_part: Marginal
    p1: float
    natural_p: float = None
    kind = "two_stratum_mixture"

    def __post_init__(self):
        if not 0 < self.p1 < 1:
            raise InvalidArgumentError(f"p1 must lie in (0, 1), got {self.p1}")
        if self.natural_p is None:
            object.__setattr__(self, "natural_p", self.p1)
        if not 0 < self.natural_p < 1:
            raise InvalidArgumentError(f"natural_p must lie in (0, 1), got {self.natural_p}")

    @property
    def p2(self):
        return 1.0 - self.p1

    def sample(self, rng, n):
        low = rng.random(n) < self.p1
        out = np.empty(n)
        k = int(low.sum())
        out[low] = self.lower_part.sample(rng, k)
        out[~low] = self.upper_part.sample(rng, n - k)
        return out

    def sample_stratum(self, rng, n, lower):
        part = self.lower_part if lower else self.upper_part
        return part.sample(rng, n)

    def cdf(self, x):
        return self.p1 * self.lower_part.cdf(x) + self.p2 * self.upper_part.cdf(x)

    def ppf(self, q):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        lo, hi, _ = self.design_bounds()
        out = np.empty_like(q)
        for i, qi in enumerate(q):
            a, b = lo, hi
            for _ in range(200):
                mid = 0.5 * (a + b)
                if self.cdf(mid) >= qi:
                    b = mid
                else:
                    a = mid
            out[i] = b
        return out

    def design_bounds(self):
        lo = min(_lower_edge(self.lower_part), _lower_edge(self.upper_part))
        hi = max(_upper_edge(self.lower_part), _upper_edge(self.upper_part))
        return lo, hi, "identity"


def _lower_edge(m):
    lo, hi, tr = m.design_bounds()
    return float(np.exp(lo)) if tr == "exponential" else lo


def _upper_edge(m):
    lo, hi, tr = m.design_bounds()
    return float(np.exp(hi)) if tr == "exponential" else hi


@dataclass(frozen=True, eq=False)
class InputModel:
    marginals: tuple
    names: tuple = None

    def __post_init__(self):
        marginals = tuple(self.marginals)
        if len(marginals) < 1:
            raise InvalidArgumentError("an input model needs at least one marginal")
        names = self.names or tuple(f"x_{j + 1}" for j in range(len(marginals)))
        if len(names) != len(marginals):
            raise InvalidArgumentError("one name per marginal required")
        object.__setattr__(self, "marginals", marginals)
        object.__setattr__(self, "names", tuple(names))

    @property
    def d(self):
        return len(self.marginals)


def sample(model, n, seed):
    """``n`` i.i.d. rows from the product of the model's marginals."""
    if n < 1:
        raise InvalidArgumentError(f"sample size must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return np.column_stack([m.sample(rng, n) for m in model.marginals])


def build_tail_mixture(data, split_fraction, p1):
    """Split data at its ``split_fraction`` quantile into two empirical strata."""
    if not 0 < split_fraction < 1:
        raise InvalidArgumentError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    if not 0 < p1 < 1:
        raise InvalidArgumentError(f"p1 must lie in (0, 1), got {p1}")
    data = np.sort(np.asarray(data, dtype=float).ravel())
    k = int(np.floor(split_fraction * data.size + 1e-9))
    if k < MIN_STRATUM or data.size - k < MIN_STRATUM:
        raise InvalidArgumentError(
            f"strata of sizes {k} and {data.size - k}; each needs at least "
            f"{MIN_STRATUM} point(s)")
    return TwoStratumMixture(Empirical(data[:k]), Empirical(data[k:]), p1,
                             natural_p=split_fraction)


def read_values_csv(path, header=None):
    """Read one value per line from the first column of a CSV file.

    ``header=None`` skips the first line only when it is not a number.
    """
    values = []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        if header:
            next(rows, None)
        for row in rows:
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[0]))
            except ValueError:
                if header is None and not values:
                    header = True       # a text first line is a header
                    continue
                raise
    if not values:
        raise InvalidArgumentError(f"no values in {path}")
    return np.array(values)


# ------------------------------------------------------------ censored Weibull


@dataclass(frozen=True)
class CensoredWeibullFit:
    shape: float
    scale: float
    location: float
    cutoff_value: float
    n_complete: int
    n_censored: int
    log_likelihood: float
    start_log_likelihoods: tuple = field(default=(), repr=False)


def _censored_loglik(complete, n_cens, cutoff, shape, scale, loc):
    z = (complete - loc) / scale
    if np.any(z <= 0):
        return -np.inf
    zc = (cutoff - loc) / scale
    ll = np.sum(np.log(shape / scale) + (shape - 1) * np.log(z) - z**shape)
    return ll - n_cens * zc**shape


def fit_censored_weibull(data, lower_fraction=0.1, n_params=2, starts=8, seed=0):
    """Weibull MLE on the lower tail with everything above it right censored.

    The lowest ``lower_fraction`` of the data are complete observations;
    the rest are censored at the largest complete value.  ``n_params=3``
    frees a location below the data minimum.
    """
    if n_params not in (2, 3):
        raise InvalidArgumentError("n_params must be 2 or 3")
    if not 0 < lower_fraction <= 1:
        raise InvalidArgumentError("lower_fraction must lie in (0, 1]")
    x = np.sort(np.asarray(data, dtype=float).ravel())
    k = int(np.floor(lower_fraction * x.size + 1e-9))
    if k < 10:
        raise InvalidArgumentError(f"only {k} points below the cutoff; need >= 10")
    complete = x[:k]
    cutoff = float(complete[-1])
    n_cens = x.size - k
    if np.ptp(complete) == 0:
        raise FitError("all complete observations are identical; likelihood is degenerate")
    if n_params == 2 and complete[0] <= 0:
        raise InvalidArgumentError("2-parameter Weibull needs positive data")
    xmin = float(complete[0])
    spread = float(np.ptp(complete))

    def unpack(v):
        shape, scale = np.exp(v[0]), np.exp(v[1])
        loc = 0.0 if n_params == 2 else xmin - np.exp(v[2])
        return shape, scale, loc

    def nll(v):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            ll = _censored_loglik(complete, n_cens, cutoff, *unpack(v))
        return -ll if np.isfinite(ll) else 1e300

    rng = np.random.default_rng(seed)
    # moment-ish anchor from the full data
    ref_scale = float(np.mean(x)) if n_params == 2 else float(np.mean(x) - xmin + spread)
    x0s = []
    for i in range(starts):
        shape0 = 2.0 if i == 0 else rng.uniform(0.5, 8.0)
        scale0 = ref_scale * (1.0 if i == 0 else rng.uniform(0.5, 2.0))
        v = [np.log(shape0), np.log(max(scale0, 1e-12))]
        if n_params == 3:
            gap = 0.5 * max(xmin, spread) if i == 0 else rng.uniform(0.05, 2.0) * max(spread, 1e-12)
            v.append(np.log(max(gap, 1e-12)))
        x0s.append(np.array(v))

    best = None
    start_lls = []
    for v0 in x0s:
        start_lls.append(-nll(v0))
        res = minimize(nll, v0, method="L-BFGS-B",
                       bounds=[(-5, 5), (np.log(ref_scale) - 15, np.log(ref_scale) + 15)]
                       + ([(np.log(spread) - 20, np.log(max(xmin, spread)) + 5)]
                          if n_params == 3 else []))
        if best is None or res.fun < best.fun:
            best = res
    shape, scale, loc = unpack(best.x)
    if not (best.success and np.isfinite(best.fun) and best.fun < 1e299):
        raise FitError(f"censored Weibull fit did not converge: {best.message}",
                       best={"shape": shape, "scale": scale, "location": loc})
    return CensoredWeibullFit(float(shape), float(scale), float(loc), cutoff, k, n_cens,
                              float(-best.fun), tuple(start_lls))
