"""Constant-mean GP conditional on fixed power-exponential correlation parameters.

Inputs live in simulator units inside :class:`TrainingSet`; every kernel
evaluation happens on per-dimension affinely scaled coordinates, where
``lower`` maps to 0 and ``upper`` maps to 1.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_triangular

from tailgp.errors import IllConditionedKernelError, InvalidArgumentError
from tailgp.kernels import JITTER_LADDER, cross_corr

DUPLICATE_TOL = 1e-12


def _as_matrix(points):
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return X


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Evaluated design points and their simulator outputs.

    ``lower``/``upper`` define the scaling to internal coordinates.  When
    omitted they default to the per-dimension min/max of ``points``.
    Dimensions flagged in ``log_dims`` are scaled on the log scale, with
    ``lower``/``upper`` given as log-scale bounds.
    """

    points: np.ndarray
    outputs: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    log_dims: np.ndarray = None

    def __post_init__(self):
        X = _as_matrix(self.points)
        y = np.asarray(self.outputs, dtype=float).ravel()
        n, d = X.shape
        if n < 2:
            raise InvalidArgumentError(f"need at least 2 training points, got {n}")
        if y.shape[0] != n:
            raise InvalidArgumentError(f"{n} points but {y.shape[0]} outputs")
        if not np.all(np.isfinite(X)):
            raise InvalidArgumentError("training points must be finite")
        if not np.all(np.isfinite(y)):
            raise InvalidArgumentError("training outputs must be finite")
        logd = np.zeros(d, dtype=bool) if self.log_dims is None else np.asarray(self.log_dims, bool)
        if logd.shape != (d,):
            raise InvalidArgumentError(f"log_dims must have length {d}")
        if np.any(X[:, logd] <= 0):
            raise InvalidArgumentError("log-scaled dimensions need positive inputs")
        object.__setattr__(self, "log_dims", logd)
        Xt = self._native(X)
        lo = Xt.min(axis=0) if self.lower is None else np.asarray(self.lower, float)
        hi = Xt.max(axis=0) if self.upper is None else np.asarray(self.upper, float)
        lo = np.broadcast_to(lo, (d,)).astype(float)
        hi = np.broadcast_to(hi, (d,)).astype(float)
        # a constant column gets unit width so scaling stays finite
        hi = np.where(hi > lo, hi, lo + 1.0)
        object.__setattr__(self, "points", X)
        object.__setattr__(self, "outputs", y)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        pair, dist = closest_pair(self.scaled)
        if dist <= DUPLICATE_TOL:
            raise InvalidArgumentError(
                f"training points {pair[0]} and {pair[1]} coincide "
                f"(scaled distance {dist:.3g})")

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def _native(self, x):
        x = np.asarray(x, dtype=float)
        if not self.log_dims.any():
            return x
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.log_dims, np.log(np.where(self.log_dims, x, 1.0)), x)

    def scale(self, x):
        """Map simulator-unit points to the internal [0, 1] coordinates."""
        return (self._native(x) - self.lower) / (self.upper - self.lower)

    @cached_property
    def scaled(self):
        return self.scale(self.points)

    def augmented(self, x, y):
        """Return a new training set with one more point, same scaling."""
        return TrainingSet(np.vstack([self.points, np.atleast_2d(x)]),
                           np.append(self.outputs, y), self.lower, self.upper, self.log_dims)


def closest_pair(Xs):
    """Indices and Euclidean distance of the closest pair of rows."""
    n = Xs.shape[0]
    if n < 2:
        return (0, 0), np.inf
    D = np.sqrt(((Xs[:, None, :] - Xs[None, :, :]) ** 2).sum(-1))
    D[np.diag_indices(n)] = np.inf
    i, j = np.unravel_index(np.argmin(D), D.shape)
    return (int(min(i, j)), int(max(i, j))), float(D[i, j])


@dataclass(frozen=True, eq=False)
class CorrelationParams:
    """Per-dimension range ``theta`` (> 0) and smoothness ``p`` in [1, 2]."""

    theta: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if theta.shape != p.shape or theta.ndim != 1:
            raise InvalidArgumentError("theta and p must be 1-d of equal length")
        if not np.all(np.isfinite(theta)) or np.any(theta <= 0):
            raise InvalidArgumentError(f"theta must be finite and > 0, got {theta}")
        if not np.all((p >= 1.0) & (p <= 2.0)):
            raise InvalidArgumentError(f"p must lie in [1, 2], got {p}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "p", p)

    @property
    def d(self):
        return self.theta.shape[0]

    def __eq__(self, other):
        return (isinstance(other, CorrelationParams)
                and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.p, other.p))

    __hash__ = None


@dataclass(frozen=True)
class Prediction:
    mean: float
    variance: float
    dof: int


@dataclass(frozen=True, eq=False)
class KernelFactorization:
    corr: np.ndarray
    chol: np.ndarray
    jitter: float


def _theta_p(psi):
    if isinstance(psi, CorrelationParams):
        return psi.theta, psi.p
    theta, p = psi
    return np.atleast_1d(np.asarray(theta, float)), np.atleast_1d(np.asarray(p, float))


def correlation(x, x2, psi):
    """Power-exponential correlation between two scaled points.

    ``psi`` is a :class:`CorrelationParams` or a raw ``(theta, p)`` pair;
    the raw form admits the ``theta = 0`` limit.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise InvalidArgumentError("correlation inputs must be finite")
    theta, p = _theta_p(psi)
    return float(np.exp(-np.sum(theta * np.abs(x - x2) ** p)))


def correlation_matrix(Xs, psi):
    theta, p = _theta_p(psi)
    R = cross_corr(Xs, Xs, theta, p)
    # exact symmetry and unit diagonal
    R = 0.5 * (R + R.T)
    np.fill_diagonal(R, 1.0)
    return R


def factorize(train, psi):
    """Cholesky-factorize the training correlation matrix.

    Jitter climbs the ladder 0, 1e-12, ..., 1e-6 until the factorization
    succeeds; the value used is kept on the result.
    """
    R = correlation_matrix(train.scaled, psi)
    eye = np.eye(train.n)
    for jitter in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(R + jitter * eye if jitter else R)
        except np.linalg.LinAlgError:
            continue
        return KernelFactorization(R, L, jitter)
    pair, dist = closest_pair(train.scaled)
    raise IllConditionedKernelError(
        f"correlation matrix not factorizable at jitter {JITTER_LADDER[-1]:g}; "
        f"closest points are {pair[0]} and {pair[1]} (scaled distance {dist:.3g})",
        pair=pair, distance=dist)


def _solve(fac, b):
    L = fac.chol
    z = solve_triangular(L, b, lower=True, check_finite=False)
    return solve_triangular(L.T, z, lower=False, check_finite=False)


def profile_mean(train, fac):
    """Generalized least squares estimate of the constant mean."""
    ones = np.ones(train.n)
    Ri1 = _solve(fac, ones)
    return float(Ri1 @ train.outputs / (Ri1 @ ones))


def profile_variance(train, fac, mu):
    resid = train.outputs - mu
    q = float(resid @ _solve(fac, resid)) / (train.n - 1)
    return max(q, 0.0)


@dataclass(frozen=True, eq=False)
class ConditionalState:
    """Quantities reused by every prediction for one parameter draw."""

    mu: float
    sigma2: float
    coef: np.ndarray         # R^-1 (y - 1 mu)
    ones_solved: np.ndarray  # L^-1 1
    one_r_one: float         # 1' R^-1 1
    chol: np.ndarray
    jitter: float


def conditional_state(train, psi, fac=None):
    if fac is None:
        fac = factorize(train, psi)
    mu = profile_mean(train, fac)
    sigma2 = profile_variance(train, fac, mu)
    a = solve_triangular(fac.chol, np.ones(train.n), lower=True, check_finite=False)
    coef = _solve(fac, train.outputs - mu)
    return ConditionalState(mu, sigma2, coef, a, float(a @ a), fac.chol, fac.jitter)


def predict_arrays(Xstar_scaled, train, psi, state):
    """Vectorized conditional mean/variance at already-scaled points."""
    theta, p = _theta_p(psi)
    r = cross_corr(Xstar_scaled, train.scaled, theta, p)
    mean = state.mu + r @ state.coef
    W = solve_triangular(state.chol, r.T, lower=True, check_finite=False)
    q = np.einsum("ij,ij->j", W, W)
    u = state.ones_solved @ W
    var = state.sigma2 * (1.0 - q + (1.0 - u) ** 2 / state.one_r_one)
    # roundoff near training points can dip just below zero
    return mean, np.maximum(var, 0.0)


def conditional_predict(xstar, train, psi, fac=None):
    """Student-t conditional predictive (mean, variance, n-1 dof) at ``xstar``."""
    state = conditional_state(train, psi, fac)
    xs = train.scale(np.atleast_2d(np.asarray(xstar, dtype=float)))
    mean, var = predict_arrays(xs, train, psi, state)
    return Prediction(float(mean[0]), float(var[0]), train.n - 1)
