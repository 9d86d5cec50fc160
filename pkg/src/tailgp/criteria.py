"""Acquisition criteria for contour-targeted sequential design.

Both criteria consume the model-averaged predictive mean and variance
and are applied to a finite candidate set.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from tailgp.errors import InvalidArgumentError, SelectionError

VARIANCE_FLOOR = 1e-14
EXCLUSION_TOL = 1e-12
_INV_SQRT_2PI = 0.3989422804014327


@dataclass(frozen=True)
class AcquisitionConfig:
    kind: str = "discrepancy"     # "ei" or "discrepancy"
    alpha: float = 1.96
    epsilon: float = 0.0
    target: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ei", "discrepancy"):
            raise InvalidArgumentError(f"acquisition kind must be 'ei' or 'discrepancy', got {self.kind!r}")
        if not self.alpha > 0:
            raise InvalidArgumentError(f"alpha must be > 0, got {self.alpha}")
        if not self.epsilon >= 0:
            raise InvalidArgumentError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass(frozen=True)
class ScoredCandidate:
    index: int
    score: float
    mean: float
    variance: float


def _phi(u):
    return _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def expected_improvement(mean, variance, y_f, alpha=1.96):
    """Closed-form expected contour improvement; vectorized over arrays.

    Zero wherever the variance is below the numerical floor.
    """
    mean = np.asarray(mean, dtype=float)
    v = np.asarray(variance, dtype=float)
    ok = v >= VARIANCE_FLOOR
    sd = np.sqrt(np.where(ok, v, 1.0))
    dm = mean - y_f
    z = -dm / sd
    u1 = z - alpha
    u2 = z + alpha
    dPhi = ndtr(u2) - ndtr(u1)
    phi1 = _phi(u1)
    phi2 = _phi(u2)
    ei = ((alpha**2 * v - dm**2) * dPhi
          + v * ((u2 * phi2 - u1 * phi1) - dPhi)
          + 2.0 * dm * sd * (phi2 - phi1))
    # the closed form can dip a hair below zero by cancellation
    ei = np.where(ok, np.maximum(ei, 0.0), 0.0)
    return ei if ei.ndim else float(ei)


def discrepancy_score(mean, variance, y_f, epsilon=0.0):
    """|m - y_f| / sqrt(v); ``inf`` where the variance is (numerically) zero.

    With ``epsilon > 0`` the expected-discrepancy form
    ``((m - y_f)^2 + epsilon) / v + 1`` is returned instead.
    """
    mean = np.asarray(mean, dtype=float)
    v = np.asarray(variance, dtype=float)
    ok = v >= VARIANCE_FLOOR
    safe = np.where(ok, v, 1.0)
    if epsilon:
        score = ((mean - y_f) ** 2 + epsilon) / safe + 1.0
    else:
        score = np.abs(mean - y_f) / np.sqrt(safe)
    score = np.where(ok, score, np.inf)
    return score if score.ndim else float(score)


def excluded_mask(candidates_scaled, exclusions_scaled, tol=EXCLUSION_TOL):
    """True for candidates within ``tol`` of any excluded point."""
    mask = np.zeros(candidates_scaled.shape[0], dtype=bool)
    for x in np.atleast_2d(exclusions_scaled):
        dist2 = ((candidates_scaled - x) ** 2).sum(axis=1)
        mask |= dist2 <= tol * tol
    return mask


def select_next(means, variances, cfg, excluded=None):
    """Pick the best admissible candidate; ties go to the lowest index.

    ``excluded`` is a boolean mask (e.g. from :func:`excluded_mask`).
    """
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if excluded is None:
        excluded = np.zeros(means.shape, dtype=bool)
    admissible = np.flatnonzero(~np.asarray(excluded, dtype=bool))
    if admissible.size == 0:
        raise SelectionError("no admissible candidate left after exclusions")
    if cfg.kind == "ei":
        scores = np.atleast_1d(expected_improvement(means, variances, cfg.target, cfg.alpha))
        idx = int(admissible[np.argmax(scores[admissible])])
    else:
        # zero-variance candidates score +inf; if every candidate does, the
        # tie goes to the lowest admissible index like any other tie
        scores = np.atleast_1d(discrepancy_score(means, variances, cfg.target, cfg.epsilon))
        idx = int(admissible[np.argmin(scores[admissible])])
    return ScoredCandidate(idx, float(scores[idx]), float(means[idx]), float(variances[idx]))
