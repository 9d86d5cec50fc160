"""Tail probability and quantile estimates from surrogate predictions."""
from dataclasses import dataclass

import numpy as np

from tailgp.errors import InvalidArgumentError

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class TailSpec:
    """Which tail: ``upper`` means Pr(Y > y_f), ``lower`` means Pr(Y < y_f)."""

    direction: str = "upper"
    threshold: float = None
    p_f: float = None

    def __post_init__(self):
        if self.direction not in ("upper", "lower"):
            raise InvalidArgumentError(f"direction must be 'upper' or 'lower', got {self.direction!r}")
        if self.p_f is not None and not 0 < self.p_f < 1:
            raise InvalidArgumentError(f"p_f must lie in (0, 1), got {self.p_f}")


def _beyond(preds, y_f, direction):
    return preds > y_f if direction == "upper" else preds < y_f


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise InvalidArgumentError(f"expected {n} weights, got shape {w.shape}")
    if np.any(w < 0):
        raise InvalidArgumentError("weights must be nonnegative")
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidArgumentError(f"weights sum to {w.sum()!r}, not 1")
    return w


def prob_estimate(preds, y_f, direction="upper", weights=None):
    """Fraction (or weighted fraction) of predictions beyond ``y_f``."""
    preds = np.asarray(preds, dtype=float).ravel()
    if preds.size < 1:
        raise InvalidArgumentError("need at least one prediction")
    hit = _beyond(preds, y_f, direction)
    if weights is None:
        return int(np.count_nonzero(hit)) / preds.size
    w = _check_weights(weights, preds.size)
    return float(np.sum(w[hit]))


def stratified_prob_estimate(sset, preds, y_f, direction="upper"):
    """Sum over strata of stratum weight times within-stratum exceedance fraction."""
    preds = np.asarray(preds, dtype=float).ravel()
    if preds.size != sset.points.shape[0]:
        raise InvalidArgumentError("predictions must align with the stratified set")
    return stratified_fraction(sset.stratum_id, sset.weights, preds, y_f, direction)


def stratified_fraction(stratum_id, weights, preds, y_f, direction="upper"):
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
        raise InvalidArgumentError(f"stratum weights sum to {w.sum()!r}, not 1")
    counts = np.bincount(stratum_id, minlength=w.size)
    if np.any(counts == 0):
        raise InvalidArgumentError(f"strata {np.flatnonzero(counts == 0).tolist()} have no points")
    hits = np.bincount(stratum_id, weights=_beyond(preds, y_f, direction).astype(float),
                       minlength=w.size)
    return float(np.sum(w * hits / counts))


def quantile_estimate(preds, p_f, direction="upper", weights=None):
    """Tightest threshold on the prediction grid whose tail mass is <= ``p_f``.

    Upper tail: the smallest prediction value t with Pr(pred > t) <= p_f.
    Lower tail: the largest value t with Pr(pred < t) <= p_f.  Tail mass
    is computed by :func:`prob_estimate`, so the round trip is exact.
    """
    if not 0 < p_f < 1:
        raise InvalidArgumentError(f"p_f must lie in (0, 1), got {p_f}")
    preds = np.asarray(preds, dtype=float).ravel()
    if weights is not None:
        weights = _check_weights(weights, preds.size)
    grid = np.unique(preds)
    if direction == "lower":
        grid = grid[::-1]

    def ok(t):
        return prob_estimate(preds, t, direction, weights) <= p_f

    # tail mass is monotone along the grid; the last entry always passes
    lo, hi = 0, grid.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(grid[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(grid[lo])
