"""Initial designs, Monte Carlo sets and stratified Monte Carlo sets."""
from dataclasses import dataclass
import itertools

import numpy as np

from tailgp import input_models
from tailgp._io import read_csv, write_csv
from tailgp.errors import InvalidArgumentError
from tailgp.input_models import TwoStratumMixture

STRATIFIED_SIZE_CAP = 10**6


@dataclass(frozen=True, eq=False)
class DesignRegion:
    """Per-dimension box; ``exponential`` dimensions hold log-scale bounds."""

    lower: np.ndarray
    upper: np.ndarray
    transforms: tuple

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        tr = tuple(self.transforms)
        if not (lo.shape == hi.shape and len(tr) == lo.size):
            raise InvalidArgumentError("region bounds and transforms must align")
        if not np.all(lo < hi):
            raise InvalidArgumentError(f"region needs lower < upper, got {lo} / {hi}")
        bad = [t for t in tr if t not in ("identity", "exponential")]
        if bad:
            raise InvalidArgumentError(f"unknown transform(s) {bad}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "transforms", tr)

    @classmethod
    def from_model(cls, model):
        """Mean +/- 3 sd box (log scale for lognormals, data range for empirical)."""
        bounds = [m.design_bounds() for m in model.marginals]
        return cls([b[0] for b in bounds], [b[1] for b in bounds], [b[2] for b in bounds])

    @property
    def d(self):
        return self.lower.size

    def simulator_bounds(self):
        """Box edges in simulator units (exponentiated where needed)."""
        exp = [t == "exponential" for t in self.transforms]
        lo = np.array([np.exp(v) if e else v for v, e in zip(self.lower, exp)])
        hi = np.array([np.exp(v) if e else v for v, e in zip(self.upper, exp)])
        return lo, hi


@dataclass(frozen=True, eq=False)
class StratifiedSet:
    """MC points grouped into 2**d strata with stratum probabilities ``weights``.

    Bit j of ``stratum_id`` is 0 when dimension j was drawn from its lower
    stratum G1 and 1 for the upper stratum G2.
    """

    points: np.ndarray
    stratum_id: np.ndarray
    weights: np.ndarray
    per_stratum_count: int

    def __post_init__(self):
        ids = np.asarray(self.stratum_id, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0):
            raise InvalidArgumentError("stratum weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError(f"stratum weights sum to {w.sum()!r}, not 1")
        counts = np.bincount(ids, minlength=w.size)
        if counts.size != w.size or np.any(counts != self.per_stratum_count):
            raise InvalidArgumentError("every stratum must hold per_stratum_count points")
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))
        object.__setattr__(self, "stratum_id", ids)
        object.__setattr__(self, "weights", w)

    @property
    def n_strata(self):
        return self.weights.size

    def point_weights(self):
        """Per-point weights w_h / n_h (sum to one)."""
        return self.weights[self.stratum_id] / self.per_stratum_count


def random_design(model, n0, seed):
    return input_models.sample(model, n0, seed)


def uniform_lhd(region, n0, seed):
    """Random Latin hypercube mapped uniformly onto ``region``."""
    if n0 < 1:
        raise InvalidArgumentError(f"n0 must be >= 1, got {n0}")
    rng = np.random.default_rng(seed)
    cols = []
    for j in range(region.d):
        u = (rng.permutation(n0) + rng.random(n0)) / n0
        v = region.lower[j] + u * (region.upper[j] - region.lower[j])
        cols.append(np.exp(v) if region.transforms[j] == "exponential" else v)
    return np.column_stack(cols)


def mc_set(model, N, seed):
    return input_models.sample(model, N, seed)


def stratum_weights(natural_ps):
    """Probability of every stratum combination, indexed by ``stratum_id``."""
    d = len(natural_ps)
    w = np.empty(2**d)
    for h, combo in enumerate(itertools.product((0, 1), repeat=d)):
        bits = combo[::-1]  # bit j of h <-> dimension j
        w[h] = np.prod([natural_ps[j] if bits[j] == 0 else 1.0 - natural_ps[j]
                        for j in range(d)])
    return w


def stratified_mc_set(model, per_stratum, seed, cap=STRATIFIED_SIZE_CAP):
    """``per_stratum`` points in each of the 2**d lower/upper combinations."""
    if not all(isinstance(m, TwoStratumMixture) for m in model.marginals):
        raise InvalidArgumentError("every marginal must be a two-stratum mixture")
    if per_stratum < 1:
        raise InvalidArgumentError("per_stratum must be >= 1")
    d = model.d
    n_strata = 2**d
    if n_strata * per_stratum > cap:
        raise InvalidArgumentError(
            f"stratified set of {n_strata} x {per_stratum} points exceeds cap {cap}")
    rng = np.random.default_rng(seed)
    points = np.empty((n_strata * per_stratum, d))
    ids = np.repeat(np.arange(n_strata), per_stratum)
    for h in range(n_strata):
        rows = slice(h * per_stratum, (h + 1) * per_stratum)
        for j, m in enumerate(model.marginals):
            upper = (h >> j) & 1
            points[rows, j] = m.sample_stratum(rng, per_stratum, lower=not upper)
    w = stratum_weights([m.natural_p for m in model.marginals])
    return StratifiedSet(points, ids, w, per_stratum)


# ------------------------------------------------------------------ CSV


def write_design_csv(path, points, names):
    write_csv(path, list(names), np.atleast_2d(points).tolist())


def read_design_csv(path):
    header, rows = read_csv(path)
    return np.array([[float(v) for v in r] for r in rows]), tuple(header)


def write_stratified_csv(path, sset, names):
    rows = [list(p) + [int(h), sset.weights[h]]
            for p, h in zip(sset.points.tolist(), sset.stratum_id)]
    write_csv(path, list(names) + ["stratum_id", "weight"], rows)


def read_stratified_csv(path):
    header, rows = read_csv(path)
    d = len(header) - 2
    arr = np.array([[float(v) for v in r] for r in rows])
    ids = arr[:, d].astype(np.int64)
    n_strata = int(ids.max()) + 1
    w = np.zeros(n_strata)
    w[ids] = arr[:, d + 1]
    counts = np.bincount(ids)
    return StratifiedSet(arr[:, :d], ids, w, int(counts[0])), tuple(header[:d])
