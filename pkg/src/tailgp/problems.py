"""Built-in benchmark problems and brute-force Monte Carlo truth."""
from dataclasses import dataclass

import numpy as np

from tailgp import estimation
from tailgp.errors import InvalidArgumentError
from tailgp.input_models import InputModel, LogNormal, Normal
from tailgp.sequential import BlackBox

SHORT_COLUMN_NAMES = ("x_m", "x_p", "x_z")


@dataclass(frozen=True)
class ShortColumnSpec:
    b: float = 3.0
    h: float = 10.0

    def __post_init__(self):
        if not (self.b > 0 and self.h > 0):
            raise InvalidArgumentError("short column needs b > 0 and h > 0")


def short_column(x, spec=ShortColumnSpec()):
    """Limit state 1 - 4 x_m / (b h^2 x_z) - x_p^2 / (b^2 h^2 x_z^2).

    Negative values mean failure.  Accepts a single (x_m, x_p, x_z)
    triple or an (N, 3) array.
    """
    x = np.asarray(x, dtype=float)
    xm, xp, xz = x[..., 0], x[..., 1], x[..., 2]
    if np.any(xz <= 0):
        raise InvalidArgumentError("yield stress x_z must be positive")
    b, h = spec.b, spec.h
    y = 1.0 - 4.0 * xm / (b * h**2 * xz) - xp**2 / (b**2 * h**2 * xz**2)
    return float(y) if y.ndim == 0 else y


def short_column_model():
    """Bending moment N(2000, 400), axial force N(500, 100), yield stress lognormal(5, 0.5)."""
    return InputModel((Normal(2000.0, 400.0), Normal(500.0, 100.0), LogNormal(5.0, 0.5)),
                      SHORT_COLUMN_NAMES)


def short_column_box(spec=ShortColumnSpec()):
    return BlackBox(fn=lambda x: short_column(x, spec), d=3, vectorized=True,
                    name="short_column")


def t_transform(x):
    """(x_m / x_z, (x_p / x_z)^2): coordinates where the failure boundary is a line."""
    x = np.asarray(x, dtype=float)
    t1 = x[..., 0] / x[..., 2]
    t2 = (x[..., 1] / x[..., 2]) ** 2
    return np.stack([t1, t2], axis=-1)


def t_boundary(t1, spec=ShortColumnSpec()):
    """t2 on the failure boundary for given t1 (for boundary plots)."""
    b, h = spec.b, spec.h
    return (1.0 - 4.0 * np.asarray(t1, dtype=float) / (b * h**2)) * b**2 * h**2


@dataclass(frozen=True)
class Truth:
    value: float
    se: float
    n: int


def brute_force_truth(box, model, tail, n_big=10**7, seed=0, chunk=10**6):
    """Direct Monte Carlo probability (``tail.threshold``) or quantile (``tail.p_f``).

    Chunks use independent child seed streams; hit counts are summed as
    integers so the probability is exact for the sample drawn.
    """
    from tailgp.input_models import sample
    from tailgp.sequential import evaluate_many

    if n_big < 1:
        raise InvalidArgumentError("n_big must be >= 1")
    sizes = [chunk] * (n_big // chunk) + ([n_big % chunk] if n_big % chunk else [])
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    if tail.threshold is not None:
        hits = 0
        for size, ss in zip(sizes, streams):
            y = evaluate_many(box, sample(model, size, ss))
            hits += int(np.count_nonzero(y > tail.threshold if tail.direction == "upper"
                                         else y < tail.threshold))
        p = hits / n_big
        return Truth(p, float(np.sqrt(p * (1 - p) / n_big)), n_big)
    if tail.p_f is None:
        raise InvalidArgumentError("tail needs a threshold or a p_f")
    ys = np.concatenate([evaluate_many(box, sample(model, size, ss))
                         for size, ss in zip(sizes, streams)])
    q = estimation.quantile_estimate(ys, tail.p_f, tail.direction)
    # order-statistic spread: +/- one binomial sd in rank
    ys.sort()
    k = tail.p_f * n_big if tail.direction == "lower" else (1 - tail.p_f) * n_big
    dk = np.sqrt(n_big * tail.p_f * (1 - tail.p_f))
    lo = ys[int(np.clip(np.floor(k - dk), 0, n_big - 1))]
    hi = ys[int(np.clip(np.ceil(k + dk), 0, n_big - 1))]
    return Truth(q, float(0.5 * (hi - lo)), n_big)
