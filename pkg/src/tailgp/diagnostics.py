"""Convergence diagnostic: spread of the negative absolute standardized
discrepancy over the MC set, iteration by iteration."""
from dataclasses import dataclass, field

import numpy as np

from tailgp._io import read_csv, write_csv
from tailgp.criteria import VARIANCE_FLOOR

DEFAULT_THRESHOLD = -10.0
DEFAULT_WINDOW = 2
SUMMARY_HEADER = ["iteration", "min", "q25", "median", "q75", "max", "n_excluded"]


@dataclass(frozen=True)
class DiagnosticSummary:
    iteration: int
    min: float
    q25: float
    median: float
    q75: float
    max: float
    n_excluded: int

    def row(self):
        return [self.iteration, self.min, self.q25, self.median, self.q75, self.max,
                self.n_excluded]


@dataclass
class DiagnosticTrace:
    summaries: list = field(default_factory=list)
    criterion: str = "discrepancy"

    @property
    def medians(self):
        return [s.median for s in self.summaries]

    @property
    def off_criterion(self):
        # the diagnostic is defined for discrepancy-driven searches
        return self.criterion != "discrepancy"


@dataclass(frozen=True)
class FlagResult:
    flag: bool
    note: str = ""

    def __bool__(self):
        return self.flag


def standardized_discrepancy(means, variances, y_f):
    """s(x) = -|m - y_f| / sqrt(v) and the mask of points with usable variance."""
    means = np.asarray(means, dtype=float)
    v = np.asarray(variances, dtype=float)
    ok = v >= VARIANCE_FLOOR
    s = -np.abs(means[ok] - y_f) / np.sqrt(v[ok])
    return s, ok


def diagnostic_step(means, variances, y_f, iteration=0):
    """Five-number summary of s(x) over the MC set; zero-variance points are counted, not used."""
    s, ok = standardized_discrepancy(means, variances, y_f)
    n_excl = int(ok.size - ok.sum())
    if s.size == 0:
        nan = float("nan")
        return DiagnosticSummary(iteration, nan, nan, nan, nan, nan, n_excl)
    q = np.quantile(s, [0.0, 0.25, 0.5, 0.75, 1.0])
    return DiagnosticSummary(iteration, *map(float, q), n_excl)


def convergence_flag(trace, threshold=DEFAULT_THRESHOLD, window=DEFAULT_WINDOW):
    """Advisory: median below ``threshold`` for each of the last ``window`` iterations."""
    medians = trace.medians if isinstance(trace, DiagnosticTrace) else list(trace)
    if len(medians) < window:
        return FlagResult(False, f"not enough data: {len(medians)} < window {window}")
    recent = medians[-window:]
    return FlagResult(bool(all(m < threshold for m in recent)))


def write_summary_csv(path, trace):
    write_csv(path, SUMMARY_HEADER, [s.row() for s in trace.summaries])


def read_summary_csv(path):
    header, rows = read_csv(path)
    if header != SUMMARY_HEADER:
        raise ValueError(f"{path}: unexpected header {header}")
    out = DiagnosticTrace()
    for r in rows:
        out.summaries.append(DiagnosticSummary(int(r[0]), *map(float, r[1:6]), int(r[6])))
    return out


POINTS_HEADER = ["iteration", "index", "value"]


def write_points_csv(path, values):
    """Long-format per-point file; ``values[i]`` holds iteration i + 1 (NaN = excluded)."""
    def rows():
        for it, arr in enumerate(values, 1):
            for k, v in enumerate(arr):
                yield [it, k, None if np.isnan(v) else v]
    write_csv(path, POINTS_HEADER, rows())


def read_points_csv(path):
    header, rows = read_csv(path)
    if header != POINTS_HEADER:
        raise ValueError(f"{path}: unexpected header {header}")
    return summaries_from_points(rows)


def summaries_from_points(rows):
    """Rebuild per-iteration summaries from long-format (iteration, index, s) rows.

    Blank or NaN values mark excluded (zero-variance) points.
    """
    by_iter = {}
    for it, _, s in rows:
        by_iter.setdefault(int(it), []).append(float("nan") if s in ("", None) else float(s))
    trace = DiagnosticTrace()
    for it in sorted(by_iter):
        s = np.array(by_iter[it])
        finite = s[np.isfinite(s)]
        n_excl = int(s.size - finite.size)
        if finite.size:
            q = np.quantile(finite, [0.0, 0.25, 0.5, 0.75, 1.0])
            trace.summaries.append(DiagnosticSummary(it, *map(float, q), n_excl))
        else:
            nan = float("nan")
            trace.summaries.append(DiagnosticSummary(it, nan, nan, nan, nan, nan, n_excl))
    return trace
