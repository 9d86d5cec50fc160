"""Sequential tail-probability and quantile estimation loops.

Each iteration refits the surrogate, predicts the frozen MC set, forms the
current estimate and, except on the last iteration, evaluates the black box
at the best candidate and adds it to the training set.
"""
from dataclasses import asdict, dataclass, field, replace
import logging
import math
import shlex
import subprocess
import zlib

import numpy as np

from tailgp import designs, estimation
from tailgp import diagnostics as diag
from tailgp._io import fmt, read_csv, write_csv
from tailgp.criteria import AcquisitionConfig, excluded_mask, select_next
from tailgp.errors import (ConfigError, EvaluationError, IllConditionedKernelError,
                           InvalidArgumentError, RunAborted, SelectionError)
from tailgp.estimation import TailSpec
from tailgp.gp_core import TrainingSet
from tailgp.posterior import MCMCConfig, PsiPrior, fit_surrogate

log = logging.getLogger(__name__)

DETERMINISM_RTOL = 1e-9
STREAMS = ("design", "mc", "candidate", "chain", "check")


# ---------------------------------------------------------------- black box


@dataclass(frozen=True)
class BlackBox:
    """An in-process function or an external command obeying the line protocol.

    External commands get one line of ``d`` comma-separated values on
    stdin and must print a single number and exit 0.
    """

    fn: object = None
    command: object = None
    d: int = 1
    vectorized: bool = False
    timeout: float = 300.0
    name: str = "black_box"
    units: str = ""

    def __post_init__(self):
        if (self.fn is None) == (self.command is None):
            raise InvalidArgumentError("black box needs exactly one of fn or command")
        if self.d < 1:
            raise InvalidArgumentError(f"dimension must be >= 1, got {self.d}")
        if not self.timeout > 0:
            raise InvalidArgumentError("timeout must be positive")


def _argv(command):
    return shlex.split(command) if isinstance(command, str) else list(command)


def _call_external(box, x):
    line = ",".join(fmt(v) for v in x) + "\n"
    try:
        proc = subprocess.run(_argv(box.command), input=line, capture_output=True,
                              text=True, timeout=box.timeout)
    except subprocess.TimeoutExpired as exc:
        raise EvaluationError(f"{box.name}: timed out after {box.timeout} s at {x.tolist()}") from exc
    except OSError as exc:
        raise EvaluationError(f"{box.name}: could not start command: {exc}") from exc
    if proc.returncode != 0:
        raise EvaluationError(f"{box.name}: exit status {proc.returncode} at {x.tolist()}: "
                              f"{proc.stderr.strip()[:200]}")
    out = proc.stdout.strip()
    try:
        return float(out)
    except ValueError:
        raise EvaluationError(f"{box.name}: unparsable output {out[:80]!r}") from None


def evaluate(box, x):
    """Simulator output at one point (simulator units)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.size != box.d:
        raise InvalidArgumentError(f"{box.name} expects {box.d} inputs, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("evaluation point must be finite")
    if box.command is not None:
        y = _call_external(box, x)
    else:
        try:
            y = box.fn(x[None, :] if box.vectorized else x)
            y = float(np.asarray(y, dtype=float).ravel()[0])
        except (EvaluationError, InvalidArgumentError):
            raise
        except Exception as exc:
            raise EvaluationError(f"{box.name}: {exc}") from exc
    if not math.isfinite(y):
        raise EvaluationError(f"{box.name}: non-finite output {y} at {x.tolist()}")
    return y


def evaluate_many(box, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if box.fn is not None and box.vectorized:
        if X.shape[1] != box.d:
            raise InvalidArgumentError(f"{box.name} expects {box.d} inputs, got {X.shape[1]}")
        y = np.asarray(box.fn(X), dtype=float).reshape(-1)
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise EvaluationError(f"{box.name}: non-finite output at {X[bad].tolist()}")
        return y
    return np.array([evaluate(box, x) for x in X])


# ------------------------------------------------------------------- config


def stream_seed(root, name, *keys):
    """Integer seed for the named stream ``name`` (plus keys) under ``root``."""
    ss = np.random.SeedSequence(int(root), spawn_key=(zlib.crc32(name.encode()),) + tuple(
        int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "probability"              # or "quantile"
    n0: int = 20
    n_plus: int = 20
    tail: TailSpec = TailSpec("lower", threshold=0.0)
    acquisition: AcquisitionConfig = AcquisitionConfig()
    design: str = "uniform_lhd"            # or "random"
    mc_size: int = 100_000
    stratified: bool = False
    per_stratum: int = 50
    candidate_policy: str = "fresh"        # or "mc_set"
    candidate_size: int = 10_000
    mcmc: MCMCConfig = MCMCConfig()
    prior: PsiPrior = PsiPrior()
    seed: int = 0
    repeat: int = 0
    diagnostic_size: int = 10_000          # 0 turns the diagnostic off
    diagnostic_points: bool = False        # keep per-point values, not just summaries
    determinism_check: bool = True

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self):
        out = []
        if self.task not in ("probability", "quantile"):
            out.append(f"task: must be 'probability' or 'quantile', got {self.task!r}")
        if self.n0 < 2:
            out.append(f"n0: must be >= 2, got {self.n0}")
        if self.n_plus < 0:
            out.append(f"n_plus: must be >= 0, got {self.n_plus}")
        if self.task == "probability" and self.tail.threshold is None:
            out.append("tail.threshold: required for a probability run")
        if self.task == "quantile" and self.tail.p_f is None:
            out.append("tail.p_f: required for a quantile run")
        if self.design not in ("random", "uniform_lhd"):
            out.append(f"design: must be 'random' or 'uniform_lhd', got {self.design!r}")
        if self.mc_size < 1:
            out.append(f"mc_size: must be >= 1, got {self.mc_size}")
        if self.per_stratum < 1:
            out.append(f"per_stratum: must be >= 1, got {self.per_stratum}")
        if self.candidate_policy not in ("fresh", "mc_set"):
            out.append(f"candidate_policy: must be 'fresh' or 'mc_set', got {self.candidate_policy!r}")
        if self.candidate_size < 1:
            out.append(f"candidate_size: must be >= 1, got {self.candidate_size}")
        if self.diagnostic_size < 0:
            out.append(f"diagnostic_size: must be >= 0, got {self.diagnostic_size}")
        if self.seed < 0:
            out.append(f"seed: must be >= 0, got {self.seed}")
        if self.repeat < 0:
            out.append(f"repeat: must be >= 0, got {self.repeat}")
        return out

    def seeds(self):
        """The per-run integer seeds, one per named stream."""
        return {name: stream_seed(self.seed, name, self.repeat) for name in STREAMS}

    def chain_seed(self, iteration):
        return stream_seed(self.seed, "chain", self.repeat, iteration)


# -------------------------------------------------------------------- trace


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    n: int
    estimate: float
    target: float
    point: tuple = None         # None on the final iteration
    y: float = None
    criterion_value: float = None
    jitter: float = 0.0
    acceptance_rate: float = float("nan")


@dataclass
class Trace:
    d: int
    criterion: str
    repeat: int = 0
    records: list = field(default_factory=list)
    diagnostics: diag.DiagnosticTrace = None
    evaluations: int = 0
    seeds: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    diagnostic_values: list = field(default_factory=list)   # per iteration, NaN = excluded

    @property
    def estimates(self):
        return [r.estimate for r in self.records]

    @property
    def final_estimate(self):
        return self.records[-1].estimate if self.records else None

    def header(self):
        return (["repeat", "iteration", "n", "estimate", "criterion"]
                + [f"x_{j + 1}" for j in range(self.d)]
                + ["y", "criterion_value", "target", "jitter", "acceptance_rate"])

    def rows(self):
        for r in self.records:
            point = list(r.point) if r.point is not None else [None] * self.d
            yield ([self.repeat, r.iteration, r.n, r.estimate, self.criterion] + point
                   + [r.y, r.criterion_value, r.target, r.jitter, r.acceptance_rate])


def write_trace_csv(path, trace):
    write_csv(path, trace.header(), trace.rows())


def read_trace_csv(path):
    """Rows of a trace CSV as dicts (blank fields become None)."""
    header, rows = read_csv(path)
    out = []
    for r in rows:
        rec = {}
        for k, v in zip(header, r):
            if k == "criterion":
                rec[k] = v
            elif v == "":
                rec[k] = None
            elif k in ("repeat", "iteration", "n"):
                rec[k] = int(v)
            else:
                rec[k] = float(v)
        out.append(rec)
    return out


# --------------------------------------------------------------------- runs


@dataclass(frozen=True, eq=False)
class _Frozen:
    """Everything fixed for the duration of one run."""

    X0: np.ndarray
    mc_points: np.ndarray
    mc_weights: np.ndarray       # None for a plain MC set
    sset: object
    candidates: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    log_dims: np.ndarray


def prepare(cfg, model, seeds=None):
    """Initial design, MC set and candidate set for one run."""
    seeds = seeds or cfg.seeds()
    region = designs.DesignRegion.from_model(model)
    if cfg.design == "random":
        X0 = designs.random_design(model, cfg.n0, seeds["design"])
    else:
        X0 = designs.uniform_lhd(region, cfg.n0, seeds["design"])
    sset = None
    weights = None
    if cfg.stratified:
        sset = designs.stratified_mc_set(model, cfg.per_stratum, seeds["mc"])
        mc_points = sset.points
        weights = sset.point_weights()
    else:
        mc_points = designs.mc_set(model, cfg.mc_size, seeds["mc"])
    if cfg.candidate_policy == "mc_set":
        candidates = mc_points
    else:
        candidates = designs.mc_set(model, cfg.candidate_size, seeds["candidate"])
    log_dims = np.array([t == "exponential" for t in region.transforms])
    return _Frozen(X0, mc_points, weights, sset, candidates, region.lower, region.upper, log_dims)


def _estimate(cfg, frozen, means):
    tail = cfg.tail
    if cfg.task == "probability":
        if frozen.sset is not None:
            return estimation.stratified_prob_estimate(frozen.sset, means, tail.threshold,
                                                       tail.direction)
        return estimation.prob_estimate(means, tail.threshold, tail.direction)
    return estimation.quantile_estimate(means, tail.p_f, tail.direction, frozen.mc_weights)


def _check_determinism(box, train, seed, trace):
    rng = np.random.default_rng(seed)
    i = int(rng.integers(train.n))
    y2 = evaluate(box, train.points[i])
    y1 = train.outputs[i]
    if abs(y2 - y1) > DETERMINISM_RTOL * max(abs(y1), abs(y2), 1e-300):
        msg = f"{box.name} is not deterministic: {y1!r} then {y2!r} at training point {i}"
        log.warning(msg)
        trace.warnings.append(msg)


def run(cfg, model, box, frozen=None):
    """Run one sequential experiment; returns ``(final estimate, trace)``.

    A black-box failure or a numerical breakdown raises :class:`RunAborted`
    carrying the trace recorded so far.
    """
    if box.d != model.d:
        raise ConfigError([f"black box dimension {box.d} does not match input model dimension {model.d}"])
    seeds = cfg.seeds()
    frozen = frozen or prepare(cfg, model, seeds)
    trace = Trace(d=model.d, criterion=cfg.acquisition.kind, repeat=cfg.repeat, seeds=seeds,
                  diagnostics=diag.DiagnosticTrace(criterion=cfg.acquisition.kind))
    n_diag = min(cfg.diagnostic_size, frozen.mc_points.shape[0])
    try:
        y0 = evaluate_many(box, frozen.X0)
        trace.evaluations += frozen.X0.shape[0]
        train = TrainingSet(frozen.X0, y0, frozen.lower, frozen.upper, frozen.log_dims)
        cand_scaled = train.scale(frozen.candidates)
        used = np.zeros(frozen.candidates.shape[0], dtype=bool)
        for i in range(1, cfg.n_plus + 1):
            sur = fit_surrogate(train, cfg.prior, cfg.mcmc, cfg.chain_seed(i))
            means, _ = sur.predict(frozen.mc_points, want_var=False)
            est = _estimate(cfg, frozen, means)
            target = cfg.tail.threshold if cfg.task == "probability" else est
            if n_diag:
                dm, dv = sur.predict(frozen.mc_points[:n_diag])
                trace.diagnostics.summaries.append(
                    diag.diagnostic_step(dm, dv, target, iteration=i))
                if cfg.diagnostic_points:
                    vals, ok = diag.standardized_discrepancy(dm, dv, target)
                    full = np.full(ok.size, np.nan)
                    full[ok] = vals
                    trace.diagnostic_values.append(full)
            rec = dict(iteration=i, n=train.n, estimate=est, target=target,
                       jitter=sur.max_jitter, acceptance_rate=sur.psis.acceptance_rate)
            trace.warnings.extend(sur.psis.warnings)
            if i < cfg.n_plus:
                cm, cv = sur.predict(frozen.candidates)
                excl = used | excluded_mask(cand_scaled, train.scaled)
                pick = select_next(cm, cv, replace(cfg.acquisition, target=target), excl)
                x_new = frozen.candidates[pick.index]
                used[pick.index] = True
                y_new = evaluate(box, x_new)
                trace.evaluations += 1
                rec.update(point=tuple(float(v) for v in x_new), y=y_new,
                           criterion_value=pick.score)
                trace.records.append(IterationRecord(**rec))
                train = train.augmented(x_new, y_new)
            else:
                trace.records.append(IterationRecord(**rec))
    except (EvaluationError, IllConditionedKernelError, SelectionError) as exc:
        raise RunAborted(f"run aborted after {len(trace.records)} iterations: {exc}",
                         trace, exc) from exc
    if cfg.determinism_check and trace.evaluations:
        try:
            _check_determinism(box, train, seeds["check"], trace)
        except EvaluationError as exc:
            raise RunAborted(f"determinism re-check failed: {exc}", trace, exc) from exc
    return trace.final_estimate, trace


def run_probability(cfg, model, box, frozen=None):
    if cfg.task != "probability":
        cfg = replace(cfg, task="probability")
    return run(cfg, model, box, frozen)


def run_quantile(cfg, model, box, frozen=None):
    if cfg.task != "quantile":
        cfg = replace(cfg, task="quantile")
    return run(cfg, model, box, frozen)


def config_dict(cfg):
    """Plain nested-dict snapshot of a config (for manifests)."""
    return asdict(cfg)
