import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from tailgp.criteria import AcquisitionConfig
from tailgp.errors import ConfigError, EvaluationError, InvalidArgumentError, RunAborted
from tailgp.estimation import TailSpec
from tailgp.input_models import InputModel, Normal
from tailgp.posterior import MCMCConfig
from tailgp.sequential import (
    BlackBox,
    ExperimentConfig,
    evaluate,
    evaluate_many,
    prepare,
    read_trace_csv,
    run,
    run_probability,
    run_quantile,
    stream_seed,
    write_trace_csv,
)

STUBS = Path(__file__).resolve().parents[1] / "configs" / "stubs"
FAST = MCMCConfig(burn_in=100, thin=2, M=10)
MODEL = InputModel((Normal(0.0, 1.0), Normal(0.0, 1.0)))


def linear(X):
    X = np.atleast_2d(X)
    return 3.0 - X[:, 0] - X[:, 1]


LINEAR = BlackBox(fn=linear, d=2, vectorized=True, name="linear")


def small_cfg(**kw):
    base = dict(n0=10, n_plus=3, tail=TailSpec("lower", threshold=0.0), mc_size=3000,
                candidate_size=500, mcmc=FAST, seed=7, diagnostic_size=500)
    base.update(kw)
    return ExperimentConfig(**base)


# ----------------------------------------------------------------- black box


def test_black_box_needs_exactly_one_backend():
    with pytest.raises(InvalidArgumentError):
        BlackBox()
    with pytest.raises(InvalidArgumentError):
        BlackBox(fn=linear, command="true")


def test_in_process_evaluation():
    assert evaluate(LINEAR, [1.0, 0.5]) == 1.5
    assert np.allclose(evaluate_many(LINEAR, [[0, 0], [1, 1]]), [3.0, 1.0])
    scalar = BlackBox(fn=lambda x: x[0] ** 2, d=1)
    assert np.allclose(evaluate_many(scalar, [[2.0], [3.0]]), [4.0, 9.0])
    with pytest.raises(InvalidArgumentError):
        evaluate(LINEAR, [1.0])


def test_nan_output_is_an_evaluation_error():
    box = BlackBox(fn=lambda x: float("nan"), d=1)
    with pytest.raises(EvaluationError):
        evaluate(box, [0.0])
    vbox = BlackBox(fn=lambda X: np.full(len(X), np.nan), d=1, vectorized=True)
    with pytest.raises(EvaluationError):
        evaluate_many(vbox, [[0.0]])


def test_external_protocol():
    echo = BlackBox(command=[sys.executable, str(STUBS / "echo_stub.py")], d=2)
    assert evaluate(echo, [1.0, 2.0]) == 0.0
    lin = BlackBox(command=[sys.executable, str(STUBS / "linear_stub.py")], d=2)
    assert evaluate(lin, [0.25, 0.5]) == 2.25


@pytest.mark.parametrize("script, match", [
    ("print('nan')", "non-finite"),
    ("print('hello')", "unparsable"),
    ("import sys; sys.exit(3)", "exit status 3"),
    ("import time; time.sleep(5)", "timed out"),
])
def test_external_failures(script, match):
    box = BlackBox(command=[sys.executable, "-c", script], d=1, timeout=1.0)
    with pytest.raises(EvaluationError, match=match):
        evaluate(box, [0.0])


def test_missing_command():
    with pytest.raises(EvaluationError, match="could not start"):
        evaluate(BlackBox(command="/nonexistent/simulator", d=1), [0.0])


# -------------------------------------------------------------------- config


def test_config_collects_every_problem():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig(task="median", n0=1, design="sobol", candidate_policy="x")
    assert len(info.value.problems) == 4


def test_quantile_needs_p_f():
    with pytest.raises(ConfigError, match="p_f"):
        ExperimentConfig(task="quantile", tail=TailSpec("lower", threshold=0.0))


def test_seed_streams_are_distinct_and_stable():
    cfg = small_cfg()
    seeds = cfg.seeds()
    assert len(set(seeds.values())) == len(seeds)
    assert seeds == small_cfg().seeds()
    assert replace(cfg, repeat=1).seeds()["mc"] != seeds["mc"]
    assert stream_seed(1, "chain", 0, 1) != stream_seed(1, "chain", 0, 2)


def test_prepare_shares_frozen_sets_across_criteria():
    a = prepare(small_cfg(), MODEL)
    b = prepare(small_cfg(acquisition=AcquisitionConfig(kind="ei")), MODEL)
    assert np.array_equal(a.X0, b.X0)
    assert np.array_equal(a.mc_points, b.mc_points)
    assert np.array_equal(a.candidates, b.candidates)
    c = prepare(small_cfg(candidate_policy="mc_set"), MODEL)
    assert c.candidates is c.mc_points


# ---------------------------------------------------------------------- runs


def test_fixed_design_run():
    est, trace = run(small_cfg(n_plus=1), MODEL, LINEAR)
    assert len(trace.records) == 1
    assert trace.records[0].point is None
    assert trace.evaluations == 10
    assert trace.records[0].n == 10


def test_budget_and_trace_shape():
    est, trace = run(small_cfg(n_plus=4), MODEL, LINEAR)
    assert [r.n for r in trace.records] == [10, 11, 12, 13]
    assert trace.evaluations == 13
    assert all(r.point is not None for r in trace.records[:-1])
    assert len(trace.diagnostics.summaries) == 4
    assert est == trace.final_estimate


def test_linear_probability_converges():
    N = 20_000
    truth = stats.norm.sf(3.0 / np.sqrt(2.0))
    cfg = small_cfg(n0=20, n_plus=10, mc_size=N, candidate_size=2000)
    est, trace = run_probability(cfg, MODEL, LINEAR)
    se = np.sqrt(truth * (1 - truth) / N)
    assert abs(est - truth) < 3 * se


def test_linear_quantile_converges():
    N = 20_000
    p_f = 0.01
    truth = 3.0 - np.sqrt(2.0) * stats.norm.ppf(1 - p_f)
    cfg = small_cfg(task="quantile", tail=TailSpec("lower", p_f=p_f), n0=20, n_plus=10,
                    mc_size=N, candidate_size=2000)
    est, _ = run_quantile(cfg, MODEL, LINEAR)
    # MC standard error of a sample quantile: sqrt(p(1-p)/N) / density at the quantile
    dens = stats.norm.pdf(3.0 - truth, scale=np.sqrt(2.0))
    se = np.sqrt(p_f * (1 - p_f) / N) / dens
    assert abs(est - truth) < 3 * se


def test_constant_box_quantile():
    box = BlackBox(fn=lambda X: np.full(len(np.atleast_2d(X)), 4.5), d=2, vectorized=True)
    cfg = small_cfg(task="quantile", tail=TailSpec("lower", p_f=0.05))
    _, trace = run(cfg, MODEL, box)
    assert trace.estimates == [4.5, 4.5, 4.5]


def test_identical_config_gives_identical_trace(tmp_path):
    cfg = small_cfg(acquisition=AcquisitionConfig(kind="ei"))
    _, t1 = run(cfg, MODEL, LINEAR)
    _, t2 = run(cfg, MODEL, LINEAR)
    write_trace_csv(tmp_path / "a.csv", t1)
    write_trace_csv(tmp_path / "b.csv", t2)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = read_trace_csv(tmp_path / "a.csv")
    assert [r["n"] for r in rows] == [10, 11, 12]
    assert rows[-1]["x_1"] is None and rows[0]["criterion"] == "ei"


def test_failure_mid_run_keeps_partial_trace():
    calls = {"n": 0}

    def flaky(x):
        calls["n"] += 1
        if calls["n"] > 11:
            return float("nan")
        return 3.0 - x[0] - x[1]

    with pytest.raises(RunAborted) as info:
        run(small_cfg(n_plus=5), MODEL, BlackBox(fn=flaky, d=2))
    trace = info.value.trace
    assert len(trace.records) == 1
    assert isinstance(info.value.cause, EvaluationError)


def test_nondeterministic_box_warns():
    rng = np.random.default_rng(0)
    box = BlackBox(fn=lambda x: 3.0 - x[0] - x[1] + 1e-3 * rng.random(), d=2)
    _, trace = run(small_cfg(n_plus=1), MODEL, box)
    assert any("not deterministic" in w for w in trace.warnings)


def test_dimension_mismatch():
    with pytest.raises(ConfigError):
        run(small_cfg(), MODEL, BlackBox(fn=linear, d=3, vectorized=True))


def test_external_run_smoke():
    box = BlackBox(command=[sys.executable, str(STUBS / "echo_stub.py")], d=2, timeout=30)
    cfg = small_cfg(n0=5, n_plus=2, mc_size=500, candidate_size=50, diagnostic_size=0)
    est, trace = run(cfg, MODEL, box)
    assert est == 0.0
    assert trace.evaluations == 6
