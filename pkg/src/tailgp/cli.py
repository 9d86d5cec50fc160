"""Command-line driver: single runs, repeat studies, truth oracles, screening
and diagnostics, with CSV outputs and JSON run manifests.

Exit codes: 0 success, 2 configuration error, 3 black-box evaluation
error, 4 numerical failure.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
import datetime as _dt
import glob
import hashlib
from importlib import metadata
import logging
import os
import platform
import sys
import time

import numpy as np

from tailgp import __version__, _accel, config, diagnostics, problems, sensitivity, sequential
from tailgp._io import write_csv, write_json
from tailgp.errors import (ConfigError, EvaluationError, FitError, IllConditionedKernelError,
                           InvalidArgumentError, RunAborted, SelectionError)
from tailgp.estimation import TailSpec
from tailgp.gp_core import TrainingSet
from tailgp.posterior import fit_surrogate

log = logging.getLogger("tailgp")

EXIT_OK, EXIT_CONFIG, EXIT_EVAL, EXIT_NUMERIC = 0, 2, 3, 4
VERSION = __version__


# ------------------------------------------------------------------ problems


def resolve_problem(settings):
    """``(model, box)`` for the configured problem name."""
    name = settings["problem"]
    if name == "short_column":
        try:
            spec = problems.ShortColumnSpec(settings["problem.b"], settings["problem.h"])
        except InvalidArgumentError as exc:
            raise ConfigError([f"problem.b/problem.h: {exc}"]) from None
        model = config.build_model(settings, problems.short_column_model())
        if model.d != 3:
            raise ConfigError([f"input.<k>: short_column needs 3 inputs, got {model.d}"])
        return model, problems.short_column_box(spec)
    if name.startswith("external:"):
        command = name[len("external:"):].strip()
        if not command:
            raise ConfigError(["problem: external command is empty"])
        model = config.build_model(settings)
        box = sequential.BlackBox(command=command, d=model.d, timeout=settings["problem.timeout"],
                                  name=command.split()[0])
        return model, box
    raise ConfigError([f"problem: unknown problem {name!r} (short_column or external:<command>)"])


# ------------------------------------------------------------------ manifests


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _dist_version(name):
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return None


def write_manifest(out_dir, command, settings, seeds, outputs, started):
    import scipy

    manifest = {
        "tool": "tailgp",
        "version": VERSION,
        "command": command,
        "config": settings.raw(),
        "seeds": seeds,
        "backend": _accel.backend(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": _dist_version("numba"),
        "started": started,
        "finished": _now(),
        "outputs": {name: {"path": os.path.relpath(p, out_dir), "sha256": _sha256(p)}
                    for name, p in outputs.items()},
    }
    path = os.path.join(out_dir, "manifest.json")
    write_json(path, manifest)
    return path


# ---------------------------------------------------------------------- run


def _write_run_outputs(out_dir, trace, stem="trace"):
    outputs = {}
    p = os.path.join(out_dir, f"{stem}.csv")
    sequential.write_trace_csv(p, trace)
    outputs[stem] = p
    if trace.diagnostics is not None and trace.diagnostics.summaries:
        p = os.path.join(out_dir, f"{stem}_diagnostics.csv")
        diagnostics.write_summary_csv(p, trace.diagnostics)
        outputs[f"{stem}_diagnostics"] = p
    if trace.diagnostic_values:
        p = os.path.join(out_dir, f"{stem}_diagnostic_points.csv")
        diagnostics.write_points_csv(p, trace.diagnostic_values)
        outputs[f"{stem}_diagnostic_points"] = p
    return outputs


def cmd_run(settings, out_dir):
    started = _now()
    cfg = config.experiment_config(settings)
    model, box = resolve_problem(settings)
    _accel.set_backend(settings["accel"])
    try:
        est, trace = sequential.run(cfg, model, box)
    except RunAborted as exc:
        if exc.trace is not None:
            _write_run_outputs(out_dir, exc.trace)
        raise
    outputs = _write_run_outputs(out_dir, trace)
    write_manifest(out_dir, "run", settings, trace.seeds, outputs, started)
    flag = diagnostics.convergence_flag(trace.diagnostics, settings["diagnostics.threshold"],
                                        settings["diagnostics.window"])
    label = "p_f" if cfg.task == "probability" else "y_f"
    print(f"final {label} estimate: {est!r} (n = {trace.records[-1].n if trace.records else cfg.n0})")
    if trace.diagnostics.summaries:
        print(f"convergence flag: {flag.flag}" + (f" ({flag.note})" if flag.note else "")
              + (" [diagnostic outside its discrepancy setting]" if trace.diagnostics.off_criterion
                 else ""))
    for w in trace.warnings:
        print(f"warning: {w}")
    return est, trace


# ------------------------------------------------------------------- repeat


def _study_task(raw, repeat, design, criterion, keep_diag):
    """Run one (repeat, design, criterion) cell; safe to call in a worker process."""
    settings = config.parse_pairs(list(raw.items()))
    _accel.set_backend(settings["accel"])
    over = {"design": design, "acquisition__kind": criterion}
    if not keep_diag:
        over["diagnostics__size"] = 0
    cfg = config.experiment_config(settings, **over)
    cfg = replace(cfg, repeat=repeat)
    model, box = resolve_problem(settings)
    try:
        _, trace = sequential.run(cfg, model, box)
        return ("ok", repeat, design, criterion, trace, None)
    except RunAborted as exc:
        kind = "eval" if isinstance(exc.cause, EvaluationError) else "numeric"
        return ("error", repeat, design, criterion, exc.trace, f"{kind}: {exc}")


def run_study(settings, repeats=None, jobs=1, diagnostics_for="repeat0"):
    """Every (repeat, design, criterion) cell of a repeat study.

    Initial designs, MC sets and candidate sets depend only on the root
    seed and the repeat index, so criteria and designs within a repeat
    share them.  Returns ``{(repeat, design, criterion): trace}`` and a
    list of error strings.  Diagnostics are computed for repeat 0 only
    unless ``diagnostics_for="all"``.
    """
    repeats = settings["repeats"] if repeats is None else repeats
    config.experiment_config(settings)          # validate once up front
    resolve_problem(settings)
    raw = settings.raw()
    cells = [(r, d, c) for r in range(repeats) for d in settings["study.designs"]
             for c in settings["study.criteria"]]
    args = [(raw, r, d, c, diagnostics_for == "all" or r == 0) for r, d, c in cells]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_study_task, *zip(*args)))
    else:
        results = [_study_task(*a) for a in args]
    traces = {}
    errors = []
    for status, r, d, c, trace, msg in results:
        if trace is not None:
            traces[(r, d, c)] = trace
        if status != "ok":
            errors.append(f"repeat {r} {d} {c}: {msg}")
    return traces, errors


def rmse_table(traces, truth):
    """``{(design, criterion): rmse}`` of the final estimates."""
    groups = {}
    for (r, d, c), trace in traces.items():
        if trace.final_estimate is not None:
            groups.setdefault((d, c), []).append(trace.final_estimate)
    return {k: float(np.sqrt(np.mean((np.array(v) - truth) ** 2))) for k, v in groups.items()}


def cmd_repeat(settings, out_dir, jobs=1):
    started = _now()
    traces, errors = run_study(settings, jobs=jobs)
    outputs = {}
    for (r, d, c), trace in sorted(traces.items()):
        stem = f"trace_r{r}_{d}_{c}"
        for name, p in _write_run_outputs(os.path.join(out_dir, "traces"), trace, stem).items():
            outputs[name] = p
    rows = []
    for (r, d, c), trace in sorted(traces.items()):
        last = len(trace.records)
        for rec in trace.records:
            rows.append([r, d, c, rec.iteration, rec.n, rec.estimate, rec.iteration == last])
    p = os.path.join(out_dir, "results.csv")
    write_csv(p, ["repeat", "design", "criterion", "iteration", "n", "estimate", "final"], rows)
    outputs["results"] = p
    truth = settings["truth"]
    if truth is not None:
        table = rmse_table(traces, truth)
        p = os.path.join(out_dir, "rmse.csv")
        write_csv(p, ["design", "criterion", "rmse"], [[d, c, v] for (d, c), v in sorted(table.items())])
        outputs["rmse"] = p
        crits = settings["study.criteria"]
        p = os.path.join(out_dir, "rmse_table.csv")
        write_csv(p, ["design"] + crits,
                  [[d] + [table.get((d, c)) for c in crits] for d in settings["study.designs"]])
        outputs["rmse_table"] = p
        print("final-estimate RMSE vs truth", truth)
        print("design".ljust(14) + "".join(c.rjust(16) for c in crits))
        for d in settings["study.designs"]:
            print(d.ljust(14) + "".join(f"{table.get((d, c), float('nan')):16.6g}" for c in crits))
    seeds = {f"repeat_{r}": {name: sequential.stream_seed(settings["seed"], name, r)
                             for name in sequential.STREAMS}
             for r in range(settings["repeats"])}
    write_manifest(out_dir, "repeat", settings, seeds, outputs, started)
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    if errors:
        kind = EXIT_EVAL if any(": eval:" in e for e in errors) else EXIT_NUMERIC
        return kind
    return EXIT_OK


# ------------------------------------------------------------------- oracle


def cmd_oracle(settings, out_dir=None, n_big=None, tail=None):
    model, box = resolve_problem(settings)
    if tail is None:
        tail = TailSpec(settings["tail.direction"],
                        settings["tail.threshold"] if settings["task"] == "probability" else None,
                        settings["tail.p_f"] if settings["task"] == "quantile" else None)
    n_big = settings["oracle.n_big"] if n_big is None else n_big
    t0 = time.perf_counter()
    truth = problems.brute_force_truth(box, model, tail, n_big, settings["seed"],
                                       settings["oracle.chunk"])
    elapsed = time.perf_counter() - t0
    what = "probability" if tail.threshold is not None else "quantile"
    print(f"{settings['problem']} {what}: {truth.value!r} (se {truth.se:.3g}, N = {truth.n}, "
          f"{elapsed:.1f} s)")
    if out_dir:
        write_csv(os.path.join(out_dir, "oracle.csv"),
                  ["problem", "quantity", "direction", "threshold", "p_f", "value", "se", "n", "seed"],
                  [[settings["problem"], what, tail.direction, tail.threshold, tail.p_f,
                    truth.value, truth.se, truth.n, settings["seed"]]])
    return truth


# -------------------------------------------------------------------- anova


def cmd_anova(settings, out_dir):
    started = _now()
    cfg = config.experiment_config(settings)
    model, box = resolve_problem(settings)
    _accel.set_backend(settings["accel"])
    cfg = replace(cfg, n0=settings["anova.n"])
    frozen = sequential.prepare(replace(cfg, mc_size=1, candidate_size=1), model)
    y = sequential.evaluate_many(box, frozen.X0)
    train = TrainingSet(frozen.X0, y, frozen.lower, frozen.upper, frozen.log_dims)
    sur = fit_surrogate(train, cfg.prior, cfg.mcmc, cfg.chain_seed(0))
    report = sensitivity.anova_decompose(sur, model, settings["anova.grid_points"],
                                         seed=cfg.seeds()["mc"])
    outputs = {}
    p = os.path.join(out_dir, "anova.csv")
    sensitivity.write_anova_csv(p, report)
    outputs["anova"] = p
    for j, name in enumerate(model.names):
        curve = sensitivity.main_effect_curve(sur, model, j, settings["anova.grid_points"],
                                              settings["anova.mc_base"], cfg.seeds()["candidate"])
        p = os.path.join(out_dir, f"main_effect_{name}.csv")
        sensitivity.write_curve_csv(p, curve)
        outputs[f"main_effect_{name}"] = p
    write_manifest(out_dir, "anova", settings, cfg.seeds(), outputs, started)
    for name, pct in zip(model.names, report.main_pct):
        print(f"{name:>12s} {pct:7.2f}%")
    print(f"main effects {report.main_pct.sum():.2f}%, pairs {report.pair_pct.sum():.2f}%")
    return report


# ----------------------------------------------------------------- diagnose


def cmd_diagnose(trace_dir, out_dir=None, threshold=diagnostics.DEFAULT_THRESHOLD,
                 window=diagnostics.DEFAULT_WINDOW):
    """Convergence flags for every diagnostic file under ``trace_dir``."""
    if not os.path.isdir(trace_dir):
        raise ConfigError([f"trace dir: {trace_dir} is not a directory"])
    found = {}
    for p in sorted(glob.glob(os.path.join(trace_dir, "**", "*_diagnostic_points.csv"),
                              recursive=True)):
        found[p[:-len("_diagnostic_points.csv")]] = ("points", p)
    for p in sorted(glob.glob(os.path.join(trace_dir, "**", "*_diagnostics.csv"), recursive=True)):
        found.setdefault(p[:-len("_diagnostics.csv")], ("summary", p))
    if not found:
        raise ConfigError([f"trace dir: no diagnostic files found in {trace_dir}"])
    rows = []
    for stem, (kind, p) in sorted(found.items()):
        trace = (diagnostics.read_points_csv(p) if kind == "points"
                 else diagnostics.read_summary_csv(p))
        if kind == "points" and out_dir:
            diagnostics.write_summary_csv(
                os.path.join(out_dir, os.path.basename(stem) + "_diagnostics.csv"), trace)
        flag = diagnostics.convergence_flag(trace, threshold, window)
        last = trace.summaries[-1] if trace.summaries else None
        rows.append([os.path.relpath(stem, trace_dir), len(trace.summaries),
                     last.median if last else None, flag.flag, flag.note])
        print(f"{os.path.relpath(stem, trace_dir)}: final median "
              f"{last.median if last else float('nan'):.3g}, converged={flag.flag}"
              + (f" ({flag.note})" if flag.note else ""))
    write_csv(os.path.join(out_dir or trace_dir, "diagnose.csv"),
              ["trace", "iterations", "final_median", "flag", "note"], rows)
    return rows


# --------------------------------------------------------------------- main


def build_parser():
    parser = argparse.ArgumentParser(prog="tailgp", description=__doc__.splitlines()[0])
    parser.add_argument("--print-defaults", action="store_true",
                        help="print every configuration key with its default and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p, cfg_required=True):
        p.add_argument("--config", required=cfg_required, help="config file or run manifest")
        p.add_argument("--seed", type=int, help="override the root seed")
        p.add_argument("--out-dir", default=".", help="output directory (default: .)")
        p.add_argument("--jobs", type=int, default=1, help="parallel repeats (repeat only)")

    common(sub.add_parser("run", help="one sequential run"))
    p = sub.add_parser("repeat", help="repeat study across designs and criteria")
    common(p)
    p.add_argument("--repeats", type=int, help="override the number of repeats")
    p = sub.add_parser("oracle", help="brute-force Monte Carlo truth")
    common(p, cfg_required=False)
    p.add_argument("problem", nargs="?", help="problem name (overrides the config)")
    p.add_argument("--n-big", type=float, help="sample size (e.g. 1e7)")
    p.add_argument("--direction", choices=("lower", "upper"))
    p.add_argument("--threshold", type=float, help="probability of crossing this value")
    p.add_argument("--p-f", type=float, help="quantile at this tail probability")
    common(sub.add_parser("anova", help="functional ANOVA screening fit"))
    p = sub.add_parser("diagnose", help="convergence flags from diagnostic CSVs")
    p.add_argument("trace_dir")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--threshold", type=float, default=diagnostics.DEFAULT_THRESHOLD)
    p.add_argument("--window", type=int, default=diagnostics.DEFAULT_WINDOW)
    return parser


def _settings(args):
    settings = config.load(args.config) if args.config else config.defaults()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "repeats", None) is not None:
        over["repeats"] = args.repeats
    if getattr(args, "problem", None):
        over["problem"] = args.problem
    return settings.with_overrides(**over) if over else settings


def _dispatch(args):
    if args.command == "diagnose":
        cmd_diagnose(args.trace_dir, args.out_dir, args.threshold, args.window)
        return EXIT_OK
    settings = _settings(args)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    if args.command == "run":
        cmd_run(settings, out_dir)
        return EXIT_OK
    if args.command == "repeat":
        if args.jobs < 1:
            raise ConfigError(["--jobs: must be >= 1"])
        return cmd_repeat(settings, out_dir, args.jobs)
    if args.command == "oracle":
        tail = None
        if args.threshold is not None or args.p_f is not None or args.direction:
            direction = args.direction or settings["tail.direction"]
            if args.p_f is not None:
                tail = TailSpec(direction, p_f=args.p_f)
            else:
                thr = args.threshold if args.threshold is not None else settings["tail.threshold"]
                tail = TailSpec(direction, threshold=thr)
        n_big = int(args.n_big) if args.n_big is not None else None
        cmd_oracle(settings, out_dir, n_big, tail)
        return EXIT_OK
    if args.command == "anova":
        cmd_anova(settings, out_dir)
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(config.defaults_text())
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    try:
        return _dispatch(args)
    except ConfigError as exc:
        for prob in exc.problems:
            print(f"config error: {prob}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgumentError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunAborted as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return EXIT_EVAL if isinstance(exc.cause, EvaluationError) else EXIT_NUMERIC
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except (IllConditionedKernelError, FitError, SelectionError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
