"""Flat ``key = value`` experiment configuration.

Keys are dotted (``mcmc.burn_in``); ``#`` starts a comment.  Inputs are
declared one per line as ``input.<k> = <kind> <args...>`` with ``k``
counting from 1:

    normal MEAN SD
    lognormal LOGMEAN LOGSD
    empirical FILE
    tail_mixture FILE SPLIT_FRACTION P1

Relative file paths are resolved against the directory of the config.
"""
from dataclasses import dataclass, field
import json
import os
import re
import shlex

import numpy as np

from tailgp.criteria import AcquisitionConfig
from tailgp.errors import ConfigError, InvalidArgumentError
from tailgp.estimation import TailSpec
from tailgp.input_models import (Empirical, InputModel, LogNormal, Normal, build_tail_mixture,
                                 read_values_csv)
from tailgp.posterior import MCMCConfig, PsiPrior

# key, type, default, help
SCHEMA = [
    ("problem", "str", "short_column", "short_column | external:<command>"),
    ("problem.b", "float", "3.0", "short column width"),
    ("problem.h", "float", "10.0", "short column depth"),
    ("problem.timeout", "float", "300.0", "seconds allowed per external evaluation"),
    ("task", "str", "probability", "probability | quantile"),
    ("tail.direction", "str", "lower", "lower: Pr(Y < y_f); upper: Pr(Y > y_f)"),
    ("tail.threshold", "optfloat", "0.0", "y_f for probability runs"),
    ("tail.p_f", "optfloat", "", "target tail probability for quantile runs"),
    ("n0", "int", "20", "initial design size"),
    ("n_plus", "int", "20", "iterations; the last one estimates without acquiring"),
    ("design", "str", "uniform_lhd", "uniform_lhd | random"),
    ("mc.size", "int", "100000", "MC set size (plain MC)"),
    ("mc.stratified", "bool", "false", "use the 2^d stratified MC set (tail_mixture inputs)"),
    ("mc.per_stratum", "int", "50", "points per stratum"),
    ("candidates.policy", "str", "fresh", "fresh | mc_set"),
    ("candidates.size", "int", "10000", "fresh candidate set size"),
    ("acquisition.kind", "str", "discrepancy", "discrepancy | ei"),
    ("acquisition.alpha", "float", "1.96", "EI band half-width multiplier"),
    ("acquisition.epsilon", "float", "0.0", "expected-discrepancy offset (0: plain discrepancy)"),
    ("mcmc.mode", "str", "mcmc", "mcmc | map"),
    ("mcmc.burn_in", "int", "500", "burn-in sweeps"),
    ("mcmc.thin", "int", "5", "sweeps between retained draws"),
    ("mcmc.M", "int", "100", "retained draws"),
    ("mcmc.step_theta", "float", "0.5", "initial proposal sd for log theta"),
    ("mcmc.step_p", "float", "1.0", "initial proposal sd for logit(p - 1)"),
    ("mcmc.adapt", "bool", "true", "tune step sizes during burn-in"),
    ("mcmc.map_starts", "int", "8", "optimizer starts in map mode"),
    ("prior.log_theta_min", "float", repr(float(np.log(0.01))), "lower bound of log theta"),
    ("prior.log_theta_max", "float", repr(float(np.log(50.0))), "upper bound of log theta"),
    ("seed", "int", "0", "root seed"),
    ("repeats", "int", "10", "repeats for the repeat command"),
    ("study.designs", "list", "random,uniform_lhd", "designs compared by the repeat command"),
    ("study.criteria", "list", "ei,discrepancy", "criteria compared by the repeat command"),
    ("truth", "optfloat", "", "true value for RMSE tables (blank: omit)"),
    ("diagnostics.size", "int", "10000", "MC points used by the diagnostic (0: off)"),
    ("diagnostics.points", "bool", "false", "also write per-point diagnostic values"),
    ("diagnostics.threshold", "float", "-10.0", "convergence flag threshold"),
    ("diagnostics.window", "int", "2", "iterations the median must stay below threshold"),
    ("determinism_check", "bool", "true", "re-evaluate one training point after the run"),
    ("oracle.n_big", "int", "10000000", "brute-force sample size"),
    ("oracle.chunk", "int", "1000000", "brute-force chunk size"),
    ("anova.n", "int", "20", "training runs for the screening fit"),
    ("anova.grid_points", "int", "21", "quantile grid per input"),
    ("anova.mc_base", "int", "2000", "base sample for main-effect bands"),
    ("accel", "str", "auto", "auto | numba | numpy"),
]
_TYPES = {k: t for k, t, _, _ in SCHEMA}
_DEFAULTS = {k: v for k, _, v, _ in SCHEMA}
_INPUT_KEY = re.compile(r"^input\.(\d+)$")
_FILE_KINDS = {"empirical": 1, "tail_mixture": 1}


@dataclass
class Settings:
    values: dict
    inputs: dict = field(default_factory=dict)      # k -> spec string
    source: str = None

    def __getitem__(self, key):
        return self.values[key]

    def with_overrides(self, **kw):
        vals = dict(self.values)
        for k, v in kw.items():
            vals[k.replace("__", ".")] = v
        return Settings(vals, dict(self.inputs), self.source)

    def raw(self):
        """Canonical key -> text mapping (for manifests and dumps)."""
        out = {k: _to_text(self.values[k], _TYPES[k]) for k, *_ in SCHEMA}
        for k in sorted(self.inputs):
            out[f"input.{k}"] = self.inputs[k]
        return out

    def dump(self):
        lines = []
        for k, v in self.raw().items():
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _to_text(value, typ):
    if value is None:
        return ""
    if typ == "bool":
        return "true" if value else "false"
    if typ == "list":
        return ",".join(value)
    if typ == "float" or typ == "optfloat":
        return repr(float(value))
    return str(value)


def _convert(key, text, typ):
    text = text.strip()
    if typ == "str":
        return text
    if typ == "list":
        return [t.strip() for t in text.split(",") if t.strip()]
    if typ == "bool":
        low = text.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"{key}: expected true/false, got {text!r}")
    if typ == "optfloat":
        if text == "" or text.lower() == "none":
            return None
        typ = "float"
    if typ == "float":
        try:
            return float(text)
        except ValueError:
            raise ValueError(f"{key}: expected a number, got {text!r}") from None
    if typ == "int":
        try:
            return int(text)
        except ValueError:
            pass
        try:
            v = float(text)     # allows 1e5
        except ValueError:
            raise ValueError(f"{key}: expected an integer, got {text!r}") from None
        if not v.is_integer():
            raise ValueError(f"{key}: expected an integer, got {text!r}")
        return int(v)
    raise AssertionError(typ)


def parse_pairs(pairs, base_dir=None):
    """Typed settings from ``(key, text)`` pairs; every problem is collected."""
    problems = []
    raw = dict(_DEFAULTS)
    inputs = {}
    for key, text in pairs:
        m = _INPUT_KEY.match(key)
        if m:
            inputs[int(m.group(1))] = _resolve_paths(text.strip(), base_dir)
        elif key == "problem":
            raw[key] = _resolve_command(text.strip(), base_dir)
        elif key in _TYPES:
            raw[key] = text
        else:
            problems.append(f"{key}: unknown key")
    values = {}
    for key, text in raw.items():
        try:
            values[key] = _convert(key, text, _TYPES[key])
        except ValueError as exc:
            problems.append(str(exc))
    if problems:
        raise ConfigError(problems)
    return Settings(values, inputs)


def parse_text(text, base_dir=None):
    pairs = []
    problems = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        # inline comments need whitespace before the hash
        stripped = re.split(r"\s+#", stripped, maxsplit=1)[0].strip()
        if "=" not in stripped:
            problems.append(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
            continue
        key, value = stripped.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    if problems:
        raise ConfigError(problems)
    return parse_pairs(pairs, base_dir)


def _resolve_command(name, base_dir):
    """Make relative script paths in ``external:<command>`` absolute."""
    if not (base_dir and name.startswith("external:")):
        return name
    try:
        argv = shlex.split(name[len("external:"):])
    except ValueError:
        return name
    out = []
    for tok in argv:
        cand = os.path.join(base_dir, tok)
        out.append(os.path.abspath(cand) if not os.path.isabs(tok) and os.path.isfile(cand) else tok)
    return "external:" + shlex.join(out)


def _resolve_paths(spec, base_dir):
    parts = spec.split()
    if base_dir and parts and parts[0] in _FILE_KINDS and len(parts) > 1:
        if not os.path.isabs(parts[1]):
            parts[1] = os.path.abspath(os.path.join(base_dir, parts[1]))
    return " ".join(parts)


def load(path):
    """Read a config file, or the config snapshot inside a run manifest (JSON)."""
    path = os.fspath(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from None
    base = os.path.dirname(os.path.abspath(path))
    if text.lstrip().startswith("{"):
        try:
            manifest = json.loads(text)
            pairs = list(manifest["config"].items())
        except (ValueError, KeyError, AttributeError) as exc:
            raise ConfigError([f"config: {path} is not a run manifest ({exc})"]) from None
        settings = parse_pairs(pairs, base)
    else:
        settings = parse_text(text, base)
    settings.source = path
    return settings


def defaults():
    return parse_pairs([])


def defaults_text():
    lines = ["# tailgp configuration defaults", "#",
             "# inputs: input.<k> = normal MEAN SD | lognormal LOGMEAN LOGSD |",
             "#         empirical FILE | tail_mixture FILE SPLIT_FRACTION P1",
             "# (short_column supplies its own three inputs when none are given)", ""]
    width = max(len(k) for k, *_ in SCHEMA)
    for key, _, default, doc in SCHEMA:
        lines.append(f"{key.ljust(width)} = {default}".ljust(width + 24) + f"# {doc}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ builders


def parse_marginal(spec):
    parts = spec.split()
    if not parts:
        raise InvalidArgumentError("empty input spec")
    kind, args = parts[0], parts[1:]
    if kind == "normal" and len(args) == 2:
        return Normal(float(args[0]), float(args[1]))
    if kind == "lognormal" and len(args) == 2:
        return LogNormal(float(args[0]), float(args[1]))
    if kind == "empirical" and len(args) == 1:
        return Empirical(read_values_csv(args[0]))
    if kind == "tail_mixture" and len(args) == 3:
        return build_tail_mixture(read_values_csv(args[0]), float(args[1]), float(args[2]))
    raise InvalidArgumentError(f"cannot parse input spec {spec!r}")


def build_model(settings, default_model=None):
    if not settings.inputs:
        if default_model is None:
            raise ConfigError(["input.<k>: no inputs declared"])
        return default_model
    keys = sorted(settings.inputs)
    problems = []
    if keys != list(range(1, len(keys) + 1)):
        problems.append(f"input.<k>: indices must run 1..d, got {keys}")
    marginals = []
    for k in keys:
        try:
            marginals.append(parse_marginal(settings.inputs[k]))
        except (InvalidArgumentError, ValueError, OSError) as exc:
            problems.append(f"input.{k}: {exc}")
    if problems:
        raise ConfigError(problems)
    names = None
    if default_model is not None and len(marginals) == default_model.d:
        names = default_model.names
    return InputModel(tuple(marginals), names)


def _collect(problems, prefix, fn):
    try:
        return fn()
    except (InvalidArgumentError, ConfigError, ValueError) as exc:
        problems.append(f"{prefix}: {exc}")
        return None


def experiment_config(settings, **override):
    """An :class:`ExperimentConfig` from settings; all field problems are reported together."""
    from tailgp.sequential import ExperimentConfig

    s = settings.with_overrides(**override) if override else settings
    problems = []
    tail = _collect(problems, "tail", lambda: TailSpec(s["tail.direction"], s["tail.threshold"],
                                                       s["tail.p_f"]))
    acq = _collect(problems, "acquisition", lambda: AcquisitionConfig(
        s["acquisition.kind"], s["acquisition.alpha"], s["acquisition.epsilon"]))
    mcmc = _collect(problems, "mcmc", lambda: MCMCConfig(
        s["mcmc.burn_in"], s["mcmc.thin"], s["mcmc.M"], s["mcmc.step_theta"], s["mcmc.step_p"],
        s["mcmc.adapt"], s["mcmc.mode"], s["mcmc.map_starts"]))
    prior = _collect(problems, "prior", lambda: PsiPrior(
        (s["prior.log_theta_min"], s["prior.log_theta_max"])))
    if s["accel"] not in ("auto", "numba", "numpy"):
        problems.append(f"accel: must be auto, numba or numpy, got {s['accel']!r}")
    if s["diagnostics.window"] < 1:
        problems.append("diagnostics.window: must be >= 1")
    if s["repeats"] < 1:
        problems.append("repeats: must be >= 1")
    if problems or None in (tail, acq, mcmc, prior):
        # still run the top-level checks so every field is listed at once
        tail = tail or TailSpec("lower", 0.0)
        acq = acq or AcquisitionConfig()
        mcmc = mcmc or MCMCConfig()
        prior = prior or PsiPrior()
    fields = dict(task=s["task"], n0=s["n0"], n_plus=s["n_plus"], tail=tail, acquisition=acq,
                  design=s["design"], mc_size=s["mc.size"], stratified=s["mc.stratified"],
                  per_stratum=s["mc.per_stratum"], candidate_policy=s["candidates.policy"],
                  candidate_size=s["candidates.size"], mcmc=mcmc, prior=prior, seed=s["seed"],
                  diagnostic_size=s["diagnostics.size"],
                  diagnostic_points=s["diagnostics.points"],
                  determinism_check=s["determinism_check"])
    try:
        cfg = ExperimentConfig(**fields)
    except ConfigError as exc:
        problems.extend(exc.problems)
        cfg = None
    if problems:
        raise ConfigError(problems)
    return cfg
