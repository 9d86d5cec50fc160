import json

import numpy as np
import pytest

from tailgp import config
from tailgp.errors import ConfigError
from tailgp.input_models import LogNormal, Normal, TwoStratumMixture
from tailgp.problems import short_column_model


def test_defaults_parse_and_build():
    s = config.defaults()
    cfg = config.experiment_config(s)
    assert (cfg.n0, cfg.n_plus, cfg.mc_size, cfg.candidate_size) == (20, 20, 100_000, 10_000)
    assert cfg.acquisition.kind == "discrepancy" and cfg.acquisition.alpha == 1.96
    assert cfg.mcmc.M == 100 and cfg.mcmc.burn_in == 500


def test_defaults_text_round_trips():
    text = config.defaults_text()
    s = config.parse_text(text)
    assert s.raw() == config.defaults().raw()
    assert "# EI band half-width multiplier" in text


def test_parse_text_comments_and_types():
    s = config.parse_text("""
        # a comment
        n0 = 12          # inline comment
        mc.stratified = true
        study.criteria = ei
        tail.p_f = 0.01
        truth =
    """)
    assert s["n0"] == 12 and s["mc.stratified"] is True
    assert s["study.criteria"] == ["ei"]
    assert s["tail.p_f"] == 0.01 and s["truth"] is None


def test_every_problem_is_reported():
    with pytest.raises(ConfigError) as info:
        config.parse_text("n0 = twelve\nbogus = 1\nmc.stratified = maybe\nno equals sign")
    assert len(info.value.problems) == 1          # the syntax error stops parsing first
    with pytest.raises(ConfigError) as info:
        config.parse_text("n0 = twelve\nbogus = 1\nmc.stratified = maybe")
    assert len(info.value.problems) == 3


def test_field_level_validation_lists_all_fields():
    s = config.defaults().with_overrides(n0=1, design="sobol", acquisition__alpha=-1.0,
                                         mcmc__M=0, accel="gpu")
    with pytest.raises(ConfigError) as info:
        config.experiment_config(s)
    text = " ".join(info.value.problems)
    for key in ("n0", "design", "alpha", "M must be", "accel"):
        assert key in text


def test_inputs_and_relative_paths(tmp_path):
    (tmp_path / "moe.csv").write_text("\n".join(str(v) for v in np.arange(1.0, 101.0)))
    cfg_path = tmp_path / "c.cfg"
    cfg_path.write_text("input.1 = normal 1 2\ninput.2 = lognormal 0 0.5\n"
                        "input.3 = tail_mixture moe.csv 0.1 0.5\ninput.4 = empirical moe.csv\n")
    s = config.load(cfg_path)
    model = config.build_model(s)
    assert isinstance(model.marginals[0], Normal)
    assert isinstance(model.marginals[1], LogNormal)
    assert isinstance(model.marginals[2], TwoStratumMixture)
    assert model.marginals[2].natural_p == pytest.approx(0.1)
    assert str(tmp_path) in s.inputs[3]


def test_bad_inputs():
    s = config.parse_pairs([("input.1", "normal 0"), ("input.3", "normal 0 1")])
    with pytest.raises(ConfigError) as info:
        config.build_model(s)
    assert len(info.value.problems) == 2


def test_short_column_default_model_used_without_inputs():
    model = short_column_model()
    assert config.build_model(config.defaults(), model) is model


def test_external_command_paths_resolved(tmp_path):
    (tmp_path / "sim.py").write_text("print(0)")
    (tmp_path / "c.cfg").write_text("problem = external:python3 sim.py --flag\n")
    s = config.load(tmp_path / "c.cfg")
    assert s["problem"] == f"external:python3 {tmp_path / 'sim.py'} --flag"


def test_manifest_is_loadable(tmp_path):
    s = config.defaults().with_overrides(n0=7)
    (tmp_path / "manifest.json").write_text(json.dumps({"config": s.raw()}))
    back = config.load(tmp_path / "manifest.json")
    assert back["n0"] == 7 and back.raw() == s.raw()
    (tmp_path / "bad.json").write_text("{\"nothing\": 1}")
    with pytest.raises(ConfigError):
        config.load(tmp_path / "bad.json")


def test_missing_file():
    with pytest.raises(ConfigError, match="cannot read"):
        config.load("/nonexistent/config.cfg")
