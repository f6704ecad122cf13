import dataclasses

import pytest

from adaseq import config as cfgmod
from adaseq.config import ConfigError, ExperimentConfig, from_dict, load, preset


def test_presets_validate():
    assert set(cfgmod.PRESETS) == {"synth-regression", "synth-regression-cost", "synth-classification", "csv-stream"}
    for name in cfgmod.PRESETS:
        cfg = preset(name)
        assert cfg.name == name and name in cfgmod.PRESET_NOTES
    with pytest.raises(ConfigError, match="unknown name"):
        preset("nope")


def test_preset_is_a_fresh_copy():
    a = preset("synth-regression")
    a.policy.approaches.append("cv")
    assert "cv" not in preset("synth-regression").policy.approaches


def test_toml_round_trip(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text("""
[scenario]
rho = 0.5
horizon = 10

[bound]
c_alpha = 10.0
c_beta = 2

[policy]
eps = 0.2
approaches = ["no-update", "known-rho"]
rho_known = 0.5

[run]
runs = 3
""")
    cfg = load(p)
    assert cfg.name == "exp" and cfg.scenario.rho == 0.5 and cfg.bound.c_beta == 2.0
    assert isinstance(cfg.bound.c_beta, float) and cfg.run.runs == 3
    assert from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("data,path", [
    ({"scenario": {"rho": "fast"}}, "scenario.rho"),
    ({"scenario": {"speed": 1}}, "scenario.speed"),
    ({"bogus": {}}, "bogus"),
    ({"run": {"runs": 1.5}}, "run.runs"),
    ({"run": {"runs": 0}}, "run.runs"),
    ({"policy": {"eps": 0}}, "policy.eps"),
    ({"policy": {"approaches": ["magic"]}}, "policy.approaches[0]"),
    ({"policy": {"approaches": ["known-rho"]}}, "policy.rho_known"),
    ({"bound": {"calibrate": "none"}}, "bound.c_alpha"),
    ({"cost": {"K0": 1.5}}, "cost.K0"),
    ({"cv": {"lambdas": [-1.0]}}, "cv.lambdas[0]"),
    ({"scenario": {"kind": "csv"}}, "scenario.path"),
    ({"scenario": {"kind": "classification", "loss": "hinge"}, "bound": {"calibrate": "exact-moments"}}, "bound.calibrate"),
    ({"drift": {"use_dn": "yes"}}, "drift.use_dn"),
])
def test_errors_name_the_field(data, path):
    base = {"bound": {"calibrate": "exact-moments"}}
    merged = {**base, **data}
    with pytest.raises(ConfigError) as err:
        from_dict(merged)
    assert str(err.value).startswith(path)


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[scenario\nrho = 1")
    with pytest.raises(ConfigError):
        load(bad)


def test_to_dict_covers_every_field():
    d = preset("synth-regression").to_dict()
    for f in dataclasses.fields(ExperimentConfig):
        assert f.name in d
        sub = getattr(ExperimentConfig(), f.name)
        if dataclasses.is_dataclass(sub):
            assert set(d[f.name]) == {g.name for g in dataclasses.fields(sub)}
