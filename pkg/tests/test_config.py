import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from nvplace.config import (ConfigError, RunConfig, config_hash, dump_config, load_config,
                            load_preset, parse_config, preset_names)


def test_presets_present():
    names = preset_names()
    for n in ("nvcount_280nm_D17", "nvcount_480nm_D17", "nvcount_mesa_D17", "sensitivity_reference"):
        assert n in names


@pytest.mark.parametrize("name", preset_names())
def test_preset_round_trip(name):
    cfg = load_preset(name)
    assert parse_config(dump_config(cfg)) == cfg
    assert dump_config(parse_config(dump_config(cfg))) == dump_config(cfg)


def test_nvcount_preset_contents():
    cfg = load_preset("nvcount_480nm_D17")
    assert cfg.beam.dose_pC == [8.0, 24.0, 80.0, 240.0, 800.0, 2400.0]
    assert cfg.lattice.diffusion_constant_nm2_per_s == 17.0
    assert cfg.lattice.anneal_time_s == 660.0
    assert cfg.geometry.top_diameter_nm == 480.0


@given(seed=st.integers(0, 2 ** 31), trials=st.integers(1, 500),
       d=st.floats(0.1, 100.0, allow_nan=False), doses=st.lists(st.floats(0, 3000), min_size=1, max_size=6))
def test_round_trip_property(seed, trials, d, doses):
    cfg = RunConfig(master_seed=seed, trials=trials)
    cfg = dataclasses.replace(cfg, lattice=dataclasses.replace(cfg.lattice, diffusion_constant_nm2_per_s=d),
                              beam=dataclasses.replace(cfg.beam, dose_pC=doses))
    assert parse_config(dump_config(cfg)) == cfg


def test_unknown_key_reports_line():
    text = "trials: 3\ngeometry:\n  kind: pillar\n  top_diameter: 280\n"
    with pytest.raises(ConfigError) as err:
        parse_config(text, "x.yaml")
    assert err.value.line == 4
    assert "x.yaml:4" in str(err.value)
    assert "geometry.top_diameter" in str(err.value)


@pytest.mark.parametrize("text,line", [
    ("trials: many\n", 1),
    ("layer:\n  include_interface_layer: 3\n", 2),
    ("beam:\n  dose_pC: [1, x]\n", 2),
])
def test_type_errors_report_line(text, line):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert err.value.line == line


def test_exponent_without_dot_accepted():
    cfg = parse_config("layer:\n  areal_density_per_cm2: 1e12\n")
    assert cfg.layer.areal_density_per_cm2 == 1e12


def test_physical_validation_surfaces_as_config_error():
    with pytest.raises(ConfigError):
        parse_config("beam:\n  alpha: 2.0\n")
    with pytest.raises(ConfigError):
        parse_config("geometry:\n  kind: sphere\n")


def test_yaml_syntax_error():
    with pytest.raises(ConfigError):
        parse_config("trials: [1\n")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_hash_ignores_execution_fields():
    a = RunConfig(threads=1, output_dir="a")
    b = RunConfig(threads=8, output_dir="b")
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(RunConfig(master_seed=1))


def test_scenario_for():
    cfg = load_preset("nvcount_mesa_D17")
    sc = cfg.scenario_for(24.0)
    assert sc.beam.dose_pC == 24.0
    assert sc.lattice.total_jumps == round(6 * 17 * 660)
