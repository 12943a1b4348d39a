"""Run configuration parsing, validation and overrides."""

import json

import pytest

from drharmonic.config import ConfigError, RunConfig, load_config, override, parse_config


def test_defaults_valid():
    cfg = load_config(None)
    assert cfg.build_space().n == 4
    assert cfg.seed == 0 and cfg.format == "csv"


def test_json_syntax_error_has_position():
    with pytest.raises(ConfigError, match=r"line 3, column \d+"):
        parse_config('{\n  "seed": 1,\n  "p": ,\n}')


def test_unknown_field():
    with pytest.raises(ConfigError, match="unknown config field.*colour"):
        parse_config('{"colour": 1}')


def test_top_level_must_be_object():
    with pytest.raises(ConfigError):
        parse_config("[1, 2]")


@pytest.mark.parametrize("tol", [0, -1e-6, "small"])
def test_tolerances_positive(tol):
    with pytest.raises(ConfigError, match="tolerances.roundtrip"):
        parse_config(json.dumps({"tolerances": {"roundtrip": tol}}))


@pytest.mark.parametrize("seed", [1.5, "7", True])
def test_seed_integer(seed):
    with pytest.raises(ConfigError, match="seed"):
        parse_config(json.dumps({"seed": seed}))


def test_bad_space_names_field():
    with pytest.raises(ConfigError, match="field 'space'"):
        parse_config('{"space": {"family": "octonionic", "k": 1}}')


def test_perturbed_generators_report_residual():
    text = json.dumps({"space": {"m_v": 2, "m_z": 1, "j_maps": [[[0, -2], [1, 0]]]}})
    with pytest.raises(ConfigError, match="residual"):
        parse_config(text)


def test_explicit_generators_accepted():
    cfg = parse_config(json.dumps({"space": {"m_v": 2, "m_z": 1, "j_maps": [[[0, -1], [1, 0]]]}}))
    assert cfg.build_space().Q == 2.0


def test_ranges_validated():
    with pytest.raises(ConfigError, match="lambda_range"):
        parse_config('{"lambda_range": [5, 1, 3]}')
    with pytest.raises(ConfigError, match="format"):
        parse_config('{"format": "xml"}')


def test_override_ignores_none_and_revalidates():
    cfg = RunConfig()
    override(cfg, seed=None, space="quaternionic:k=1")
    assert cfg.seed == 0 and cfg.build_space().m_z == 3
    with pytest.raises(ConfigError):
        override(cfg, mc_samples=0)


def test_roundtrip_through_json(tmp_path):
    cfg = RunConfig(seed=11, p=4.0)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_config(str(path)) == cfg
