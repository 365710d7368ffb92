"""Experiment configuration: schema validation, defaults, protocol rules."""

import json

import pytest

from zcoh.chain import CouplingMode
from zcoh.config import (
    ConfigError,
    ExperimentConfig,
    load_config_file,
    load_schema,
    resolve_config,
    validate_config,
)
from zcoh.optimize import ResidualForm
from zcoh.presets import PRESETS, preset_config
from zcoh.solvers import RegistrationCriterion


def minimal(**overrides):
    raw = {"protocol": "registration-time", "n": [10], "n_sender": 2}
    raw.update(overrides)
    return raw


def test_schema_loads_and_validates():
    schema = load_schema()
    assert schema["properties"]["protocol"]["enum"]
    validate_config(minimal())


def test_missing_required_field_names_path():
    with pytest.raises(ConfigError) as info:
        validate_config({"protocol": "registration-time"})
    assert info.value.path == "$"
    with pytest.raises(ConfigError) as info:
        validate_config(minimal(n=[10, "x"]))
    assert info.value.path == "$.n"


def test_unknown_field_rejected():
    with pytest.raises(ConfigError):
        validate_config(minimal(banana=1))


def test_unknown_protocol_rejected():
    with pytest.raises(ConfigError) as info:
        validate_config(minimal(protocol="teleport"))
    assert info.value.path == "$.protocol"


def test_resolve_fills_defaults():
    cfg = resolve_config(minimal())
    assert cfg.n_values == (10,)
    assert cfg.n_receiver == 2
    assert cfg.coupling_mode is CouplingMode.DIPOLAR
    assert cfg.seed == 0
    assert cfg.n_trials == 100
    assert cfg.output_dir == "results"
    assert cfg.objective.residual_form is ResidualForm.MAX
    # the resolved dict embeds every default for output provenance
    assert cfg.resolved["optimizer"]["max_generations"] == 300
    assert cfg.resolved["coupling_mode"] == "full-dipolar"


def test_n_range_form():
    cfg = resolve_config(minimal(n={"start": 10, "stop": 20, "step": 5}))
    assert cfg.n_values == (10, 15, 20)
    with pytest.raises(ConfigError, match="empty"):
        resolve_config(minimal(n={"start": 20, "stop": 10}))


def test_chain_must_hold_sender_and_receiver():
    with pytest.raises(ConfigError, match="cannot hold"):
        resolve_config(minimal(n=[3]))


def test_er_resolution_rules():
    cfg = resolve_config(minimal(protocol="ptz-restricted", n_er=4))
    assert cfg.er_sizes == (4,)
    cfg = resolve_config(minimal(protocol="ptz-restricted", n_ancilla=[1, 2]))
    assert cfg.er_sizes == (3, 4)
    with pytest.raises(ConfigError, match="not both"):
        resolve_config(minimal(n_er=4, n_ancilla=1))
    with pytest.raises(ConfigError, match="smaller than the receiver"):
        resolve_config(minimal(n_er=1))


def test_er_protocol_defaults():
    restricted = resolve_config(minimal(protocol="ptz-restricted"))
    assert restricted.er_list() == (3,)
    arbitrary = resolve_config(minimal(protocol="arbitrary-parameter"))
    assert arbitrary.er_list() == (3,)
    arb3 = resolve_config(minimal(protocol="arbitrary-parameter", n_sender=3))
    assert arb3.er_list() == (5,)  # 2 n_sender - 1


def test_criterion_rule():
    assert (
        resolve_config(minimal()).criterion_or_rule()
        is RegistrationCriterion.TWO_EXCITATION_PROBABILITY
    )
    assert (
        resolve_config(minimal(n_sender=3)).criterion_or_rule()
        is RegistrationCriterion.FROBENIUS_W
    )
    assert (
        resolve_config(minimal(protocol="ptz-restricted")).criterion_or_rule()
        is RegistrationCriterion.FROBENIUS_W
    )
    forced = resolve_config(minimal(criterion="max-frobenius-w"))
    assert forced.criterion_or_rule() is RegistrationCriterion.FROBENIUS_W


def test_window_and_grid_steps():
    cfg = resolve_config(minimal())
    assert cfg.window is None
    assert cfg.registration_grid_step() == 0.01
    assert cfg.scan_grid_step() == 0.05
    cfg = resolve_config(minimal(window=[5.0, 9.0], grid_step=0.1))
    assert cfg.window == (5.0, 9.0)
    assert cfg.registration_grid_step() == 0.1
    assert cfg.scan_grid_step() == 0.1
    with pytest.raises(ConfigError, match="increasing"):
        resolve_config(minimal(window=[9.0, 5.0]))


def test_oracle_size_cap():
    resolve_config(minimal(protocol="oracle-check", n=[8]))
    with pytest.raises(ConfigError, match="capped"):
        resolve_config(minimal(protocol="oracle-check", n=[11]))


def test_de_config_profiles():
    cfg = resolve_config(minimal())
    de = cfg.de_config(seed=5)
    assert de.population_size == 30  # standard: 15 per sender site
    assert de.max_generations == 300
    assert de.seed == 5
    de = cfg.de_config(seed=5, max_generations=40)
    assert de.max_generations == 40

    stress = resolve_config(minimal(optimizer={"profile": "stress"}))
    de = stress.de_config(seed=1)
    assert de.population_size == 2000
    assert de.mutation_range == (1.9, 1.9)

    custom = resolve_config(
        minimal(optimizer={"population_size": 64, "mutation_range": [0.4, 0.9]})
    )
    de = custom.de_config(seed=2)
    assert de.population_size == 64
    assert de.mutation_range == (0.4, 0.9)


def test_point_seed_stable_and_distinct():
    cfg = resolve_config(minimal(seed=11))
    assert cfg.point_seed(0) == cfg.point_seed(0)
    assert cfg.point_seed(0) != cfg.point_seed(1)
    other = resolve_config(minimal(seed=12))
    assert cfg.point_seed(0) != other.point_seed(0)


def test_load_config_file(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(minimal()))
    assert load_config_file(str(path))["protocol"] == "registration-time"
    with pytest.raises(ConfigError):
        load_config_file(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config_file(str(bad))


def test_presets_all_resolve():
    for name in PRESETS:
        cfg = resolve_config(preset_config(name))
        assert isinstance(cfg, ExperimentConfig)
    with pytest.raises(KeyError, match="table1"):
        preset_config("nope")


def test_preset_copies_are_independent():
    a = preset_config("table1")
    a["n"] = [4]
    assert preset_config("table1")["n"] != [4]
