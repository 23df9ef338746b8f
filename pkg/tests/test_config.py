import numpy as np
import pytest

from hsphere.config import (DEFAULTS, build_functional, build_initial_state, load_config, parse_config,
                            resolved_yaml)
from hsphere.errors import ConfigParse, ValidationFailed


def test_defaults_resolve_and_round_trip():
    cfg = parse_config("")
    assert cfg["mesh"]["subdivisions"] == DEFAULTS["mesh"]["subdivisions"]
    assert parse_config(resolved_yaml(cfg)) == cfg


@pytest.mark.parametrize("path", ["configs/cmc_r3.yaml", "configs/s3_equator.yaml", "configs/s3_minmax.yaml",
                                  "configs/cmc_continuation.yaml", "configs/scan_single.yaml"])
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    fun = build_functional(cfg)
    u = build_initial_state(cfg, fun)
    assert u.shape == (fun.mesh.n_vertices, fun.K)


@pytest.mark.parametrize("text", ["mesh: [1, 2", "- just\n- a list", "a: b: c"])
def test_unparseable_yaml(text):
    with pytest.raises(ConfigParse):
        parse_config(text)


@pytest.mark.parametrize("text", [
    "typo: 1",
    "mesh: {subdivisions: 12}",
    "mesh: {subdivisions: 2.5}",
    "mesh: 3",
    "target: {kind: klein_bottle}",
    "target: {kind: round_sphere, n: 9}",
    "form: {kind: cosine, bogus: 1}",
    "form: {kind: expression, components: {'0,1': 'y0 +'}}",
    "functional: {alpha: 0.5}",
    "functional: {tau: 2.0}",
    "functional: {schedule: [1.2, 1.3]}",
    "solver: {method: magic}",
    "init: {kind: file}",
    "scan: {lambdas: [2.0, 1.0]}",
    "scan: {family: grid}",
    "index: {gauge: weird}",
    "diagnose: {radii: [2.0]}",
    "seed: -1",
    "seed: true",
])
def test_invalid_values_rejected(text):
    with pytest.raises(ValidationFailed):
        parse_config(text)


def test_missing_config_file():
    with pytest.raises(ConfigParse):
        load_config("no/such/file.yaml")


def test_initial_state_seeded_noise():
    text = "target: {kind: round_sphere, n: 2}\ninit: {kind: identity, noise: 0.05}\nmesh: {subdivisions: 1}"
    cfg = parse_config(text)
    fun = build_functional(cfg)
    a, b = build_initial_state(cfg, fun), build_initial_state(cfg, fun)
    assert np.array_equal(a, b)
    cfg["seed"] = 1
    assert not np.array_equal(a, build_initial_state(cfg, fun))


@pytest.mark.parametrize("text", [
    "target: {kind: round_sphere, n: 3}\ninit: {kind: identity}",
    "target: {kind: round_sphere, n: 2}\ninit: {kind: equator}",
    "target: {kind: round_sphere, n: 2}\ninit: {kind: blob}",
    "target: {kind: flat_torus, n: 3}\ninit: {kind: identity}",
])
def test_init_kind_target_mismatch(text):
    cfg = parse_config(text + "\nmesh: {subdivisions: 1}")
    with pytest.raises(ValidationFailed):
        build_initial_state(cfg, build_functional(cfg))
