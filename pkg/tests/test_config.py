from __future__ import annotations

import copy
import json

import pytest

from shearcoorb.config import ConfigError, load_config, shipped_config_path, validate


@pytest.fixture()
def raw():
    return json.loads(shipped_config_path().read_text())


def test_shipped_configs_parse_with_stable_hash():
    for name in ("default_d3.json", "default_d5.json"):
        a = load_config(shipped_config_path(name))
        b = load_config(shipped_config_path(name))
        assert a.config_hash == b.config_hash
        assert len(a.config_hash) == 64
    assert load_config(shipped_config_path()).d == 3
    assert load_config(shipped_config_path("default_d5.json")).d == 5


def test_defaults_are_filled(raw):
    minimal = {k: raw[k] for k in ("grid", "window", "paramgrid", "phantom")}
    for key in ("cells_per_octave", "scale_representative", "nyquist_margin"):
        minimal["paramgrid"].pop(key, None)
    cfg = validate(minimal)
    assert cfg.section("paramgrid")["cells_per_octave"] == 1
    assert cfg.section("weights")["p"] == [1.0, 2.0, "inf"]
    assert cfg.section("io")["out_dir"] == "out"
    assert cfg.seed == 0


@pytest.mark.parametrize(
    "path,value,pointer",
    [
        (("grid", "d"), 4, "/grid/d"),
        (("grid", "n"), 12, "/grid/n"),
        (("grid", "L"), -1, "/grid/L"),
        (("weights", "r"), [-1.0], "/weights/r/0"),
        (("weights", "r"), [0.0, -0.5], "/weights/r/1"),
        (("weights", "p"), [0.5], "/weights/p/0"),
        (("window", "a1"), 0.01, "/window/a1"),
        (("window", "b"), [1.0], "/window/b"),
        (("kernel", "rho_schedule"), [2.0, 1.0], "/kernel/rho_schedule"),
        (("kernel", "q"), [0.5], "/kernel/q/0"),
        (("paramgrid", "scale_representative"), "median", "/paramgrid/scale_representative"),
        (("phantom", "band"), [0.3, 0.1], "/phantom/band"),
        (("seed",), -3, "/seed"),
        (("grid", "d"), True, "/grid/d"),
    ],
)
def test_schema_violations_carry_pointer(raw, path, value, pointer):
    bad = copy.deepcopy(raw)
    node = bad
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    with pytest.raises(ConfigError) as exc:
        validate(bad)
    assert exc.value.pointer == pointer
    assert str(exc.value).startswith(f"config error at {pointer}:")


def test_unknown_keys_rejected(raw):
    bad = dict(raw, extra=1)
    with pytest.raises(ConfigError, match="/extra"):
        validate(bad)
    bad = copy.deepcopy(raw)
    bad["grid"]["spacing"] = 2
    with pytest.raises(ConfigError, match="/grid/spacing"):
        validate(bad)


def test_missing_required_key(raw):
    bad = copy.deepcopy(raw)
    del bad["window"]["a0"]
    with pytest.raises(ConfigError, match="/window/a0"):
        validate(bad)


def test_hash_ignores_io_but_not_semantics(raw):
    base = validate(raw).config_hash
    moved = copy.deepcopy(raw)
    moved["io"] = {"out_dir": "elsewhere"}
    assert validate(moved).config_hash == base
    changed = copy.deepcopy(raw)
    changed["seed"] = 99
    assert validate(changed).config_hash != base


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


def test_builders(raw):
    cfg = validate(raw)
    g = cfg.grid_spec()
    assert (g.d, g.n, g.L) == (3, 32, 16.0)
    assert cfg.window_params().a1 == 0.1875
    spec = cfg.phantom_spec(4)
    assert spec.seed == 4 and spec.band == (0.125, 0.25)


def test_auto_shear_radius(raw):
    cfg = copy.deepcopy(raw)
    cfg["paramgrid"].pop("shear_radius")
    rc = validate(cfg)
    assert rc.section("paramgrid")["shear_radius"] == "auto"
    from shearcoorb.windows import support_boxes

    d1 = support_boxes(rc.window_params()).d1
    assert rc.shear_radius() == pytest.approx(list(d1 + 1.0))
    assert validate(raw).shear_radius() == [1.5, 1.5]
    bad = copy.deepcopy(raw)
    bad["paramgrid"]["shear_radius"] = "wide"
    with pytest.raises(ConfigError, match="/paramgrid/shear_radius"):
        validate(bad)
