import pytest
from hypothesis import given
from hypothesis import strategies as st

from revsph import config as cf


@pytest.mark.parametrize("name", ["dambreak", "gresho"])
def test_defaults_validate_and_round_trip(name):
    cfg = cf.default_config(name)
    assert cfg.name == name
    again = cf.parse_config(cf.render_config(cfg))
    assert again == cfg and again.hash() == cfg.hash()


def test_dambreak_defaults_match_benchmark_table():
    cfg = cf.default_config()
    p = cfg["physics"]
    assert (p["l_wcw"], p["l_wch"], p["l_bw"], p["l_bh"]) == (1.0, 2.0, 4.0, 3.0)
    assert (p["rho0"], p["c"], p["g"]) == (1000.0, 120.0, 9.8)
    assert cfg["integrator"]["arithmetic"] == "fixpa"
    ic = cf.integrator_config(cfg)
    assert ic.dt == pytest.approx(0.2 * 3 * 0.005 / 120)


@pytest.mark.parametrize("text, match", [
    ("[scenario]\nfoo = 1\n", "unknown key"),
    ("[extras]\na = 1\n", "unknown table"),
    ("[scenario]\ndr = -0.1\n", "dr"),
    ("[integrator]\ndt_factor = 0.0\n", "dt_factor"),
    ("[integrator]\narithmetic = 'double'\n", "arithmetic"),
    ("[scenario]\ndr = 'x'\n", "dr"),
    ("[isc]\nenabled = 1\n", "enabled"),
    ("[scenario]\nseed = 1.5\n", "seed"),
    ("[integrator]\nend_time = 1.0\nreverse_at = 2.0\n", "reverse_at"),
    ("[scenario\n", "malformed"),
    ("[scenario]\nname = 'taylor'\n", "name"),
])
def test_invalid_files_name_the_key(text, match):
    with pytest.raises(cf.ConfigError, match=match):
        cf.parse_config(text)


def test_overrides_revalidate():
    cfg = cf.default_config("gresho")
    new = cf.with_overrides(cfg, scenario={"dr": 0.02}, isc={"enabled": True})
    assert new["scenario"]["dr"] == 0.02 and new["isc"]["enabled"]
    assert new.hash() != cfg.hash()
    with pytest.raises(cf.ConfigError):
        cf.with_overrides(cfg, output={"every": 0})


def test_load_from_file(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text("[scenario]\nname = 'gresho'\ndr = 0.05\n")
    cfg = cf.load_config(p)
    assert cf.to_gresho(cfg).dr == 0.05


@given(st.floats(1e-3, 0.1), st.sampled_from(["wendland2", "cubic_spline"]),
       st.integers(0, 10**6), st.booleans())
def test_render_parse_round_trip(dr, kernel, seed, isc):
    cfg = cf.from_dict({"scenario": {"name": "gresho", "dr": dr, "kernel": kernel, "seed": seed},
                        "isc": {"enabled": isc}})
    assert cf.parse_config(cf.render_config(cfg)) == cfg


def test_hash_ignores_output_directory_only():
    cfg = cf.default_config()
    assert cf.with_overrides(cfg, output={"dir": "elsewhere"}).hash() == cfg.hash()
    assert cf.with_overrides(cfg, output={"every": 7}).hash() != cfg.hash()
