import pytest

from qbitnegf.config import ConfigError, RunConfig, load_config, parse_config


def test_defaults_when_empty():
    assert parse_config("") == RunConfig()


def test_round_trip():
    cfg = RunConfig().override("bias", vg1=1.2, vd=0.042).override("numerics", flatband_voltage=0.5)
    assert parse_config(cfg.to_ini()) == cfg


def test_types_are_converted():
    cfg = parse_config(
        "[numerics]\nmax_iter = 12\nungated_coupling = no\nflatband_voltage = none\n"
        "[geometry]\nradius = 3.0  # nm\n"
    )
    assert cfg.numerics.max_iter == 12
    assert cfg.numerics.ungated_coupling is False
    assert cfg.numerics.flatband_voltage is None
    assert cfg.geometry.radius == 3.0


@pytest.mark.parametrize(
    "text, match",
    [
        ("[bias]\nvg3 = 1\n", "unknown key"),
        ("[gates]\nvg1 = 1\n", "unknown section"),
        ("[numerics]\nmax_iter = many\n", "cannot parse"),
        ("[numerics]\nungated_coupling = maybe\n", "boolean"),
        ("[numerics]\nmixing = 2\n", "mixing"),
    ],
)
def test_bad_config_fails_fast(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_override_ignores_none_and_checks_keys():
    cfg = RunConfig()
    assert cfg.override("bias", vg1=None) is cfg
    with pytest.raises(ConfigError):
        cfg.override("bias", nope=1.0)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.ini")
