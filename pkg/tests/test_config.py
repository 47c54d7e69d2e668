import pytest

from optomod.config import load_preset, parse_config, parse_path, parse_yaml, preset_names, with_value
from optomod.errors import ConfigError, OptomodError


def test_presets_listed():
    assert {"paper-fig2", "paper-fig2-unmodulated", "desk-scale", "deep-rwa"} <= set(preset_names())


@pytest.mark.parametrize("name", ["paper-fig2", "paper-fig2-unmodulated", "desk-scale", "deep-rwa"])
def test_echo_round_trip(name):
    cfg = load_preset(name)
    again = parse_config(cfg.to_dict())
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()


def test_yaml_exponent_strings_are_numbers():
    # YAML 1.1 reads "1.4e4" (no dot) as a string
    cfg = parse_yaml("""
system: {L_mm: 25, finesse: 1.4e4, omega_m_hz: 1e6, Q: 1e6, mass_ng: 150, T_K: 0.1,
         lambda_nm: 1064, delta0_over_omega_m: 1, Omega_over_omega_m: 2}
drive: [{n: 0, P_mW: 10}]
solver: {rtol: 1e-9}
""")
    assert cfg.system["finesse"] == 14000.0
    assert cfg.solver.rtol == 1e-9


@pytest.mark.parametrize("text", [
    "bogus: 1\nsynthetic: {}",
    "synthetic: {omega_m: 1, Q: 10, kappa: 0.2, nbar: 0, Omega: 2, G: {0: 0.1}, Delta: {0: 1}, extra: 3}",
    "synthetic: {omega_m: 1, kappa: 0.2, nbar: 0, Omega: 2, G: {0: 0.1}, Delta: {0: 1}}",
    "synthetic: {omega_m: 1, Q: 10, kappa: 0.2, nbar: 0, Omega: 2, G: {0: 0.1}, Delta: {0: 1}}\n"
    "solver: {mode: fast}",
    "synthetic: {omega_m: 1, Q: 10, kappa: 0.2, nbar: 0, Omega: 2, G: {0: 0.1}, Delta: {0: 1}}\n"
    "solver: {N: two}",
    "system: {L_mm: 25}\ndrive: [{n: 0, P_mW: 10}]",
    "name: x",
    "[1, 2",
])
def test_invalid_configs_rejected(text):
    with pytest.raises(OptomodError) as exc:
        parse_yaml(text)
    assert exc.value.exit_code == 2


def test_parse_path():
    assert parse_path("drive.P_mW[1,-1]") == ("drive", "P_mW", (1, -1))
    assert parse_path("synthetic.nbar") == ("synthetic", "nbar", None)
    with pytest.raises(ConfigError):
        parse_path("drive")


def test_with_value_targets():
    cfg = load_preset("paper-fig2")
    p0 = with_value(cfg, "drive.P_mW[1,-1]", 0.0)
    assert [e["P_mW"] for e in p0.drive] == [10.0, 0.0, 0.0]
    assert p0.sweep is None
    assert with_value(cfg, "system.T_K", 0.5).system["T_K"] == 0.5
    desk = load_preset("desk-scale")
    assert with_value(desk, "synthetic.G[-1]", 0.01).synthetic.G[-1] == 0.01
    assert with_value(desk, "synthetic.nbar", 10.0).synthetic.nbar == 10.0
    for bad in ("drive.P_mW", "drive.P_mW[5]", "system.nope", "nowhere.x"):
        with pytest.raises(ConfigError):
            with_value(cfg, bad, 1.0)


def test_unmodulated_preset_is_the_zero_point_of_the_sweep():
    cfg = with_value(load_preset("paper-fig2"), "drive.P_mW[1,-1]", 0.0)
    ref = load_preset("paper-fig2-unmodulated")
    assert cfg.system == ref.system and cfg.drive == ref.drive and cfg.solver == ref.solver
