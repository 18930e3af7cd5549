import json
from importlib import resources

import pytest

from neuromaps.config import (
    GRID_AMPLITUDES_VPP, GRID_WIDTHS_MS, ConfigError, RunConfig, config_from_dict, load_config, resolve_seed,
)


def test_empty_config_is_defaults():
    assert config_from_dict({}) == RunConfig()


def test_partial_override_keeps_other_defaults():
    cfg = config_from_dict({"worm": {"lgf": {"chronaxie_ms": 2.5}}, "stimulus": {"n_pulses": 2}})
    assert cfg.worm.lgf.chronaxie_ms == 2.5
    assert cfg.worm.lgf.velocity_m_per_s == 12.6
    assert cfg.stimulus.n_pulses == 2 and cfg.stimulus.start_time_s == 0.2


@pytest.mark.parametrize("data,path", [
    ({"worm": {"mgf": {"velocity_m_per_s": "fast"}}}, "worm.mgf.velocity_m_per_s"),
    ({"worm": {"lgf": {"chronaxie_ms": -1}}}, "worm.lgf.chronaxie_ms"),
    ({"stimulus": {"pulse_width_ms": 0}}, "stimulus.pulse_width_ms"),
    ({"geometry": {"pitch_cm": 0}}, "geometry.pitch_cm"),
    ({"noise": {"gaussian_sigma_uv": -1}}, "noise.gaussian_sigma_uv"),
    ({"dsp": {"lowpass": {"kind": "lowpass", "cutoff_hz": 9000}}}, "dsp.lowpass.cutoff_hz"),
    ({"sd_map": {"bracket_vpp": [4, 2]}}, "sd_map.bracket_vpp"),
    ({"sd_map": {"widths_ms": [1, "x"]}}, "sd_map.widths_ms[1]"),
    ({"sweep": {"gate": "eyes"}}, "sweep.gate"),
    ({"mystery": 1}, "mystery"),
    ({"stimulus": {"n_pulses": 1.5}}, "stimulus.n_pulses"),
])
def test_errors_name_the_field(data, path):
    with pytest.raises(ConfigError) as exc:
        config_from_dict(data)
    assert exc.value.path == path


def test_notch_follows_mains_unless_given():
    assert config_from_dict({"noise": {"mains_hz": 50}}).dsp.notch.center_hz == 50
    explicit = {"noise": {"mains_hz": 50}, "dsp": {"notch": {"kind": "notch", "center_hz": 60, "order": 2}}}
    assert config_from_dict(explicit).dsp.notch.center_hz == 60
    assert config_from_dict({"dsp": {"notch": None}}).dsp.notch is None


def test_fingerprint_ignores_output_dir():
    a = config_from_dict({"output_dir": "a"})
    assert a.fingerprint() == config_from_dict({"output_dir": "b"}).fingerprint()
    assert a.fingerprint() != config_from_dict({"seed": 1}).fingerprint()


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv("NEUROMAPS_SEED", raising=False)
    cfg = config_from_dict({"seed": 3})
    assert resolve_seed(cfg, 9) == 9
    assert resolve_seed(cfg) == 3
    monkeypatch.setenv("NEUROMAPS_SEED", "11")
    assert resolve_seed(RunConfig()) == 11
    monkeypatch.setenv("NEUROMAPS_SEED", "x")
    with pytest.raises(ConfigError):
        resolve_seed(RunConfig())


def test_noisy_run_requires_seed(monkeypatch):
    monkeypatch.delenv("NEUROMAPS_SEED", raising=False)
    with pytest.raises(ConfigError, match="seed"):
        resolve_seed(RunConfig())
    quiet = config_from_dict({"noise": {"mains_uv": 0, "gaussian_sigma_uv": 0, "tracking_sigma_cm": 0}})
    assert resolve_seed(quiet) == 0


def test_invalid_json_reports_line(tmp_path):
    path = tmp_path / "c.json"
    path.write_text('{\n "seed": 1,\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(path)


def test_bundled_configs_load():
    folder = resources.files("neuromaps") / "configs"
    names = sorted(p.name for p in folder.iterdir() if p.name.endswith(".json"))
    assert "sweep_grid.json" in names and "sd_map.json" in names
    for name in names:
        load_config(folder / name)
    grid = json.loads((folder / "sweep_grid.json").read_text())["sweep"]
    assert tuple(grid["widths_ms"]) == GRID_WIDTHS_MS
    assert tuple(grid["amplitudes_vpp"]) == GRID_AMPLITUDES_VPP
