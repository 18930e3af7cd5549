"""Run configuration: one JSON document describing an experiment."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import re
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from . import arraysim, dsp, stimgen, wormsim
from .pipeline import Preparation

GRID_WIDTHS_MS = (2.0, 2.5, 2.86, 3.33, 4.0, 5.0, 6.67)
GRID_AMPLITUDES_VPP = (2.0, 4.0, 5.0, 6.0)
SEED_ENV = "NEUROMAPS_SEED"


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


@dataclass(frozen=True)
class SweepConfig:
    widths_ms: tuple[float, ...] = (3.33,)
    amplitudes_vpp: tuple[float, ...] = GRID_AMPLITUDES_VPP
    responder: str = "pipeline"
    gate: str = "spikes"


@dataclass(frozen=True)
class SDMapConfig:
    widths_ms: tuple[float, ...] = GRID_WIDTHS_MS
    bracket_vpp: tuple[float, float] = (0.5, 12.0)
    tol_vpp: float = 0.05
    responder: str = "pipeline"
    gate: str = "spikes"
    margin: float = 0.05


def _default_stimulus():
    return stimgen.StimulusParams(amplitude_vpp=5.0, pulse_width_ms=3.33, burst_rate_hz=1.0, n_pulses=5,
                                  start_time_s=0.2)


@dataclass(frozen=True)
class RunConfig:
    seed: int | None = None
    sample_rate_hz: float = 10_000.0
    motion_rate_hz: float = 30.0
    duration_s: float | None = None
    worm: wormsim.WormModel = field(default_factory=wormsim.WormModel)
    geometry: arraysim.ArrayGeometry = field(default_factory=arraysim.ArrayGeometry)
    noise: arraysim.NoiseModel = field(default_factory=arraysim.NoiseModel)
    stimulus: stimgen.StimulusParams = field(default_factory=_default_stimulus)
    dsp: dsp.DetectionConfig = field(default_factory=dsp.DetectionConfig)
    sweep: SweepConfig | None = None
    sd_map: SDMapConfig | None = None
    output_dir: str = "out"

    def preparation(self) -> Preparation:
        return Preparation(self.worm, self.geometry, self.noise, self.dsp, self.sample_rate_hz, self.motion_rate_hz)

    def is_noisy(self) -> bool:
        n = self.noise
        return any(x > 0 for x in (n.mains_uv, n.gaussian_sigma_uv, n.tracking_sigma_cm))

    def fingerprint(self) -> str:
        """SHA-256 of the canonical config, output directory excluded."""
        d = dataclasses.asdict(self)
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _build(tp, value, path, base=None):
    """Typed copy of ``value``; a dict overrides only the fields it names on ``base``."""
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _build(inner[0], value, path, base)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected an object, got {type(value).__name__}")
        hints = typing.get_type_hints(tp)
        names = {f.name for f in dataclasses.fields(tp) if f.init}
        unknown = sorted(set(value) - names)
        if unknown:
            raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")
        kwargs = {
            k: _build(hints[k], v, f"{path}.{k}" if path else k, None if base is None else getattr(base, k))
            for k, v in value.items()
        }
        if base is not None:
            return dataclasses.replace(base, **kwargs)
        missing = [f.name for f in dataclasses.fields(tp)
                   if f.init and f.name not in kwargs
                   and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
        if missing:
            raise ConfigError(f"{path}.{missing[0]}" if path else missing[0], "required field missing")
        return tp(**kwargs)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, "expected a list")
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_build(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(path, f"expected {len(args)} values")
        return tuple(_build(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    raise ConfigError(path, f"unsupported field type {tp}")


def _check(problems, path, obj=None):
    if not problems:
        return
    first = problems[0]
    # validators lead with the offending field name; extend the path when they do
    m = re.match(r"([A-Za-z_]+)(?:\.([a-z_]+))?", first)
    if m and obj is not None and dataclasses.is_dataclass(obj):
        names = {f.name for f in dataclasses.fields(obj)}
        head = m.group(1).lower()
        if head in names:
            path = f"{path}.{head}"
            sub = getattr(obj, head)
            if m.group(2) and dataclasses.is_dataclass(sub) and m.group(2) in {f.name for f in dataclasses.fields(sub)}:
                path = f"{path}.{m.group(2)}"
    raise ConfigError(path, first)


def validate_config(cfg: RunConfig) -> None:
    """Raise ``ConfigError`` naming the first invalid field."""
    _check(wormsim.validate_model(cfg.worm), "worm", cfg.worm)
    _check(arraysim.validate_geometry(cfg.geometry), "geometry", cfg.geometry)
    _check(arraysim.validate_noise(cfg.noise), "noise", cfg.noise)
    _check(stimgen.validate_params(cfg.stimulus), "stimulus", cfg.stimulus)
    if not cfg.sample_rate_hz > 0:
        raise ConfigError("sample_rate_hz", "must be positive")
    if not cfg.motion_rate_hz > 0:
        raise ConfigError("motion_rate_hz", "must be positive")
    for name in ("notch", "lowpass"):
        spec = getattr(cfg.dsp, name)
        if spec is not None:
            _check(dsp.validate_filter(spec, cfg.sample_rate_hz), f"dsp.{name}", spec)
    if not cfg.dsp.k_mad > 0:
        raise ConfigError("dsp.k_mad", "must be positive")
    if cfg.dsp.refractory_ms < 0:
        raise ConfigError("dsp.refractory_ms", "must be non-negative")
    if cfg.sweep is not None:
        if not cfg.sweep.widths_ms:
            raise ConfigError("sweep.widths_ms", "must be non-empty")
        if not cfg.sweep.amplitudes_vpp:
            raise ConfigError("sweep.amplitudes_vpp", "must be non-empty")
        _check_responder(cfg.sweep, "sweep")
    if cfg.sd_map is not None:
        sd = cfg.sd_map
        if not sd.widths_ms:
            raise ConfigError("sd_map.widths_ms", "must be non-empty")
        if any(not w > 0 for w in sd.widths_ms):
            raise ConfigError("sd_map.widths_ms", "widths must be positive")
        if not sd.bracket_vpp[1] > sd.bracket_vpp[0] >= 0:
            raise ConfigError("sd_map.bracket_vpp", "need 0 <= low < high")
        if not sd.tol_vpp > 0:
            raise ConfigError("sd_map.tol_vpp", "must be positive")
        if sd.margin < 0:
            raise ConfigError("sd_map.margin", "must be non-negative")
        _check_responder(sd, "sd_map")


def _check_responder(section, path):
    if section.responder not in ("pipeline", "model"):
        raise ConfigError(f"{path}.responder", "must be 'pipeline' or 'model'")
    if section.gate not in ("spikes", "motion"):
        raise ConfigError(f"{path}.gate", "must be 'spikes' or 'motion'")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("", f"expected an object, got {type(data).__name__}")
    cfg = _build(RunConfig, data, "", RunConfig())
    dsp_data = data.get("dsp")
    if not (isinstance(dsp_data, dict) and "notch" in dsp_data) and cfg.dsp.notch is not None:
        # an unspecified notch tracks the configured mains frequency
        notch = dataclasses.replace(cfg.dsp.notch, center_hz=cfg.noise.mains_hz)
        cfg = dataclasses.replace(cfg, dsp=dataclasses.replace(cfg.dsp, notch=notch))
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def resolve_seed(cfg: RunConfig, override: int | None = None) -> int:
    """Seed precedence: explicit override, config, then the environment."""
    if override is not None:
        return override
    if cfg.seed is not None:
        return cfg.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError("seed", f"{SEED_ENV}={env!r} is not an integer") from None
    if cfg.is_noisy():
        raise ConfigError("seed", f"a seed is required for noisy runs (config, --seed or {SEED_ENV})")
    return 0
