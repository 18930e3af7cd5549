"""``neuromaps`` command line: simulate, sweep, map-sd, analyze.

Exit codes: 0 success, 1 unexpected failure, 2 invalid config or malformed
input, 3 file system failure, 4 too few SD points. Failures print one JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, arraysim, dsp, looper, motionkin, sdfit
from .config import ConfigError, RunConfig, load_config, resolve_seed
from .pipeline import default_duration, electrical_summary, motion_summary, run_trial

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_IO, EXIT_POINTS = 0, 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, code, kind, message, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, NaN and inf become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_text(path: Path, text: str) -> None:
    path.write_text(text)


def _provenance(cfg: RunConfig, seed: int) -> dict:
    return {"config_fingerprint": cfg.fingerprint(), "seed": seed, "version": __version__}


def _out_dir(cfg: RunConfig, override: str | None) -> Path:
    out = Path(override or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _ground_truth(cfg: RunConfig) -> dict:
    w = cfg.worm
    return {
        "fibers": {
            name: {"velocity_m_per_s": f.velocity_m_per_s, "rheobase_vpp": f.rheobase_vpp,
                   "chronaxie_ms": f.chronaxie_ms, "direction": f.direction}
            for name, f in w.fibers.items()
        },
        "slow_wave": {"velocity_m_per_s": w.slow_wave.velocity_m_per_s,
                      "onset_delay_ms": w.slow_wave.onset_delay_ms},
        "sd_model": w.sd_model,
    }


def cmd_simulate(cfg: RunConfig, seed: int, out: Path) -> list[Path]:
    p = cfg.stimulus
    duration = cfg.duration_s if cfg.duration_s is not None else default_duration(p)
    trial = run_trial(cfg.preparation(), p, seed, duration)
    prov = _provenance(cfg, seed)
    head = [f"config_fingerprint {prov['config_fingerprint']}", f"seed {seed}"]
    pulses = p.pulse_times()

    rec_path, ev_path, mo_path, sum_path = (out / n for n in
                                            ("recording.csv", "events.jsonl", "motion.csv", "summary.json"))
    arraysim.write_recording_csv(rec_path, trial.recording, pulses, p.period_s, head)

    lines = [json.dumps(_clean({"meta": prov}), sort_keys=True)]
    for ev in sorted((e for ch in trial.events for e in ch), key=lambda e: (e.t_s, e.channel)):
        lines.append(json.dumps(_clean(ev.to_json()), sort_keys=True))
    _write_text(ev_path, "\n".join(lines) + "\n")

    motionkin.write_trajectory_csv(mo_path, motionkin.frames_from_trace(trial.motion), head)

    summary = {
        **prov,
        "stimulus": dataclasses.asdict(p),
        "duration_s": duration,
        "pulse_times_s": pulses,
        "positions_cm": trial.recording.metadata["positions_cm"],
        "fiber_spikes": trial.spike_counts(),
        "electrical": electrical_summary(trial.events, pulses, p.period_s,
                                         trial.recording.metadata["positions_cm"], cfg.dsp),
        "motion": motion_summary(trial.motion, cfg.worm.rest_htm_cm, cfg.worm.rest_ttm_cm),
        "ground_truth": _ground_truth(cfg),
    }
    _write_text(sum_path, dump_json(summary))
    return [rec_path, ev_path, mo_path, sum_path]


def _responder(cfg: RunConfig, kind: str, gate: str, seed: int):
    if kind == "model":
        return looper.ModelResponder(cfg.worm, gate)
    return looper.PipelineResponder(cfg.preparation(), gate, master_seed=seed)


def cmd_sweep(cfg: RunConfig, seed: int, out: Path, jobs: int = 1) -> list[Path]:
    if cfg.sweep is None:
        raise ConfigError("sweep", "a sweep section is required")
    sw = cfg.sweep
    result = looper.grid_sweep(_responder(cfg, sw.responder, sw.gate, seed), sw.widths_ms, sw.amplitudes_vpp,
                               seed, cfg.stimulus, jobs)
    prov = _provenance(cfg, seed)
    csv_path, json_path = out / "sweep.csv", out / "sweep.json"
    rows = [f"# config_fingerprint {prov['config_fingerprint']}", f"# seed {seed}",
            "width_ms,amplitude_vpp,seed,responded,charge_vs,n_spikes,error"]
    for c in result.cells:
        fields = [
            repr(c.width_ms), repr(c.amplitude_vpp), str(c.seed),
            "" if c.responded is None else str(int(c.responded)),
            "" if c.charge_vs is None else repr(c.charge_vs),
            "" if c.n_spikes is None else str(c.n_spikes),
            json.dumps(c.error) if c.error else "",
        ]
        rows.append(",".join(fields))
    _write_text(csv_path, "\n".join(rows) + "\n")
    doc = {**prov, "responder": sw.responder, "gate": sw.gate,
           "template": dataclasses.asdict(cfg.stimulus),
           "cells": [dataclasses.asdict(c) for c in result.cells]}
    _write_text(json_path, dump_json(doc))
    return [csv_path, json_path]


def cmd_map_sd(cfg: RunConfig, seed: int, out: Path, jobs: int = 1) -> list[Path]:
    if cfg.sd_map is None:
        raise ConfigError("sd_map", "an sd_map section is required")
    sd = cfg.sd_map
    # thresholds are probed with a single pulse; the rest of the program is kept
    template = dataclasses.replace(cfg.stimulus, n_pulses=1)
    responder = _responder(cfg, sd.responder, sd.gate, seed)
    sdmap = looper.build_sd_map(responder, sd.widths_ms, sd.bracket_vpp, sd.tol_vpp, template, jobs)
    prov = _provenance(cfg, seed)

    pts_path, fit_path, curve_path = out / "sd_points.csv", out / "sd_fit.json", out / "sd_curve.csv"
    sdfit.write_points_csv(pts_path, sdmap.points,
                           [f"config_fingerprint {prov['config_fingerprint']}", f"seed {seed}"])

    grid = np.geomspace(min(sd.widths_ms) / 2.0, max(sd.widths_ms) * 2.0, 60)
    cols = ["width_ms"] + [f"{m}_vpp" for m in sdmap.fits]
    lines = [f"# config_fingerprint {prov['config_fingerprint']}", ",".join(cols)]
    for w in grid:
        vals = [w] + [sdfit.predict_threshold(f, w) for f in sdmap.fits.values()]
        lines.append(",".join("%.10g" % v for v in vals))
    _write_text(curve_path, "\n".join(lines) + "\n")

    truth = _ground_truth(cfg)
    fibers = truth["fibers"]
    # the fiber with the lowest threshold across the mapped widths sets the response
    lead = min(fibers, key=lambda k: sum(sdfit.sd_curve(cfg.worm.sd_model, fibers[k]["rheobase_vpp"],
                                                        fibers[k]["chronaxie_ms"], w) for w in sd.widths_ms))
    expected = {"fiber": lead, "rheobase_vpp": fibers[lead]["rheobase_vpp"],
                "chronaxie_ms": fibers[lead]["chronaxie_ms"], "model": cfg.worm.sd_model}
    fits = {}
    for m, f in sdmap.fits.items():
        fits[m] = {**f.to_json(),
                   "rheobase_rel_error": f.rheobase_vpp / expected["rheobase_vpp"] - 1.0,
                   "chronaxie_rel_error": f.chronaxie_ms / expected["chronaxie_ms"] - 1.0}
    doc = {
        **prov,
        "responder": sd.responder,
        "gate": sd.gate,
        "tol_vpp": sd.tol_vpp,
        "bracket_vpp": list(sd.bracket_vpp),
        "points": [dataclasses.asdict(p) for p in sdmap.points],
        "failures": {repr(k): v for k, v in sdmap.failures.items()},
        "fits": fits,
        "fit_errors": sdmap.fit_errors,
        "best_model": sdmap.best,
        "ground_truth": expected,
    }
    _write_text(fit_path, dump_json(doc))
    return [pts_path, fit_path, curve_path]


def _first_data_line(path: Path) -> str | None:
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                return line
    return None


def cmd_analyze(path: Path, cfg: RunConfig, out: Path) -> list[Path]:
    first = _first_data_line(path)
    if first is None:
        raise CliError(EXIT_INPUT, "malformed_input", "empty input file", line=1)
    cells = [c.strip() for c in first.split(",")]
    doc = {"input": path.name, "config_fingerprint": cfg.fingerprint()}
    if cells[:2] == ["t", "stim"]:
        rec, pulses, period = arraysim.read_recording_csv(path)
        if period is None:
            period = float(np.median(np.diff(pulses))) if len(pulses) > 1 else cfg.stimulus.period_s
        positions = rec.metadata.get("positions_cm")
        if positions is None:
            positions = arraysim.channel_positions(dataclasses.replace(cfg.geometry, n_pairs=rec.n_channels))
        detection = cfg.dsp
        if detection.edge_guard_ms * 2e-3 >= rec.duration_s:
            detection = dataclasses.replace(detection, edge_guard_ms=0.0)
        _, events = dsp.analyze_recording(rec, detection)
        doc.update({
            "kind": "recording",
            "sample_rate_hz": rec.sample_rate_hz,
            "n_samples": rec.n_samples,
            "pulse_times_s": pulses,
            "positions_cm": positions,
            "events": [e.to_json() for ch in events for e in ch],
            "electrical": electrical_summary(events, pulses, period, positions, detection),
        })
    elif cells[0] == "t":
        frames = motionkin.read_trajectory_csv(path)
        try:
            trace = motionkin.vector_lengths(frames)
        except ValueError as exc:
            raise CliError(EXIT_INPUT, "malformed_input", str(exc)) from None
        doc.update({"kind": "trajectory", "motion": motion_summary(trace)})
    else:
        raise CliError(EXIT_INPUT, "malformed_input", "unrecognized header; expected a recording or trajectory CSV",
                       line=_header_line(path))
    target = out / "analysis.json"
    _write_text(target, dump_json(doc))
    return [target]


def _header_line(path: Path) -> int:
    with open(path) as fh:
        for n, raw in enumerate(fh, start=1):
            if raw.strip() and not raw.lstrip().startswith("#"):
                return n
    return 1


def _load(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neuromaps", description="Virtual earthworm stimulation testbed.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="run configuration JSON")
        p.add_argument("--seed", type=int, help="master seed (overrides config and NEUROMAPS_SEED)")
        p.add_argument("--out", help="output directory (overrides config output_dir)")

    p = sub.add_parser("simulate", help="run one stimulation program and write recording, events, motion, summary")
    common(p)
    for name, hlp in (("sweep", "amplitude x width grid sweep"), ("map-sd", "strength-duration map and fits")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--jobs", type=int, default=1, help="parallel grid cells / widths")
    p = sub.add_parser("analyze", help="analyse a recording CSV or trajectory CSV")
    p.add_argument("input", help="recording CSV (t,stim,ch...) or trajectory CSV (t,head_x,...)")
    common(p, config_required=False)
    return ap


def _fail(exc: CliError) -> int:
    payload = {"error": exc.kind, "message": str(exc), "exit_code": exc.code, **exc.extra}
    sys.stderr.write(json.dumps(_clean(payload), sort_keys=True) + "\n")
    return exc.code


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            cfg = _load(args)
            if getattr(args, "jobs", 1) < 1:
                raise ConfigError("--jobs", "must be at least 1")
            if args.command == "analyze":
                src = Path(args.input)
                if not src.is_file():
                    raise CliError(EXIT_IO, "io_error", f"cannot read {src}")
                written = cmd_analyze(src, cfg, _out_dir(cfg, args.out))
            else:
                seed = resolve_seed(cfg, args.seed)
                out = _out_dir(cfg, args.out)
                if args.command == "simulate":
                    written = cmd_simulate(cfg, seed, out)
                elif args.command == "sweep":
                    written = cmd_sweep(cfg, seed, out, args.jobs)
                else:
                    written = cmd_map_sd(cfg, seed, out, args.jobs)
        except ConfigError as exc:
            raise CliError(EXIT_INPUT, "invalid_config", str(exc), field=exc.path) from None
        except (arraysim.RecordingFormatError, motionkin.TrajectoryError) as exc:
            raise CliError(EXIT_INPUT, "malformed_input", str(exc), line=exc.line) from None
        except looper.InsufficientPointsError as exc:
            raise CliError(EXIT_POINTS, "insufficient_points", str(exc)) from None
        except UnicodeDecodeError as exc:
            raise CliError(EXIT_INPUT, "malformed_input", f"not a text file: {exc.reason}") from None
        except OSError as exc:
            raise CliError(EXIT_IO, "io_error", f"{exc.strerror or exc}: {exc.filename or ''}".strip()) from None
    except CliError as exc:
        return _fail(exc)
    except Exception as exc:  # last resort: still emit machine-readable JSON
        return _fail(CliError(EXIT_FAIL, "internal_error", f"{type(exc).__name__}: {exc}"))
    for path in written:
        print(path)
    return EXIT_OK


def main() -> None:
    sys.exit(run())
