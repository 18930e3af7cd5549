"""One simulated trial end to end: stimulate, evoke, record, filter, detect, track."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import arraysim, dsp, motionkin, wormsim
from .stimgen import StimulusParams


@dataclass(frozen=True)
class Preparation:
    """Everything about the virtual preparation except the stimulus."""

    worm: wormsim.WormModel = field(default_factory=wormsim.WormModel)
    geometry: arraysim.ArrayGeometry = field(default_factory=arraysim.ArrayGeometry)
    noise: arraysim.NoiseModel = field(default_factory=arraysim.NoiseModel)
    detection: dsp.DetectionConfig = field(default_factory=dsp.DetectionConfig)
    sample_rate_hz: float = 10_000.0
    motion_rate_hz: float = 30.0


@dataclass(frozen=True)
class Trial:
    params: StimulusParams
    trains: wormsim.SpikeTrains
    recording: arraysim.MultiChannelRecording
    filtered: arraysim.MultiChannelRecording
    events: list
    motion: motionkin.MotionTrace
    seed: int | None

    def spike_counts(self) -> dict[str, int]:
        return {name: sum(t.n_spikes for t in trains) for name, trains in self.trains.items()}


def default_duration(p: StimulusParams) -> float:
    """Recording length: one full burst period after the last onset."""
    return float(p.pulse_times()[-1]) + p.period_s


def run_trial(prep: Preparation, p: StimulusParams, seed: int | None = None, duration_s: float | None = None) -> Trial:
    if duration_s is None:
        duration_s = default_duration(p)
    trains = wormsim.evoke_spikes(prep.worm, p, seed)
    rec = arraysim.synthesize_recording(
        prep.worm, trains, p, prep.geometry, prep.noise, duration_s, prep.sample_rate_hz, seed
    )
    filtered, events = dsp.analyze_recording(rec, prep.detection)
    motion = wormsim.kinematic_response(prep.worm, trains, duration_s, prep.motion_rate_hz)
    if prep.noise.tracking_sigma_cm > 0:
        # separate stream so motion noise never perturbs the electrical noise
        rng = np.random.default_rng([0 if seed is None else seed, 1])
        motion = wormsim.add_tracking_noise(motion, prep.noise.tracking_sigma_cm, rng)
    return Trial(p, trains, rec, filtered, events, motion, seed)


def responded_pulses(trial: Trial, window_ms) -> np.ndarray:
    """Per pulse: did any channel detect an event inside ``window_ms`` after onset?"""
    lat = dsp.event_latencies(
        trial.events, trial.params.pulse_times(), trial.params.period_s,
        (window_ms[0] / 1000.0, window_ms[1] / 1000.0),
    )
    return np.isfinite(lat).any(axis=1)


def contraction_extrema(trial: Trial, worm: wormsim.WormModel, min_prominence=None):
    return [
        e for e in motionkin.find_extrema(trial.motion.t_s, trial.motion.htm, min_prominence, worm.rest_htm_cm)
        if e.kind == "contraction-min"
    ]


def _median_or_none(col):
    col = col[np.isfinite(col)]
    return float(np.median(col)) if col.size else None


def _velocity_json(latencies_s, positions_cm):
    try:
        v = dsp.estimate_velocity(latencies_s, positions_cm)
    except ValueError as exc:
        return {"error": str(exc)}
    return {"velocity_m_per_s": v.velocity_m_per_s, "intercept_ms": 1000.0 * v.intercept_s,
            "r_squared": v.r_squared, "n_channels_used": v.n_channels_used, "direction": v.direction}


def latency_table(events, pulse_times, period_s, window_ms):
    """Per-pulse first latencies and their per-channel median, in milliseconds."""
    lat = dsp.event_latencies(events, pulse_times, period_s, (window_ms[0] / 1000.0, window_ms[1] / 1000.0))
    medians = [_median_or_none(lat[:, c]) for c in range(lat.shape[1])]
    return lat, medians


def electrical_summary(events, pulse_times, period_s, positions_cm, detection: dsp.DetectionConfig) -> dict:
    """Event counts, latencies and velocity fits for one analysed recording.

    Spike velocities are fitted per polarity group, since the two giant
    fibers conduct in opposite directions and are picked up with opposite
    sign. The slow wave is fitted over every channel that shows it.
    """
    positions = np.asarray(positions_cm, dtype=float)
    out = {
        "event_counts": [len(ev) for ev in events],
        "polarity_counts": [
            {"+1": sum(e.polarity > 0 for e in ev), "-1": sum(e.polarity < 0 for e in ev)} for ev in events
        ],
    }
    if not len(pulse_times):
        out["error"] = "no stimulus pulses known; latencies need pulse onsets"
        return out
    for key, window in (("spike", detection.response_window_ms), ("slow_wave", detection.slow_wave_window_ms)):
        lat, med = latency_table(events, pulse_times, period_s, window)
        section = {
            "window_ms": list(window),
            "first_latency_ms": [[None if not np.isfinite(x) else 1000.0 * x for x in row] for row in lat],
            "median_latency_ms": [None if m is None else 1000.0 * m for m in med],
        }
        med_s = np.array([np.nan if m is None else m for m in med])
        if key == "slow_wave":
            section["velocity"] = _velocity_json(med_s, positions)
        else:
            groups = {}
            for sign in (1, -1):
                chans = [
                    c for c, ev in enumerate(events)
                    if np.isfinite(med_s[c]) and _dominant_polarity(ev, pulse_times, window) == sign
                ]
                masked = np.full_like(med_s, np.nan)
                masked[chans] = med_s[chans]
                groups["+1" if sign > 0 else "-1"] = {"channels": [c + 1 for c in chans],
                                                     **_velocity_json(masked, positions)}
            section["velocity_by_polarity"] = groups
        out[key] = section
    return out


def _dominant_polarity(chan_events, pulse_times, window_ms):
    total = 0
    for e in chan_events:
        for tp in pulse_times:
            if window_ms[0] / 1000.0 < e.t_s - tp < window_ms[1] / 1000.0:
                total += e.polarity
                break
    return 1 if total > 0 else -1 if total < 0 else 0


def motion_summary(trace: motionkin.MotionTrace, rest_htm_cm=None, rest_ttm_cm=None) -> dict:
    out = {"n_frames": int(trace.t_s.size), "degenerate_frames": list(trace.degenerate)}
    for name, rest in (("htm", rest_htm_cm), ("ttm", rest_ttm_cm)):
        values = getattr(trace, name)
        if values is None:
            continue
        ext = motionkin.find_extrema(trace.t_s, values, None, rest)
        out[f"{name}_extrema"] = [{"t": e.t_s, "kind": e.kind, "value_cm": e.value} for e in ext]
        out[f"{name}_range_cm"] = [float(values.min()), float(values.max())] if values.size else None
    if trace.ttm is not None:
        try:
            out["htm_ttm_correlation"] = motionkin.htm_ttm_correlation(trace)
        except ValueError as exc:
            out["htm_ttm_correlation"] = None
            out["correlation_error"] = str(exc)
    return out
