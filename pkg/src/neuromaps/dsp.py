"""Recording analysis: mains notch, low-pass, event detection and latency regression."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps
from scipy.stats import median_abs_deviation

from .arraysim import MultiChannelRecording
from .stimgen import SampledSignal


@dataclass(frozen=True)
class FilterSpec:
    kind: str  # "lowpass" | "notch"
    cutoff_hz: float | None = None
    center_hz: float | None = None
    q_factor: float = 30.0
    order: int = 4
    zero_phase: bool = True

    @classmethod
    def default_lowpass(cls) -> "FilterSpec":
        return cls(kind="lowpass", cutoff_hz=50.0, order=4)

    @classmethod
    def default_notch(cls, mains_hz: float = 60.0) -> "FilterSpec":
        return cls(kind="notch", center_hz=mains_hz, q_factor=30.0, order=2)


def validate_filter(spec: FilterSpec, sample_rate_hz: float) -> list[str]:
    problems = []
    nyquist = sample_rate_hz / 2.0
    if spec.kind == "lowpass":
        f = spec.cutoff_hz
        name = "cutoff_hz"
    elif spec.kind == "notch":
        f = spec.center_hz
        name = "center_hz"
        if not spec.q_factor > 0:
            problems.append("q_factor must be positive")
    else:
        return [f"unknown filter kind {spec.kind!r}"]
    if f is None or not 0 < f < nyquist:
        problems.append(f"{name} must lie in (0, {nyquist:g}) Hz, got {f}")
    if int(spec.order) != spec.order or spec.order < 2 or spec.order % 2:
        problems.append(f"order must be an even integer >= 2, got {spec.order}")
    return problems


def design_sos(spec: FilterSpec, sample_rate_hz: float) -> np.ndarray:
    """Second-order sections for ``spec`` at ``sample_rate_hz``."""
    problems = validate_filter(spec, sample_rate_hz)
    if problems:
        raise ValueError("invalid filter: " + "; ".join(problems))
    if spec.kind == "lowpass":
        return sps.butter(spec.order, spec.cutoff_hz, btype="lowpass", fs=sample_rate_hz, output="sos")
    b, a = sps.iirnotch(spec.center_hz, spec.q_factor, fs=sample_rate_hz)
    # higher even orders cascade identical notch sections
    return np.repeat(sps.tf2sos(b, a), spec.order // 2, axis=0)


def apply_filter(x, spec: FilterSpec, sample_rate_hz: float) -> np.ndarray:
    """Filter ``x`` along its last axis."""
    sos = design_sos(spec, sample_rate_hz)
    x = np.asarray(x, dtype=float)
    if spec.zero_phase:
        if x.shape[-1] <= 3 * (2 * sos.shape[0] + 1):
            raise ValueError("signal too short for zero-phase filtering")
        return sps.sosfiltfilt(sos, x, axis=-1)
    return sps.sosfilt(sos, x, axis=-1)


def lowpass(sig: SampledSignal, spec: FilterSpec | None = None) -> SampledSignal:
    spec = spec or FilterSpec.default_lowpass()
    if spec.kind != "lowpass":
        raise ValueError("lowpass() needs a lowpass FilterSpec")
    return SampledSignal(sig.sample_rate_hz, apply_filter(sig.samples, spec, sig.sample_rate_hz), sig.t0_s)


def notch(sig: SampledSignal, spec: FilterSpec | None = None) -> SampledSignal:
    spec = spec or FilterSpec.default_notch()
    if spec.kind != "notch":
        raise ValueError("notch() needs a notch FilterSpec")
    return SampledSignal(sig.sample_rate_hz, apply_filter(sig.samples, spec, sig.sample_rate_hz), sig.t0_s)


def filter_recording(rec: MultiChannelRecording, specs) -> MultiChannelRecording:
    """Apply each filter in ``specs`` in order to every channel (not the stimulus)."""
    ch = rec.channels
    for spec in specs:
        ch = apply_filter(ch, spec, rec.sample_rate_hz)
    return rec.with_channels(ch)


@dataclass(frozen=True)
class SpikeEvent:
    t_s: float
    channel: int  # 1-based pair index
    peak_uv: float
    polarity: int

    def to_json(self) -> dict:
        return {"t": self.t_s, "channel": self.channel, "peak_uv": self.peak_uv, "polarity": self.polarity}


def _refine_time(y, i, fs, t0):
    # vertex of the parabola through the extremum and its two neighbors
    if 0 < i < y.size - 1:
        a, b, c = y[i - 1], y[i], y[i + 1]
        denom = a - 2 * b + c
        if denom != 0:
            off = 0.5 * (a - c) / denom
            if abs(off) <= 1:
                return t0 + (i + off) / fs
    return t0 + i / fs


def detect_channel(x, sample_rate_hz, t0_s=0.0, k_mad=5.0, refractory_ms=5.0, threshold=None, channel=1,
                   edge_guard_ms=0.0):
    """Threshold-crossing extrema on one trace.

    The threshold defaults to ``k_mad`` times the normal-consistent median
    absolute deviation of the baseline-removed trace. Extrema closer than
    ``refractory_ms`` are merged, keeping the one with the larger magnitude.
    Extrema within ``edge_guard_ms`` of either end are ignored.
    """
    x = np.asarray(x, dtype=float)
    y = x - np.median(x)
    if threshold is None:
        threshold = k_mad * median_abs_deviation(y, scale="normal")
    if not np.any(y):
        return []
    cand = []
    for sign in (1.0, -1.0):
        idx, _ = sps.find_peaks(sign * y, height=threshold if threshold > 0 else None)
        idx = idx[sign * y[idx] > threshold]
        if edge_guard_ms > 0:
            guard = edge_guard_ms / 1000.0 * sample_rate_hz
            idx = idx[(idx >= guard) & (idx < y.size - guard)]
        cand += [(abs(y[i]), int(i), int(sign)) for i in idx]
    cand.sort(key=lambda c: (-c[0], c[1]))
    gap = refractory_ms / 1000.0 * sample_rate_hz
    kept = []
    for mag, i, sign in cand:
        if all(abs(i - j) >= gap for _, j, _ in kept):
            kept.append((mag, i, sign))
    kept.sort(key=lambda c: c[1])
    return [
        SpikeEvent(_refine_time(y, i, sample_rate_hz, t0_s), channel, float(mag), sign)
        for mag, i, sign in kept
    ]


def detect_spikes(rec: MultiChannelRecording, k_mad: float = 5.0, refractory_ms: float = 5.0,
                  threshold=None, edge_guard_ms: float = 0.0) -> list[list[SpikeEvent]]:
    """Detected events for every channel of a (filtered) recording.

    ``threshold`` (microvolts, scalar or one per channel) overrides the
    MAD-derived threshold.
    """
    if not k_mad > 0:
        raise ValueError("k_mad must be positive")
    thr = [None] * rec.n_channels if threshold is None else np.broadcast_to(threshold, (rec.n_channels,))
    return [
        detect_channel(rec.channels[i], rec.sample_rate_hz, rec.t0_s, k_mad, refractory_ms,
                       None if thr[i] is None else float(thr[i]), channel=i + 1,
                       edge_guard_ms=edge_guard_ms)
        for i in range(rec.n_channels)
    ]


def event_latencies(events, stim_times, period_s: float, window_s=None) -> np.ndarray:
    """First-event latency per (pulse, channel), NaN where a channel had no event.

    ``events`` is one list per channel. Only events strictly after the pulse
    and inside ``window_s = (lo, hi)`` (seconds after the pulse, default the
    whole burst period) count.
    """
    lo, hi = (0.0, period_s) if window_s is None else window_s
    stim_times = np.atleast_1d(np.asarray(stim_times, dtype=float))
    out = np.full((stim_times.size, len(events)), np.nan)
    for c, chan_events in enumerate(events):
        times = np.sort([e.t_s for e in chan_events])
        for k, tp in enumerate(stim_times):
            sel = times[(times > tp + lo) & (times < tp + hi)]
            if sel.size:
                out[k, c] = sel[0] - tp
    return out


class InsufficientChannelsError(ValueError):
    pass


@dataclass(frozen=True)
class VelocityEstimate:
    velocity_m_per_s: float
    intercept_s: float
    r_squared: float
    n_channels_used: int
    direction: int = 1  # +1 when latency grows with distance from the stimulation site


def estimate_velocity(latencies_s, positions_cm) -> VelocityEstimate:
    """Fit ``latency = intercept + distance / velocity`` by least squares.

    ``latencies_s`` is one value per channel, or a (pulse, channel) matrix
    whose finite entries are pooled. NaN marks an absent channel.
    """
    lat = np.atleast_2d(np.asarray(latencies_s, dtype=float))
    pos = np.asarray(positions_cm, dtype=float)
    if lat.shape[1] != pos.size:
        raise ValueError("one position per channel is required")
    xs = np.broadcast_to(pos, lat.shape)
    ok = np.isfinite(lat)
    used = int(np.count_nonzero(ok.any(axis=0)))
    if used < 2:
        raise InsufficientChannelsError("insufficient channels: need latencies on at least 2 channels")
    x, y = xs[ok], lat[ok]
    slope, intercept = np.polyfit(x, y, 1)
    if not math.isfinite(slope) or abs(slope) < 1e-12:
        raise ValueError("non-finite velocity: latency does not change with distance")
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return VelocityEstimate(0.01 / abs(slope), float(intercept), r2, used, 1 if slope > 0 else -1)


@dataclass(frozen=True)
class DetectionConfig:
    """Analysis chain settings for a recording.

    The merge window defaults wider than ``detect_spikes`` because a 50 Hz
    zero-phase low-pass rings for roughly 30 ms around every sharp transient.
    """

    notch: FilterSpec | None = dataclasses.field(default_factory=FilterSpec.default_notch)
    lowpass: FilterSpec | None = dataclasses.field(default_factory=FilterSpec.default_lowpass)
    k_mad: float = 5.0
    refractory_ms: float = 40.0
    edge_guard_ms: float = 100.0
    response_window_ms: tuple[float, float] = (0.0, 50.0)
    slow_wave_window_ms: tuple[float, float] = (60.0, 400.0)

    def filters(self):
        return [f for f in (self.notch, self.lowpass) if f is not None]


def analyze_recording(rec: MultiChannelRecording, cfg: DetectionConfig | None = None):
    """Filter and detect; returns the filtered recording and per-channel events."""
    cfg = cfg or DetectionConfig()
    filtered = filter_recording(rec, cfg.filters())
    return filtered, detect_spikes(filtered, cfg.k_mad, cfg.refractory_ms, edge_guard_ms=cfg.edge_guard_ms)
