"""Synthetic recordings from a linear array of differential electrode pairs.

Each channel sums giant-fiber spike wavelets (delayed by conduction and
attenuated with distance), the slow muscle wave that follows an MGF
response, stimulus current leaking into the array, mains pickup and
Gaussian amplifier noise. Channels are in microvolts; the stimulus trace is
in volts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from .stimgen import SampledSignal, StimulusParams, generate_waveform
from .wormsim import HEAD_TO_TAIL, FiberParams, SpikeTrains, WormModel

# amplitude of the repolarizing phase relative to the depolarizing phase
SPIKE_TAIL_RATIO = 0.3
# slow wave is rendered out to this many standard deviations
SLOW_WAVE_SPAN = 5.0


@dataclass(frozen=True)
class ArrayGeometry:
    n_pairs: int = 4
    pair_spacing_cm: float = 1.0
    pitch_cm: float = 3.0
    stim_to_first_cm: float = 2.0


@dataclass(frozen=True)
class NoiseModel:
    mains_hz: float = 60.0
    mains_uv: float = 10.0
    gaussian_sigma_uv: float = 9.0
    artifact_coupling: float = 1e-5
    artifact_decay_per_cm: float = 0.2
    tracking_sigma_cm: float = 0.02
    rng_seed: int | None = None

    def scaled(self, factor: float) -> "NoiseModel":
        """Same noise model with every noise amplitude multiplied by ``factor``."""
        return dataclasses.replace(
            self,
            mains_uv=self.mains_uv * factor,
            gaussian_sigma_uv=self.gaussian_sigma_uv * factor,
            artifact_coupling=self.artifact_coupling * factor,
            tracking_sigma_cm=self.tracking_sigma_cm * factor,
        )

    @classmethod
    def silent(cls) -> "NoiseModel":
        return cls(mains_uv=0.0, gaussian_sigma_uv=0.0, artifact_coupling=0.0, tracking_sigma_cm=0.0)


def validate_geometry(g: ArrayGeometry) -> list[str]:
    problems = []
    if int(g.n_pairs) != g.n_pairs or g.n_pairs < 2:
        problems.append("n_pairs must be an integer >= 2")
    for attr in ("pair_spacing_cm", "pitch_cm", "stim_to_first_cm"):
        if not getattr(g, attr) > 0:
            problems.append(f"{attr} must be positive")
    return problems


def validate_noise(n: NoiseModel) -> list[str]:
    problems = []
    if not n.mains_hz > 0:
        problems.append("mains_hz must be positive")
    for attr in ("mains_uv", "gaussian_sigma_uv", "artifact_coupling", "tracking_sigma_cm"):
        if getattr(n, attr) < 0:
            problems.append(f"{attr} must be non-negative")
    if not 0 < n.artifact_decay_per_cm <= 1:
        problems.append("artifact_decay_per_cm must be in (0, 1]")
    return problems


def channel_positions(g: ArrayGeometry) -> np.ndarray:
    """Distance (cm) of each pair center from the stimulation site."""
    problems = validate_geometry(g)
    if problems:
        raise ValueError("invalid geometry: " + "; ".join(problems))
    return g.stim_to_first_cm + np.arange(g.n_pairs) * g.pitch_cm


def fiber_channels(fiber_name: str, n_pairs: int) -> list[int]:
    """Channel indices (0-based) a fiber drives: LGF the last pair, MGF the others."""
    if fiber_name == "LGF":
        return [n_pairs - 1]
    return list(range(n_pairs - 1))


def fiber_path_cm(fiber: FiberParams, position_cm, body_length_cm: float):
    """Conduction distance from the fiber's initiation point to an electrode."""
    position_cm = np.asarray(position_cm, dtype=float)
    if fiber.direction == HEAD_TO_TAIL:
        return position_cm
    return np.abs(body_length_cm - position_cm)


def spike_arrivals(fiber: FiberParams, spike_time_s: float, positions_cm, body_length_cm: float) -> np.ndarray:
    """Arrival time of one spike at each electrode position."""
    path = fiber_path_cm(fiber, positions_cm, body_length_cm)
    return spike_time_s + path / (100.0 * fiber.velocity_m_per_s)


def slow_wave_arrivals(m: WormModel, pulse_onset_s: float, positions_cm) -> np.ndarray:
    sw = m.slow_wave
    return (
        pulse_onset_s
        + sw.onset_delay_ms / 1000.0
        + np.asarray(positions_cm, dtype=float) / (100.0 * sw.velocity_m_per_s)
    )


def spike_wavelet(u: np.ndarray) -> np.ndarray:
    """One-cycle biphasic wavelet on ``u`` in [0, 1); peak +1 at ``u = 0.25``."""
    s = np.sin(2.0 * np.pi * u)
    return np.where(u < 0.5, s, SPIKE_TAIL_RATIO * s)


def responding_pulses(trains: SpikeTrains) -> list[tuple[int, float]]:
    """(pulse index, onset) of pulses on which MGF fired; each launches a slow wave."""
    return [(t.pulse_index, t.pulse_onset_s) for t in trains.get("MGF", []) if t.n_spikes > 0]


@dataclass(frozen=True)
class MultiChannelRecording:
    sample_rate_hz: float
    t0_s: float
    stim: SampledSignal
    channels: np.ndarray  # (n_pairs, n_samples), microvolts
    metadata: dict

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=float)
        if ch.ndim != 2:
            raise ValueError("channels must be a 2-D array (channel, sample)")
        if ch.shape[1] != len(self.stim):
            raise ValueError("channel traces and stimulus trace differ in length")
        object.__setattr__(self, "channels", ch)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(self.n_samples) / self.sample_rate_hz

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def channel(self, i: int) -> SampledSignal:
        return SampledSignal(self.sample_rate_hz, self.channels[i], self.t0_s)

    def with_channels(self, channels) -> "MultiChannelRecording":
        return dataclasses.replace(self, channels=np.asarray(channels, dtype=float))


def fingerprint(obj) -> str:
    """Short stable hash of a dataclass or JSON-compatible value."""
    if dataclasses.is_dataclass(obj):
        obj = dataclasses.asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _add_event(trace, fs, t0, start_s, stop_s, fn):
    n = trace.size
    i0 = max(0, math.ceil((start_s - t0) * fs - 1e-9))
    i1 = min(n, math.ceil((stop_s - t0) * fs - 1e-9))
    if i1 <= i0:
        return
    t = t0 + np.arange(i0, i1) / fs
    trace[i0:i1] += fn(t)


def synthesize_recording(
    m: WormModel,
    trains: SpikeTrains,
    p: StimulusParams,
    g: ArrayGeometry,
    n: NoiseModel,
    duration_s: float | None = None,
    sample_rate_hz: float = 10_000.0,
    seed: int | None = None,
) -> MultiChannelRecording:
    """Render the multichannel recording for one stimulation run.

    ``seed`` overrides ``n.rng_seed``; with every noise amplitude at zero the
    result does not depend on either.
    """
    for problems, what in ((validate_geometry(g), "geometry"), (validate_noise(n), "noise model")):
        if problems:
            raise ValueError(f"invalid {what}: " + "; ".join(problems))
    stim = generate_waveform(p, sample_rate_hz, duration_s)
    fs, t0 = sample_rate_hz, stim.t0_s
    end_s = t0 + stim.duration_s
    positions = channel_positions(g)
    chans = np.zeros((g.n_pairs, len(stim)))

    for name, fiber in m.fibers.items():
        w = fiber.ap_width_ms / 1000.0
        routed = fiber_channels(name, g.n_pairs)
        path = fiber_path_cm(fiber, positions, m.body_length_cm)
        atten = (1.0 - fiber.decay_per_cm) ** path
        for train in trains.get(name, []):
            for spike_t, amp in zip(train.spike_times_s, train.amplitude_uv):
                arrivals = spike_arrivals(fiber, spike_t, positions, m.body_length_cm)
                for ch in routed:
                    a = arrivals[ch]
                    if a + w > end_s + 1e-12:
                        raise ValueError(
                            f"duration too short: {name} spike of pulse {train.pulse_index} "
                            f"reaches channel {ch + 1} at {a:.6f} s, recording ends at {end_s:.6f} s"
                        )
                    height = fiber.polarity_sign * amp * atten[ch]
                    _add_event(chans[ch], fs, t0, a, a + w,
                               lambda t, a=a, h=height: h * spike_wavelet((t - a) / w))

    sw = m.slow_wave
    if sw.peak_uv > 0:
        sigma = sw.sigma_ms / 1000.0
        heights = sw.peak_uv * (1.0 - sw.decay_per_cm) ** positions
        for k, onset in responding_pulses(trains):
            centers = slow_wave_arrivals(m, onset, positions)
            for ch, (c, h) in enumerate(zip(centers, heights)):
                if c + 3 * sigma > end_s:
                    raise ValueError(
                        f"duration too short: slow wave of pulse {k} reaches channel {ch + 1} "
                        f"at {c:.6f} s, recording ends at {end_s:.6f} s"
                    )
                _add_event(chans[ch], fs, t0, c - SLOW_WAVE_SPAN * sigma, c + SLOW_WAVE_SPAN * sigma,
                           lambda t, c=c, h=h: h * np.exp(-0.5 * ((t - c) / sigma) ** 2))

    if n.artifact_coupling > 0:
        leak = n.artifact_coupling * (1.0 - n.artifact_decay_per_cm) ** positions
        chans += 1e6 * leak[:, None] * stim.samples[None, :]

    rng = np.random.default_rng(n.rng_seed if seed is None else seed)
    if n.mains_uv > 0:
        chans += n.mains_uv * np.sin(2.0 * np.pi * n.mains_hz * stim.times)[None, :]
    if n.gaussian_sigma_uv > 0:
        chans += rng.normal(0.0, n.gaussian_sigma_uv, chans.shape)

    metadata = {
        "positions_cm": [float(x) for x in positions],
        "stimulus": dataclasses.asdict(p),
        "geometry": dataclasses.asdict(g),
        "noise": dataclasses.asdict(n),
        "fingerprints": {
            "model": fingerprint(m),
            "stimulus": fingerprint(p),
            "geometry": fingerprint(g),
            "noise": fingerprint(n),
        },
        "seed": n.rng_seed if seed is None else seed,
    }
    return MultiChannelRecording(fs, t0, stim, chans, metadata)


class RecordingFormatError(ValueError):
    """Malformed recording CSV; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


def _fmt(values) -> str:
    return ",".join("%.10g" % v for v in values)


def write_recording_csv(path, rec: MultiChannelRecording, pulse_times_s=(), period_s=None, comments=()) -> None:
    """``t,stim,ch1..chN`` with provenance and layout in ``#`` comment lines."""
    n_ch = rec.n_channels
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write("#units s,V" + ",uV" * n_ch + "\n")
        if "positions_cm" in rec.metadata:
            fh.write(f"#positions_cm {_fmt(rec.metadata['positions_cm'])}\n")
        if len(pulse_times_s):
            fh.write(f"#pulses_s {_fmt(pulse_times_s)}\n")
        if period_s is not None:
            fh.write(f"#period_s {period_s:.10g}\n")
        fh.write(",".join(["t", "stim"] + [f"ch{i + 1}" for i in range(n_ch)]) + "\n")
        table = np.column_stack([rec.times, rec.stim.samples, rec.channels.T])
        np.savetxt(fh, table, fmt="%.10g", delimiter=",")


def _floats(text, lineno, what):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise RecordingFormatError(f"bad number in {what}", lineno) from None


def read_recording_csv(path):
    """Parse a recording CSV.

    Returns ``(recording, pulse_times_s, period_s)``; the last two are empty
    or ``None`` when the file does not declare them. The sample rate comes
    from the time column, which must be uniformly spaced.
    """
    header, rows, lines = None, [], []
    positions, pulses, period = None, [], None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, rest = line[1:].strip().partition(" ")
                if key == "positions_cm":
                    positions = _floats(rest, lineno, key)
                elif key == "pulses_s":
                    pulses = _floats(rest, lineno, key)
                elif key == "period_s":
                    period = _floats(rest, lineno, key)[0] if rest.strip() else None
                continue
            cells = line.split(",")
            if header is None:
                want = ["t", "stim"] + [f"ch{i + 1}" for i in range(len(cells) - 2)]
                if len(cells) < 3 or [c.strip() for c in cells] != want:
                    raise RecordingFormatError("expected header t,stim,ch1[,ch2...]", lineno)
                header = cells
                continue
            if len(cells) != len(header):
                raise RecordingFormatError(f"expected {len(header)} fields, got {len(cells)}", lineno)
            try:
                row = [float(c) for c in cells]
            except ValueError:
                raise RecordingFormatError("non-numeric field", lineno) from None
            if not all(math.isfinite(v) for v in row):
                raise RecordingFormatError("non-finite value", lineno)
            rows.append(row)
            lines.append(lineno)
    if header is None:
        raise RecordingFormatError("empty recording file", 1)
    if len(rows) < 2:
        raise RecordingFormatError("need at least two samples", lines[0] if lines else None)
    data = np.asarray(rows)
    dt = np.diff(data[:, 0])
    step = float(np.median(dt))
    if not step > 0:
        raise RecordingFormatError("time column must increase", lines[1])
    bad = np.flatnonzero(np.abs(dt - step) > 1e-6 * max(step, 1e-12) + 1e-9)
    if bad.size:
        raise RecordingFormatError("non-uniform sample spacing", lines[bad[0] + 1])
    fs = round(1.0 / step, 6)
    t0 = float(data[0, 0])
    n_ch = data.shape[1] - 2
    if positions is not None and len(positions) != n_ch:
        raise RecordingFormatError(f"positions_cm lists {len(positions)} values for {n_ch} channels")
    meta = {} if positions is None else {"positions_cm": positions}
    rec = MultiChannelRecording(fs, t0, SampledSignal(fs, data[:, 1], t0), data[:, 2:].T.copy(), meta)
    return rec, np.asarray(pulses, dtype=float), period
