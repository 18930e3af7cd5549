"""Burst-mode bipolar sinusoidal stimulation programs.

A pulse is one full sine cycle lasting ``pulse_width_ms``; pulses repeat at
``burst_rate_hz``. Amplitudes are peak-to-peak everywhere, so the peak of a
pulse is ``amplitude_vpp / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SAMPLE_RATE_HZ = 10_000.0


@dataclass(frozen=True)
class StimulusParams:
    amplitude_vpp: float = 5.0
    pulse_width_ms: float = 3.33
    burst_rate_hz: float = 1.0
    n_pulses: int = 1
    start_time_s: float = 0.0

    @property
    def width_s(self) -> float:
        return self.pulse_width_ms / 1000.0

    @property
    def period_s(self) -> float:
        return 1.0 / self.burst_rate_hz

    def pulse_times(self) -> np.ndarray:
        """Onset time of every pulse, in seconds."""
        return self.start_time_s + np.arange(self.n_pulses) / self.burst_rate_hz

    def end_time_s(self) -> float:
        """Time at which the last pulse finishes."""
        return float(self.pulse_times()[-1]) + self.width_s


@dataclass(frozen=True)
class SampledSignal:
    sample_rate_hz: float
    samples: np.ndarray
    t0_s: float = 0.0

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        samples = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(self.samples.size) / self.sample_rate_hz

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


def validate_params(p: StimulusParams) -> list[str]:
    """Return every violated invariant of ``p``; an empty list means valid.

    A zero amplitude is accepted as a sham (no-output) stimulus.
    """
    problems = []
    if not (math.isfinite(p.amplitude_vpp) and p.amplitude_vpp >= 0):
        problems.append(f"amplitude_vpp must be non-negative, got {p.amplitude_vpp}")
    if not (math.isfinite(p.pulse_width_ms) and p.pulse_width_ms > 0):
        problems.append(f"pulse_width_ms must be positive, got {p.pulse_width_ms}")
    if not (math.isfinite(p.burst_rate_hz) and p.burst_rate_hz > 0):
        problems.append(f"burst_rate_hz must be positive, got {p.burst_rate_hz}")
    if int(p.n_pulses) != p.n_pulses or p.n_pulses < 1:
        problems.append(f"n_pulses must be an integer >= 1, got {p.n_pulses}")
    if not math.isfinite(p.start_time_s) or p.start_time_s < 0:
        problems.append(f"start_time_s must be non-negative, got {p.start_time_s}")
    if not problems and p.width_s >= p.period_s:
        problems.append(
            f"pulses overlap: width {p.width_s:g} s >= period {p.period_s:g} s"
        )
    return problems


def check_params(p: StimulusParams) -> None:
    problems = validate_params(p)
    if problems:
        raise ValueError("invalid stimulus: " + "; ".join(problems))


def _pulse_window(t_k, width_s, t0_s, fs, n_samples):
    # samples n with t_k <= t0 + n/fs < t_k + width; the epsilon absorbs
    # representation error in onsets that sit exactly on the sample grid
    eps = 1e-9
    start = max(0, math.ceil((t_k - t0_s) * fs - eps))
    stop = min(n_samples, math.ceil((t_k + width_s - t0_s) * fs - eps))
    return start, stop


def generate_waveform(
    p: StimulusParams,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    duration_s: float | None = None,
    t0_s: float = 0.0,
) -> SampledSignal:
    """Synthesize the stimulation voltage trace in volts.

    Each pulse is ``(A/2) * sin(2*pi*(t - t_k)/W)`` on ``[t_k, t_k + W)`` and the
    trace is exactly zero elsewhere. ``duration_s`` defaults to one burst period
    past the last onset.
    """
    check_params(p)
    if duration_s is None:
        duration_s = float(p.pulse_times()[-1]) + p.period_s - t0_s
    end = t0_s + duration_s
    onsets = p.pulse_times()
    for k, t_k in enumerate(onsets):
        if t_k + p.width_s > end + 1e-12:
            raise ValueError(
                f"duration {duration_s:g} s does not cover pulse {k} "
                f"(onset {t_k:g} s, ends {t_k + p.width_s:g} s)"
            )
    n_samples = int(round(duration_s * sample_rate_hz))
    samples = np.zeros(n_samples)
    peak = p.amplitude_vpp / 2.0
    if peak > 0:
        for t_k in onsets:
            start, stop = _pulse_window(t_k, p.width_s, t0_s, sample_rate_hz, n_samples)
            n = np.arange(start, stop)
            # phase from the sample offset to avoid cancellation in t - t_k
            phase = (n - (t_k - t0_s) * sample_rate_hz) / (sample_rate_hz * p.width_s)
            samples[start:stop] = peak * np.sin(2.0 * np.pi * phase)
    return SampledSignal(sample_rate_hz, samples, t0_s)


def pulse_charge(p: StimulusParams) -> float:
    """Rectified area of one pulse in volt-seconds, ``(A/2) * 2W/pi``."""
    check_params(p)
    return (p.amplitude_vpp / 2.0) * (2.0 * p.width_s / math.pi)
