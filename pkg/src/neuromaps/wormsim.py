"""Virtual earthworm: giant-fiber excitability and body kinematics.

The model turns a stimulation program into per-pulse spike trains on the
medial (MGF) and lateral (LGF) giant fibers, and into head-to-midsection
(HtM) / tail-to-midsection (TtM) length traces. It is the ground truth the
analysis pipeline has to recover.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .motionkin import MotionTrace
from .stimgen import StimulusParams, check_params

HEAD_TO_TAIL = "head_to_tail"
TAIL_TO_HEAD = "tail_to_head"
SD_MODELS = ("weiss", "lapicque")
MAX_GAIN = 2.0


@dataclass(frozen=True)
class FiberParams:
    name: str
    velocity_m_per_s: float
    direction: str
    polarity_sign: int
    rheobase_vpp: float
    chronaxie_ms: float
    ap_peak_uv: float
    ap_width_ms: float
    decay_per_cm: float = 0.1


def default_mgf() -> FiberParams:
    return FiberParams(
        name="MGF",
        velocity_m_per_s=32.2,
        direction=HEAD_TO_TAIL,
        polarity_sign=1,
        rheobase_vpp=2.0,
        chronaxie_ms=3.33,
        ap_peak_uv=800.0,
        ap_width_ms=2.0,
    )


def default_lgf() -> FiberParams:
    # threshold 4.88 Vp-p at 3.33 ms, 4.04 Vp-p at 6.67 ms: fires in the 5-6 Vp-p
    # trials, silent at 4 Vp-p, and always above the MGF threshold on 2-6.67 ms
    return FiberParams(
        name="LGF",
        velocity_m_per_s=12.6,
        direction=TAIL_TO_HEAD,
        polarity_sign=-1,
        rheobase_vpp=3.2,
        chronaxie_ms=1.75,
        ap_peak_uv=600.0,
        ap_width_ms=2.0,
    )


@dataclass(frozen=True)
class SlowWave:
    """Slow propagating muscle wave that follows an MGF response."""

    onset_delay_ms: float = 100.0
    velocity_m_per_s: float = 1.0
    decay_per_cm: float = 0.55
    peak_uv: float = 6500.0
    sigma_ms: float = 10.0


@dataclass(frozen=True)
class WormModel:
    mgf: FiberParams = field(default_factory=default_mgf)
    lgf: FiberParams = field(default_factory=default_lgf)
    body_length_cm: float = 15.0
    rest_htm_cm: float = 7.0
    rest_ttm_cm: float = 7.0
    contraction_gain_cm: float = 1.5
    response_tau_s: float = 0.2
    antiphase_coupling: float = 0.8
    slow_wave: SlowWave = field(default_factory=SlowWave)
    max_spikes_per_pulse: int = 5
    sd_model: str = "weiss"

    @property
    def fibers(self) -> dict[str, FiberParams]:
        return {"MGF": self.mgf, "LGF": self.lgf}


def validate_model(m: WormModel) -> list[str]:
    problems = []
    for key, f in m.fibers.items():
        if f.name != key:
            problems.append(f"{key}.name must be {key!r}")
        for attr in ("velocity_m_per_s", "rheobase_vpp", "chronaxie_ms", "ap_peak_uv", "ap_width_ms"):
            if not getattr(f, attr) > 0:
                problems.append(f"{key}.{attr} must be positive")
        if not 0 < f.decay_per_cm <= 1:
            problems.append(f"{key}.decay_per_cm must be in (0, 1]")
        if f.polarity_sign not in (1, -1):
            problems.append(f"{key}.polarity_sign must be +1 or -1")
    if m.mgf.direction != HEAD_TO_TAIL:
        problems.append(f"MGF.direction must be {HEAD_TO_TAIL!r}")
    if m.lgf.direction != TAIL_TO_HEAD:
        problems.append(f"LGF.direction must be {TAIL_TO_HEAD!r}")
    for attr in ("body_length_cm", "rest_htm_cm", "rest_ttm_cm", "response_tau_s"):
        if not getattr(m, attr) > 0:
            problems.append(f"{attr} must be positive")
    if m.contraction_gain_cm < 0:
        problems.append("contraction_gain_cm must be non-negative")
    if not 0 <= m.antiphase_coupling <= 1:
        problems.append("antiphase_coupling must be in [0, 1]")
    sw = m.slow_wave
    for attr in ("onset_delay_ms", "velocity_m_per_s", "sigma_ms"):
        if not getattr(sw, attr) > 0:
            problems.append(f"slow_wave.{attr} must be positive")
    # peak 0 disables the wave
    if sw.peak_uv < 0:
        problems.append("slow_wave.peak_uv must be non-negative")
    if not 0 < sw.decay_per_cm <= 1:
        problems.append("slow_wave.decay_per_cm must be in (0, 1]")
    if int(m.max_spikes_per_pulse) != m.max_spikes_per_pulse or m.max_spikes_per_pulse < 1:
        problems.append("max_spikes_per_pulse must be an integer >= 1")
    if m.sd_model not in SD_MODELS:
        problems.append(f"sd_model must be one of {SD_MODELS}")
    return problems


def threshold_amplitude(fiber: FiberParams, width_ms: float, model: str = "weiss") -> float:
    """Threshold amplitude (Vp-p) of ``fiber`` for a pulse of ``width_ms``.

    Both strength-duration families give exactly twice the rheobase when the
    width equals the chronaxie.
    """
    if not width_ms > 0:
        raise ValueError("width_ms must be positive")
    r, c = fiber.rheobase_vpp, fiber.chronaxie_ms
    if model == "weiss":
        return r * (1.0 + c / width_ms)
    if model == "lapicque":
        return r / -math.expm1(-width_ms / c * math.log(2.0))
    raise ValueError(f"unknown strength-duration model {model!r}")


@dataclass(frozen=True)
class FiberSpikeTrain:
    """Spikes one fiber fired in response to one pulse.

    ``spike_times_s`` are initiation times: at the stimulation site for
    head-to-tail fibers, at the tail end for tail-to-head fibers.
    """

    fiber: str
    pulse_index: int
    pulse_onset_s: float
    spike_times_s: tuple[float, ...]
    amplitude_uv: tuple[float, ...]

    def __post_init__(self):
        if len(self.spike_times_s) != len(self.amplitude_uv):
            raise ValueError("one amplitude per spike is required")
        if any(b <= a for a, b in zip(self.spike_times_s, self.spike_times_s[1:])):
            raise ValueError("spike times must be strictly increasing")

    @property
    def n_spikes(self) -> int:
        return len(self.spike_times_s)


# fiber name -> one train per pulse, in pulse order
SpikeTrains = dict[str, list[FiberSpikeTrain]]


def spike_count(m: WormModel, fiber: FiberParams, amplitude_vpp: float, width_ms: float) -> tuple[int, float]:
    """Staircase spike count and per-spike amplitude for a single pulse."""
    a_th = threshold_amplitude(fiber, width_ms, m.sd_model)
    ratio = amplitude_vpp / a_th
    # an amplitude computed as an exact multiple of threshold must reach it
    n = min(int(math.floor(ratio * (1.0 + 1e-12))), int(m.max_spikes_per_pulse))
    return max(n, 0), fiber.ap_peak_uv * min(ratio, MAX_GAIN)


def evoke_spikes(m: WormModel, p: StimulusParams, seed=None) -> SpikeTrains:
    """Per-pulse spike trains for both fibers.

    The staircase law is deterministic, so ``seed`` never changes the result;
    it is accepted so every simulation stage shares one calling convention.
    """
    check_params(p)
    trains: SpikeTrains = {}
    for name, fiber in m.fibers.items():
        n, amp = spike_count(m, fiber, p.amplitude_vpp, p.pulse_width_ms)
        step = fiber.ap_width_ms / 1000.0
        per_pulse = []
        for k, onset in enumerate(p.pulse_times()):
            onset = float(onset)
            times = tuple(onset + j * step for j in range(n))
            per_pulse.append(FiberSpikeTrain(name, k, onset, times, (amp,) * n))
        trains[name] = per_pulse
    return trains


def contraction_onsets(trains: SpikeTrains) -> list[float]:
    """Pulse onsets that trigger a longitudinal contraction.

    A pulse contracts the body when MGF fires two or more spikes or LGF fires
    more than two.
    """
    onsets = {}
    for t in trains.get("MGF", []):
        if t.n_spikes >= 2:
            onsets[t.pulse_index] = t.pulse_onset_s
    for t in trains.get("LGF", []):
        if t.n_spikes >= 3:
            onsets[t.pulse_index] = t.pulse_onset_s
    return [onsets[k] for k in sorted(onsets)]


def contraction_kernel(t: np.ndarray, tau_s: float) -> np.ndarray:
    """Critically damped unit pulse ``(t/tau) * exp(1 - t/tau)``, peak 1 at ``tau``."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    x = t[pos] / tau_s
    out[pos] = x * np.exp(1.0 - x)
    return out


def kinematic_response(
    m: WormModel, trains: SpikeTrains, duration_s: float, sample_rate_hz: float = 30.0, t0_s: float = 0.0
) -> MotionTrace:
    """HtM and TtM lengths (cm) driven by the contraction events in ``trains``.

    Every contraction subtracts a damped pulse of height ``contraction_gain_cm``
    from HtM; TtM expands by ``antiphase_coupling`` times the HtM shortening.
    Lengths are clamped at 20% of their rest value.
    """
    n = int(round(duration_s * sample_rate_hz))
    t = t0_s + np.arange(n) / sample_rate_hz
    drive = np.zeros(n)
    for onset in contraction_onsets(trains):
        drive += contraction_kernel(t - onset, m.response_tau_s)
    htm = np.maximum(m.rest_htm_cm - m.contraction_gain_cm * drive, 0.2 * m.rest_htm_cm)
    ttm = np.maximum(
        m.rest_ttm_cm + m.antiphase_coupling * (m.rest_htm_cm - htm), 0.2 * m.rest_ttm_cm
    )
    return MotionTrace(t, htm, ttm)


def add_tracking_noise(trace: MotionTrace, sigma_cm: float, rng: np.random.Generator) -> MotionTrace:
    """Independent Gaussian jitter on each tracked length, as a video tracker adds."""
    if sigma_cm <= 0:
        return trace
    htm = trace.htm + rng.normal(0.0, sigma_cm, trace.htm.size)
    ttm = None if trace.ttm is None else trace.ttm + rng.normal(0.0, sigma_cm, trace.ttm.size)
    return MotionTrace(trace.t_s, htm, ttm)
