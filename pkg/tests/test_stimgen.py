import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuromaps.stimgen import StimulusParams, generate_waveform, pulse_charge, validate_params


def test_one_hertz_burst_program_is_valid():
    assert validate_params(StimulusParams(4.0, 3.33, 1.0, 10)) == []


def test_zero_width_rejected():
    problems = validate_params(StimulusParams(4.0, 0.0, 1.0, 1))
    assert any("pulse_width_ms must be positive" in p for p in problems)


def test_overlapping_pulses_rejected():
    problems = validate_params(StimulusParams(4.0, 600.0, 2.0, 2))
    assert problems == ["pulses overlap: width 0.6 s >= period 0.5 s"]


@pytest.mark.parametrize("field,value", [("burst_rate_hz", 0.0), ("n_pulses", 0), ("amplitude_vpp", -1.0),
                                         ("start_time_s", -0.1), ("amplitude_vpp", math.nan)])
def test_invalid_fields_reported(field, value):
    kwargs = {field: value}
    assert validate_params(StimulusParams(**kwargs))


def test_sham_amplitude_gives_silent_trace():
    sig = generate_waveform(StimulusParams(0.0, 3.33, 1.0, 3), 10_000)
    assert sig.samples.size == 30_000
    assert not sig.samples.any()


def test_peak_and_zero_outside_pulses():
    # 3.2 ms at 40 kHz: 128 samples per pulse, quarter period on sample 32
    p = StimulusParams(6.0, 3.2, 1.0, 2, 0.1)
    sig = generate_waveform(p, 40_000)
    start = 4000
    assert sig.samples[start + 32] == pytest.approx(3.0, abs=1e-12)
    assert sig.samples[start + 96] == pytest.approx(-3.0, abs=1e-12)
    assert np.abs(sig.samples).max() == pytest.approx(3.0, abs=1e-12)
    mask = np.zeros(sig.samples.size, bool)
    for onset in (4000, 44000):
        mask[onset:onset + 128] = True
    assert not sig.samples[~mask].any()


def test_pulse_is_odd_about_its_midpoint():
    p = StimulusParams(5.0, 2.5, 1.0, 1)
    x = generate_waveform(p, 10_000).samples[:25]
    # 25 samples per pulse: x[k] == -x[25 - k]
    np.testing.assert_allclose(x[1:], -x[1:][::-1], atol=1e-12)
    assert x[0] == 0.0


def test_default_duration_and_t0():
    p = StimulusParams(4.0, 3.33, 2.0, 3, 0.25)
    sig = generate_waveform(p, 1000)
    assert sig.duration_s == pytest.approx(0.25 + 1.0 + 0.5)
    shifted = generate_waveform(p, 1000, duration_s=1.5, t0_s=0.25)
    np.testing.assert_allclose(shifted.samples, sig.samples[250:])


def test_short_duration_names_uncovered_pulse():
    with pytest.raises(ValueError, match="pulse 2"):
        generate_waveform(StimulusParams(4.0, 5.0, 1.0, 3), 10_000, duration_s=2.003)


def test_invalid_params_raise():
    with pytest.raises(ValueError, match="invalid stimulus"):
        generate_waveform(StimulusParams(4.0, -1.0), 10_000)


def test_pulse_charge_analytic():
    assert pulse_charge(StimulusParams(4.0, 5.0)) == pytest.approx(6.366e-3, rel=1e-4)
    assert pulse_charge(StimulusParams(0.0, 5.0)) == 0.0


def test_pulse_charge_matches_numeric_area():
    p = StimulusParams(4.0, 5.0, 1.0, 1)
    sig = generate_waveform(p, 1_000_000, duration_s=0.006)
    area = np.abs(sig.samples).sum() / sig.sample_rate_hz
    assert area == pytest.approx(pulse_charge(p), rel=1e-4)


@settings(max_examples=50, deadline=None)
@given(a=st.floats(0.0, 20.0), w=st.floats(0.1, 50.0), k=st.floats(0.1, 10.0))
def test_charge_is_bilinear(a, w, k):
    base = pulse_charge(StimulusParams(a, w))
    assert pulse_charge(StimulusParams(a * k, w)) == pytest.approx(base * k, rel=1e-12, abs=1e-18)
    assert pulse_charge(StimulusParams(a, w * k)) == pytest.approx(base * k, rel=1e-12, abs=1e-18)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.0, 20.0), w=st.floats(0.5, 20.0), n=st.integers(1, 4))
def test_waveform_bounded_by_half_amplitude(a, w, n):
    sig = generate_waveform(StimulusParams(a, w, 2.0, n), 5000)
    assert np.abs(sig.samples).max() <= a / 2 + 1e-12


@pytest.mark.parametrize("width", [2.0, 2.5, 4.0, 5.0])
def test_each_pulse_sums_to_zero(width):
    # whole number of samples per cycle: the sampled sine cancels exactly
    p = StimulusParams(5.0, width, 1.0, 1)
    x = generate_waveform(p, 10_000, duration_s=0.01).samples
    n = int(round(width * 10))
    assert abs(x[:n].mean()) < 1e-9 * p.amplitude_vpp


@pytest.mark.parametrize("width", [2.86, 3.33, 6.67])
def test_fractional_cycle_residue_is_small(width):
    # a cycle that ends between samples leaves a residue under one sample's worth
    p = StimulusParams(5.0, width, 1.0, 1)
    x = generate_waveform(p, 10_000, duration_s=0.01).samples
    n = (x != 0).sum()
    assert abs(x.sum() / n) < p.amplitude_vpp / 2 / n
