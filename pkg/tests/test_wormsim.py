import dataclasses

import numpy as np
import pytest

from neuromaps.stimgen import StimulusParams
from neuromaps.wormsim import (
    WormModel, contraction_kernel, contraction_onsets, default_lgf, default_mgf, evoke_spikes,
    kinematic_response, threshold_amplitude, validate_model,
)

MGF = default_mgf()


def test_default_physiology():
    m = WormModel()
    assert (m.mgf.velocity_m_per_s, m.lgf.velocity_m_per_s) == (32.2, 12.6)
    assert (m.mgf.rheobase_vpp, m.mgf.chronaxie_ms) == (2.0, 3.33)
    assert validate_model(m) == []


def test_threshold_doubles_rheobase_at_chronaxie():
    assert threshold_amplitude(MGF, 3.33) == pytest.approx(4.0, rel=1e-12)
    assert threshold_amplitude(MGF, 3.33, "lapicque") == pytest.approx(4.0, rel=1e-12)


def test_threshold_short_pulse():
    assert threshold_amplitude(MGF, 2.0) == pytest.approx(5.33, abs=1e-9)


@pytest.mark.parametrize("model", ["weiss", "lapicque"])
def test_threshold_approaches_rheobase(model):
    excess = threshold_amplitude(MGF, 333.0, model) / 2.0 - 1.0
    assert 0.0 <= excess <= 0.01 + 1e-12


def test_threshold_rejects_bad_width_and_model():
    with pytest.raises(ValueError):
        threshold_amplitude(MGF, 0.0)
    with pytest.raises(ValueError):
        threshold_amplitude(MGF, 1.0, "hill")


def test_lgf_threshold_sits_above_mgf_on_grid_widths():
    for w in (2, 2.5, 2.86, 3.33, 4, 5, 6.67):
        assert threshold_amplitude(default_lgf(), w) > threshold_amplitude(MGF, w)


def test_subthreshold_pulse_gives_no_spikes():
    trains = evoke_spikes(WormModel(), StimulusParams(2.0, 3.33, 1.0, 3))
    assert all(t.n_spikes == 0 for tr in trains.values() for t in tr)
    assert [t.pulse_index for t in trains["MGF"]] == [0, 1, 2]


def test_staircase_counts():
    trains = evoke_spikes(WormModel(), StimulusParams(2.5 * 4.0, 3.33, 1.0, 2))
    assert [t.n_spikes for t in trains["MGF"]] == [2, 2]
    t = trains["MGF"][1]
    assert t.spike_times_s == pytest.approx((1.0, 1.002))


def test_spike_count_capped():
    m = dataclasses.replace(WormModel(), max_spikes_per_pulse=3)
    assert evoke_spikes(m, StimulusParams(40.0, 3.33))["MGF"][0].n_spikes == 3


def test_evoke_is_deterministic_and_seed_free():
    p = StimulusParams(6.0, 4.0, 1.0, 3)
    assert evoke_spikes(WormModel(), p, 1) == evoke_spikes(WormModel(), p, 2) == evoke_spikes(WormModel(), p)


def test_validate_model_catches_direction_and_values():
    bad = dataclasses.replace(WormModel(), mgf=dataclasses.replace(MGF, direction="tail_to_head"))
    assert any("direction" in p for p in validate_model(bad))
    bad = dataclasses.replace(WormModel(), mgf=dataclasses.replace(MGF, chronaxie_ms=0.0))
    assert any("chronaxie_ms" in p for p in validate_model(bad))


def test_contraction_rule():
    m = WormModel()
    one = evoke_spikes(m, StimulusParams(5.0, 3.33, 1.0, 2))
    two = evoke_spikes(m, StimulusParams(8.0, 3.33, 1.0, 2))
    assert contraction_onsets(one) == []
    assert contraction_onsets(two) == [0.0, 1.0]


def test_kernel_peaks_at_tau():
    t = np.linspace(0, 2, 20001)
    k = contraction_kernel(t, 0.3)
    assert t[np.argmax(k)] == pytest.approx(0.3, abs=1e-4)
    assert k.max() == pytest.approx(1.0, abs=1e-9)
    assert contraction_kernel(np.array([-1.0, 0.0]), 0.3).tolist() == [0.0, 0.0]


def test_single_spike_pulses_leave_htm_at_rest():
    m = WormModel()
    trace = kinematic_response(m, evoke_spikes(m, StimulusParams(5.0, 3.33, 1.0, 3)), 3.0)
    assert np.all(trace.htm == m.rest_htm_cm)
    assert np.all(trace.ttm == m.rest_ttm_cm)


def test_antiphase_identity():
    m = dataclasses.replace(WormModel(), antiphase_coupling=1.0)
    trace = kinematic_response(m, evoke_spikes(m, StimulusParams(8.0, 3.33, 1.0, 2)), 2.0)
    np.testing.assert_allclose(trace.htm - m.rest_htm_cm, -(trace.ttm - m.rest_ttm_cm), atol=1e-12)
    assert trace.htm.min() < m.rest_htm_cm


def test_contraction_depth_equals_gain():
    m = dataclasses.replace(WormModel(), contraction_gain_cm=0.5, response_tau_s=0.3)
    trace = kinematic_response(m, evoke_spikes(m, StimulusParams(8.0, 3.33, 1.0, 1)), 1.0, 30.0)
    assert trace.htm.min() == pytest.approx(m.rest_htm_cm - 0.5, abs=0.01)


def test_lengths_clamped():
    m = dataclasses.replace(WormModel(), contraction_gain_cm=100.0)
    trace = kinematic_response(m, evoke_spikes(m, StimulusParams(8.0, 3.33, 1.0, 1)), 1.0)
    assert trace.htm.min() == pytest.approx(0.2 * m.rest_htm_cm)


def test_model_families_stay_close_near_chronaxie():
    for w in np.linspace(3.33 / 2, 4 * 3.33, 50):
        a, b = threshold_amplitude(MGF, w, "weiss"), threshold_amplitude(MGF, w, "lapicque")
        assert abs(a / b - 1) < 0.25


def test_response_monotone_in_amplitude():
    m = WormModel()
    prev = (0, 0.0)
    for amp in np.linspace(0.0, 30.0, 121):
        t = evoke_spikes(m, StimulusParams(float(amp), 3.33))["MGF"][0]
        cur = (t.n_spikes, t.amplitude_uv[0] if t.n_spikes else 0.0)
        assert cur[0] >= prev[0] and (cur[1] >= prev[1] or cur[0] == 0)
        prev = cur
