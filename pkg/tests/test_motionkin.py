import dataclasses

import numpy as np
import pytest

from neuromaps import motionkin
from neuromaps.motionkin import MotionTrace, TrajectoryError, TrajectoryFrame
from neuromaps.stimgen import StimulusParams
from neuromaps.wormsim import WormModel, evoke_spikes, kinematic_response


def _simulate(p, worm=None, duration=None, rate=30.0):
    worm = worm or WormModel()
    duration = duration or float(p.pulse_times()[-1]) + p.period_s
    return worm, kinematic_response(worm, evoke_spikes(worm, p), duration, rate)


def test_three_four_five():
    trace = motionkin.vector_lengths([TrajectoryFrame(0.0, (0.0, 0.0), (3.0, 4.0))])
    assert trace.htm.tolist() == [5.0]
    assert trace.ttm is None


def test_degenerate_frame_kept_and_flagged():
    frames = [TrajectoryFrame(0.0, (1.0, 1.0), (1.0, 1.0)), TrajectoryFrame(0.1, (0.0, 0.0), (1.0, 0.0))]
    trace = motionkin.vector_lengths(frames)
    assert trace.htm.tolist() == [0.0, 1.0]
    assert trace.degenerate == (0,)


def test_missing_mid_rejected_with_index():
    frames = [TrajectoryFrame(0.0, (0, 0), (1, 0)), TrajectoryFrame(0.1, (0, 0), None)]
    with pytest.raises(TrajectoryError, match="frame 1"):
        motionkin.vector_lengths(frames)


def test_trajectory_round_trip(tmp_path):
    _, trace = _simulate(StimulusParams(11.0, 10.0, 1.0, 2, 0.2))
    path = tmp_path / "traj.csv"
    motionkin.write_trajectory_csv(path, motionkin.frames_from_trace(trace), ["note"])
    back = motionkin.vector_lengths(motionkin.read_trajectory_csv(path))
    np.testing.assert_allclose(back.htm, trace.htm, atol=1e-9)
    np.testing.assert_allclose(back.ttm, trace.ttm, atol=1e-9)
    np.testing.assert_allclose(back.t_s, trace.t_s, atol=1e-9)


@pytest.mark.parametrize("text,line", [
    ("", 1),
    ("t,head_x\n", 1),
    ("t,head_x,head_y,mid_x,mid_y\n0,1,2,3\n", 2),
    ("# hi\nt,head_x,head_y,mid_x,mid_y\n0,1,2,3,4\n0.1,a,2,3,4\n", 4),
])
def test_trajectory_errors(tmp_path, text, line):
    path = tmp_path / "t.csv"
    path.write_text(text)
    with pytest.raises(TrajectoryError) as exc:
        motionkin.read_trajectory_csv(path)
    assert exc.value.line == line


def test_constant_trace_has_no_extrema():
    assert motionkin.find_extrema(np.arange(50) / 30, np.full(50, 7.0)) == []


def test_single_contraction_located_at_kernel_peak():
    worm = dataclasses.replace(WormModel(), contraction_gain_cm=0.5)
    worm, trace = _simulate(StimulusParams(8.0, 3.33, 1.0, 1, 0.2), worm, 2.0)
    ext = motionkin.find_extrema(trace.t_s, trace.htm, 0.1, worm.rest_htm_cm)
    mins = [e for e in ext if e.kind == "contraction-min"]
    assert len(mins) == 1
    assert abs(mins[0].t_s - (0.2 + worm.response_tau_s)) <= 1 / 30


def test_two_pulses_two_minima():
    worm = dataclasses.replace(WormModel(), response_tau_s=0.15)
    worm, trace = _simulate(StimulusParams(8.0, 3.33, 1.0, 2, 0.2), worm)
    mins = [e for e in motionkin.find_extrema(trace.t_s, trace.htm, None, worm.rest_htm_cm)
            if e.kind == "contraction-min"]
    assert len(mins) == 2
    # the peak at 0.35 s lies between frames, so each minimum may sit one frame off
    for m, onset in zip(mins, (0.2, 1.2)):
        assert abs(m.t_s - (onset + 0.15)) <= 1 / 30 + 1e-9
    assert mins[1].t_s - mins[0].t_s == pytest.approx(1.0, abs=2 / 30 + 1e-9)


def test_correlation_identities():
    worm = dataclasses.replace(WormModel(), antiphase_coupling=1.0)
    _, trace = _simulate(StimulusParams(11.0, 10.0, 1.0, 3, 0.2), worm)
    assert motionkin.htm_ttm_correlation(trace) == -1.0
    same = MotionTrace(trace.t_s, trace.htm, trace.htm.copy())
    assert motionkin.htm_ttm_correlation(same) == pytest.approx(1.0, abs=1e-12)


def test_correlation_errors():
    t = np.arange(20) / 30
    with pytest.raises(ValueError, match="zero variance"):
        motionkin.htm_ttm_correlation(MotionTrace(t, np.full(20, 7.0), np.arange(20.0)))
    with pytest.raises(ValueError):
        motionkin.htm_ttm_correlation(MotionTrace(t, np.arange(20.0)))


def test_peristimulus_average_identities():
    t = np.arange(300) / 30
    unit = np.exp(-np.arange(30) / 5.0)
    x = np.zeros(300)
    for k in range(10):
        x[k * 30:(k + 1) * 30] = unit
    lags, avg, n = motionkin.peristimulus_average(t, x, np.arange(9), 29 / 30)
    assert n == 9
    np.testing.assert_allclose(avg, unit, atol=1e-12)
    _, one, n1 = motionkin.peristimulus_average(t, x, [2.0], 29 / 30)
    assert n1 == 1
    np.testing.assert_allclose(one, unit)
    with pytest.raises(ValueError):
        motionkin.peristimulus_average(t, x, [100.0], 1.0)


def test_peristimulus_noise_shrinks():
    rng = np.random.default_rng(7)
    sigma = 1.0
    residuals = []
    for _ in range(200):
        t = np.arange(330) / 30
        x = rng.normal(0, sigma, t.size)
        _, avg, n = motionkin.peristimulus_average(t, x, np.arange(10), 0.5)
        residuals.append(avg)
    assert n == 10
    assert np.std(np.concatenate(residuals)) == pytest.approx(sigma / np.sqrt(10), rel=0.3)
