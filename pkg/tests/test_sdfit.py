import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neuromaps import sdfit
from neuromaps.sdfit import FitError, SDFit, SDPoint

WIDTHS = (2.0, 2.5, 2.86, 3.33, 4.0, 5.0, 6.67)


def _points(model, r, c, widths=WIDTHS):
    return [SDPoint(w, float(sdfit.sd_curve(model, r, c, w))) for w in widths]


def test_weiss_exact_round_trip():
    f = sdfit.fit_weiss(_points("weiss", 2.0, 3.33))
    assert f.rheobase_vpp == pytest.approx(2.0, abs=1e-6)
    assert f.chronaxie_ms == pytest.approx(3.33, abs=1e-6)
    assert f.rss < 1e-20


def test_weiss_definitional_anchors():
    f = sdfit.fit_weiss([SDPoint(3.33, 4.0), SDPoint(333.0, 2.02)])
    assert f.rheobase_vpp == pytest.approx(2.0, rel=1e-9)


def test_weiss_noisy_chronaxie():
    rng = np.random.default_rng(42)
    errors = []
    for _ in range(100):
        pts = [SDPoint(p.width_ms, p.threshold_vpp * (1 + 0.05 * rng.standard_normal()))
               for p in _points("weiss", 2.0, 3.33)]
        errors.append(abs(sdfit.fit_weiss(pts).chronaxie_ms / 3.33 - 1))
    assert np.median(errors) < 0.15


def test_duplicate_widths_rejected():
    with pytest.raises(FitError):
        sdfit.fit_weiss([SDPoint(3.0, 4.0), SDPoint(3.0, 4.1)])
    with pytest.raises(FitError):
        sdfit.fit_lapicque([SDPoint(3.0, 4.0), SDPoint(3.0, 4.0)])
    with pytest.raises(FitError, match="insufficient points"):
        sdfit.fit_weiss([SDPoint(3.0, 4.0)])


def test_weiss_model_mismatch():
    with pytest.raises(FitError, match="model mismatch"):
        sdfit.fit_weiss([SDPoint(2.0, 3.0), SDPoint(4.0, 5.0)])


def test_lapicque_round_trip():
    f = sdfit.fit_lapicque(_points("lapicque", 2.0, 3.33))
    assert f.rheobase_vpp == pytest.approx(2.0, rel=1e-3)
    assert f.chronaxie_ms == pytest.approx(3.33, rel=1e-3)


def test_lapicque_worse_on_weiss_data():
    pts = _points("weiss", 2.0, 3.33)
    assert sdfit.fit_lapicque(pts).rss > sdfit.fit_weiss(pts).rss


def test_predict_threshold():
    f = SDFit("weiss", 2.0, 3.33, 0.0, 7)
    assert sdfit.predict_threshold(f, 6.67) == pytest.approx(2.999, abs=5e-4)
    assert sdfit.predict_threshold(f, 1e6) == pytest.approx(2.0, rel=1e-5)
    with pytest.raises(ValueError):
        sdfit.predict_threshold(f, 0.0)


@settings(max_examples=60, deadline=None)
@given(model=st.sampled_from(sdfit.MODELS), r=st.floats(0.01, 100.0), c=st.floats(0.01, 100.0))
def test_chronaxie_identity(model, r, c):
    f = SDFit(model, r, c, 0.0, 2)
    assert sdfit.predict_threshold(f, c) == pytest.approx(2 * r, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(model=st.sampled_from(sdfit.MODELS), r=st.floats(0.5, 10.0), c=st.floats(0.5, 10.0))
def test_fit_recovers_generating_model(model, r, c):
    f = sdfit.fit(_points(model, r, c), model)
    assert f.rheobase_vpp == pytest.approx(r, rel=1e-3)
    assert f.chronaxie_ms == pytest.approx(c, rel=1e-3)


def test_points_csv_round_trip(tmp_path):
    pts = _points("weiss", 2.0, 3.33)
    path = tmp_path / "pts.csv"
    sdfit.write_points_csv(path, pts, ["seed 1"])
    assert sdfit.read_points_csv(path) == pts


def test_unknown_model():
    with pytest.raises(ValueError):
        sdfit.fit(_points("weiss", 2, 3), "hill")
