"""Strength-duration curve fitting (rheobase and chronaxie).

Two classical families are supported:

* Weiss (hyperbolic):   threshold = R * (1 + C / W)
* Lapicque (exponential): threshold = R / (1 - 2 ** (-W / C))

Both give ``threshold = 2R`` at ``W = C``. Residuals are always reported in
threshold space so the two fits can be compared directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

MODELS = ("weiss", "lapicque")
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class SDPoint:
    width_ms: float
    threshold_vpp: float

    def __post_init__(self):
        if not (self.width_ms > 0 and self.threshold_vpp > 0):
            raise ValueError(f"SD point needs positive width and threshold, got {self}")


@dataclass(frozen=True)
class SDFit:
    model: str
    rheobase_vpp: float
    chronaxie_ms: float
    rss: float
    n_points: int

    def to_json(self) -> dict:
        return asdict(self)


def sd_curve(model: str, rheobase: float, chronaxie: float, width_ms):
    w = np.asarray(width_ms, dtype=float)
    if model == "weiss":
        return rheobase * (1.0 + chronaxie / w)
    if model == "lapicque":
        return rheobase / -np.expm1(-w / chronaxie * math.log(2.0))
    raise ValueError(f"unknown model {model!r}")


def predict_threshold(fit: SDFit, width_ms: float) -> float:
    if not width_ms > 0:
        raise ValueError("width_ms must be positive")
    return float(sd_curve(fit.model, fit.rheobase_vpp, fit.chronaxie_ms, width_ms))


def _arrays(points):
    pts = list(points)
    if len(pts) < 2:
        raise FitError("insufficient points: need at least 2")
    w = np.array([p.width_ms for p in pts], dtype=float)
    t = np.array([p.threshold_vpp for p in pts], dtype=float)
    if np.unique(w).size < 2:
        raise FitError("need at least 2 distinct widths")
    return w, t


def fit_weiss(points) -> SDFit:
    """Exact least squares on the charge form ``T*W = R*W + R*C``."""
    w, t = _arrays(points)
    slope, intercept = np.polyfit(w, t * w, 1)
    if not (slope > 0 and intercept > 0):
        raise FitError(f"model mismatch: rheobase {slope:g}, rheobase*chronaxie {intercept:g}")
    r, c = float(slope), float(intercept / slope)
    rss = float(np.sum((t - sd_curve("weiss", r, c, w)) ** 2))
    return SDFit("weiss", r, c, rss, w.size)


def _lapicque_profile(w, t, c):
    # best rheobase for a fixed chronaxie is linear least squares on g = 1/(1 - 2^(-W/C))
    g = 1.0 / -np.expm1(-w / c * math.log(2.0))
    r = float(t @ g) / float(g @ g)
    resid = t - r * g
    return float(resid @ resid), r


def fit_lapicque(points, rel_tol: float = 1e-6, n_scan: int = 200) -> SDFit:
    """Lapicque fit by 1-D search over chronaxie.

    A log-spaced scan over ``[0.1*min W, 10*max W]`` picks the bracket around
    the best candidate, then golden-section search narrows it until its width
    is below ``rel_tol`` times the chronaxie.
    """
    w, t = _arrays(points)
    lo, hi = 0.1 * w.min(), 10.0 * w.max()
    grid = np.geomspace(lo, hi, n_scan)
    scores = [_lapicque_profile(w, t, c)[0] for c in grid]
    k = int(np.argmin(scores))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, n_scan - 1)]

    x1 = b - _INV_PHI * (b - a)
    x2 = a + _INV_PHI * (b - a)
    f1 = _lapicque_profile(w, t, x1)[0]
    f2 = _lapicque_profile(w, t, x2)[0]
    while b - a > rel_tol * 0.5 * (a + b):
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INV_PHI * (b - a)
            f1 = _lapicque_profile(w, t, x1)[0]
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (b - a)
            f2 = _lapicque_profile(w, t, x2)[0]
    c = 0.5 * (a + b)
    rss, r = _lapicque_profile(w, t, c)
    if not (r > 0 and c > 0):
        raise FitError(f"model mismatch: rheobase {r:g}, chronaxie {c:g}")
    return SDFit("lapicque", r, float(c), rss, w.size)


def fit(points, model: str) -> SDFit:
    if model == "weiss":
        return fit_weiss(points)
    if model == "lapicque":
        return fit_lapicque(points)
    raise ValueError(f"unknown model {model!r}")


def write_points_csv(path, points, comments=()) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["width_ms", "threshold_vpp"])
        for p in points:
            w.writerow([repr(float(p.width_ms)), repr(float(p.threshold_vpp))])


def read_points_csv(path) -> list[SDPoint]:
    rows = [
        line for line in Path(path).read_text().splitlines()
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not rows or rows[0].replace(" ", "") != "width_ms,threshold_vpp":
        raise ValueError("expected header width_ms,threshold_vpp")
    return [SDPoint(*map(float, r.split(","))) for r in rows[1:]]
