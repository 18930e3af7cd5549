"""Closed-loop search over stimulation amplitude and pulse width.

A responder maps a stimulation program to a yes/no response. On top of that
this module finds per-width thresholds by bisection, sweeps amplitude x width
grids, builds strength-duration maps and picks the minimal-charge program.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import sdfit, wormsim
from .pipeline import Preparation, contraction_extrema, responded_pulses, run_trial
from .stimgen import StimulusParams, pulse_charge

GATES = ("spikes", "motion")
PROBE = StimulusParams(amplitude_vpp=1.0, pulse_width_ms=1.0, burst_rate_hz=1.0, n_pulses=1, start_time_s=0.2)


class BracketError(ValueError):
    pass


class NonMonotoneError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(f"{message}; trace={trace}")
        self.trace = trace


class InsufficientPointsError(ValueError):
    pass


@dataclass(frozen=True)
class Response:
    responded: bool
    n_spikes: int | None = None
    diagnostics: dict = field(default_factory=dict)


def cell_seed(master_seed: int, width_ms: float, amplitude_vpp: float) -> int:
    """Seed for one grid cell that does not depend on evaluation order."""
    key = f"{master_seed}:{float(width_ms)!r}:{float(amplitude_vpp)!r}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1


class ModelResponder:
    """Reads responses straight off the worm model, with no recording or noise."""

    def __init__(self, worm: wormsim.WormModel | None = None, gate: str = "spikes"):
        if gate not in GATES:
            raise ValueError(f"gate must be one of {GATES}")
        self.worm = worm or wormsim.WormModel()
        self.gate = gate

    def __call__(self, p: StimulusParams, seed=None) -> Response:
        trains = wormsim.evoke_spikes(self.worm, p, seed)
        counts = {name: tr[0].n_spikes if tr else 0 for name, tr in trains.items()}
        if self.gate == "spikes":
            responded = any(counts.values())
        else:
            responded = bool(wormsim.contraction_onsets(trains))
        return Response(responded, sum(counts.values()), {"fiber_spikes": counts, "charge_vs": pulse_charge(p)})


class PipelineResponder:
    """Runs the full simulated experiment and judges the response from the analysis.

    The ``spikes`` gate responds when any channel detects an event in the
    response window after a pulse; the ``motion`` gate when HtM shows a
    contraction minimum.
    """

    def __init__(self, prep: Preparation | None = None, gate: str = "spikes", master_seed: int = 0):
        if gate not in GATES:
            raise ValueError(f"gate must be one of {GATES}")
        self.prep = prep or Preparation()
        self.gate = gate
        self.master_seed = master_seed

    def __call__(self, p: StimulusParams, seed=None) -> Response:
        if seed is None:
            seed = cell_seed(self.master_seed, p.pulse_width_ms, p.amplitude_vpp)
        trial = run_trial(self.prep, p, seed)
        hit = responded_pulses(trial, self.prep.detection.response_window_ms)
        contractions = contraction_extrema(trial, self.prep.worm)
        responded = bool(hit.any()) if self.gate == "spikes" else bool(contractions)
        diagnostics = {
            "fiber_spikes": trial.spike_counts(),
            "channel_events": [len(ev) for ev in trial.events],
            "channel_peak_uv": [max((e.peak_uv for e in ev), default=0.0) for ev in trial.events],
            "htm_min_cm": float(trial.motion.htm.min()) if trial.motion.htm.size else math.nan,
            "contractions": len(contractions),
            "charge_vs": pulse_charge(p),
        }
        return Response(responded, sum(trial.spike_counts().values()), diagnostics)


def _params(template: StimulusParams | None, amplitude: float, width: float) -> StimulusParams:
    return dataclasses.replace(template or PROBE, amplitude_vpp=float(amplitude), pulse_width_ms=float(width))


def _check_trace(trace):
    # bisection only probes above a "no" and below a "yes", so the yes/no
    # answers are always consistent; a response that weakens with amplitude
    # shows up as a falling spike count instead
    graded = sorted((a, n) for a, _, n in trace if n is not None)
    for (a1, n1), (a2, n2) in zip(graded, graded[1:]):
        if n2 < n1:
            raise NonMonotoneError(f"{n1} spikes at {a1:g} V but {n2} at {a2:g} V", trace)


def bisect_bracket(responder, width_ms: float, a_lo: float, a_hi: float, tol: float = 0.05,
                   template: StimulusParams | None = None, seed=None) -> tuple[float, float]:
    """Final ``(lo, hi)`` bracket: no response at ``lo``, a response at ``hi``, ``hi - lo <= tol``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not a_hi > a_lo:
        raise BracketError(f"bracket invalid: a_hi {a_hi} <= a_lo {a_lo}")
    trace = []

    def probe(a):
        p = _params(template, a, width_ms)
        r = responder(p) if seed is None else responder(p, seed)
        trace.append((a, r.responded, r.n_spikes))
        return r.responded

    if probe(a_lo):
        raise BracketError(f"bracket invalid: response already at a_lo={a_lo} V (width {width_ms} ms)")
    if not probe(a_hi):
        raise BracketError(f"bracket invalid: no response at a_hi={a_hi} V (width {width_ms} ms)")
    lo, hi = a_lo, a_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    _check_trace(trace)
    return lo, hi


def find_threshold(responder, width_ms: float, a_lo: float, a_hi: float, tol: float = 0.05,
                   template: StimulusParams | None = None, seed=None) -> float:
    """Bisect amplitude at fixed width down to a bracket no wider than ``tol``.

    Needs no response at ``a_lo`` and a response at ``a_hi``. Returns the
    midpoint of the final bracket after at most ``ceil(log2((a_hi - a_lo)/tol)) + 2``
    responder calls.
    """
    lo, hi = bisect_bracket(responder, width_ms, a_lo, a_hi, tol, template, seed)
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SweepCell:
    width_ms: float
    amplitude_vpp: float
    seed: int
    responded: bool | None
    charge_vs: float | None
    n_spikes: int | None = None
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    cells: tuple[SweepCell, ...]
    seed: int

    def cell(self, width_ms, amplitude_vpp) -> SweepCell:
        for c in self.cells:
            if math.isclose(c.width_ms, width_ms) and math.isclose(c.amplitude_vpp, amplitude_vpp):
                return c
        raise KeyError((width_ms, amplitude_vpp))

    def responded_grid(self, widths, amplitudes) -> np.ndarray:
        return np.array([[bool(self.cell(w, a).responded) for a in amplitudes] for w in widths])


def _run_cell(responder, template, width, amplitude, master_seed):
    s = cell_seed(master_seed, width, amplitude)
    try:
        p = _params(template, amplitude, width)
        r = responder(p, s)
        return SweepCell(width, amplitude, s, r.responded, pulse_charge(p), r.n_spikes, dict(r.diagnostics))
    except Exception as exc:  # recorded per cell; a bad cell never aborts the sweep
        return SweepCell(width, amplitude, s, None, None, error=f"{type(exc).__name__}: {exc}")


def grid_sweep(responder, widths, amplitudes, seed: int = 0, template: StimulusParams | None = None,
               jobs: int = 1) -> SweepResult:
    """Evaluate every (width, amplitude) cell; output sorted by width then amplitude."""
    widths = [float(w) for w in widths]
    amplitudes = [float(a) for a in amplitudes]
    if not widths or not amplitudes:
        raise ValueError("sweep grids must be non-empty")
    grid = sorted({(w, a) for w in widths for a in amplitudes})
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(lambda wa: _run_cell(responder, template, wa[0], wa[1], seed), grid))
    else:
        cells = [_run_cell(responder, template, w, a, seed) for w, a in grid]
    return SweepResult(tuple(cells), seed)


@dataclass(frozen=True)
class SDMap:
    points: tuple[sdfit.SDPoint, ...]
    failures: dict
    fits: dict  # model -> SDFit
    fit_errors: dict
    best: str | None


def thresholds_by_width(responder, widths, bracket, tol, template=None, jobs: int = 1):
    """``(width, (lo, hi) or None, error or None)`` per width."""

    def one(w):
        try:
            return w, bisect_bracket(responder, w, bracket[0], bracket[1], tol, template), None
        except (BracketError, NonMonotoneError, ValueError) as exc:
            return w, None, str(exc)

    widths = [float(w) for w in widths]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, widths))
    return [one(w) for w in widths]


def build_sd_map(responder, widths, bracket=(0.5, 12.0), tol: float = 0.05,
                 template: StimulusParams | None = None, jobs: int = 1) -> SDMap:
    """Threshold per width by bisection, then Weiss and Lapicque fits.

    Widths whose bracket fails are listed in ``failures``; fitting proceeds
    when at least two widths succeed.
    """
    points, failures = [], {}
    for w, br, err in thresholds_by_width(responder, widths, bracket, tol, template, jobs):
        if err is None:
            points.append(sdfit.SDPoint(w, 0.5 * (br[0] + br[1])))
        else:
            failures[w] = err
    if len({p.width_ms for p in points}) < 2:
        raise InsufficientPointsError(
            f"insufficient points: {len(points)} width(s) gave a threshold; failures={failures}"
        )
    fits, fit_errors = {}, {}
    for model in sdfit.MODELS:
        try:
            fits[model] = sdfit.fit(points, model)
        except sdfit.FitError as exc:
            fit_errors[model] = str(exc)
    best = min(fits, key=lambda k: fits[k].rss) if fits else None
    return SDMap(tuple(points), failures, fits, fit_errors, best)


@dataclass(frozen=True)
class ChargeOptimum:
    params: StimulusParams
    charge_vs: float
    candidates: tuple[dict, ...]


def optimize_min_charge(responder, widths, bracket=(0.5, 12.0), tol: float = 0.05, margin: float = 0.05,
                        template: StimulusParams | None = None, jobs: int = 1) -> ChargeOptimum:
    """Cheapest responsive program across ``widths``.

    Each width is driven at the upper end of its final bisection bracket (the
    lowest amplitude seen to respond) times ``1 + margin``; the candidate is
    kept only if the responder confirms a response there.
    """
    if margin < 0:
        raise ValueError("margin must be non-negative")
    candidates = []
    for w, br, err in thresholds_by_width(responder, widths, bracket, tol, template, jobs):
        if err is not None:
            candidates.append({"width_ms": w, "error": err})
            continue
        thr = 0.5 * (br[0] + br[1])
        p = _params(template, br[1] * (1.0 + margin), w)
        ok = responder(p).responded
        candidates.append({"width_ms": w, "threshold_vpp": thr, "amplitude_vpp": p.amplitude_vpp,
                           "charge_vs": pulse_charge(p), "responded": ok})
    usable = [c for c in candidates if c.get("responded")]
    if not usable:
        raise InsufficientPointsError("no responsive width")
    best = min(usable, key=lambda c: (c["charge_vs"], c["width_ms"]))
    return ChargeOptimum(_params(template, best["amplitude_vpp"], best["width_ms"]), best["charge_vs"],
                         tuple(candidates))
