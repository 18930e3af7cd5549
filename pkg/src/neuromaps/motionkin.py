"""Body-kinematics analysis for tracked earthworm trajectories.

Works on head/mid/tail point tracks exported by a video tracker and on
simulated length traces alike. HtM is the head-to-midsection distance and
TtM the tail-to-midsection distance.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

TRAJECTORY_COLUMNS = ("t", "head_x", "head_y", "mid_x", "mid_y", "tail_x", "tail_y")


class TrajectoryError(ValueError):
    """Malformed trajectory input; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TrajectoryFrame:
    t_s: float
    head: tuple[float, float]
    mid: tuple[float, float] | None
    tail: tuple[float, float] | None = None


@dataclass(frozen=True)
class MotionTrace:
    t_s: np.ndarray
    htm: np.ndarray
    ttm: np.ndarray | None = None
    degenerate: tuple[int, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "t_s", np.asarray(self.t_s, dtype=float))
        object.__setattr__(self, "htm", np.asarray(self.htm, dtype=float))
        if self.htm.shape != self.t_s.shape:
            raise ValueError("htm must match t_s in length")
        if self.ttm is not None:
            object.__setattr__(self, "ttm", np.asarray(self.ttm, dtype=float))
            if self.ttm.shape != self.t_s.shape:
                raise ValueError("ttm must match t_s in length")
        if self.t_s.size > 1 and np.any(np.diff(self.t_s) <= 0):
            raise ValueError("time stamps must be strictly increasing")

    def series(self, name: str) -> np.ndarray:
        if name == "htm":
            return self.htm
        if name == "ttm":
            if self.ttm is None:
                raise ValueError("trace has no TtM series")
            return self.ttm
        raise ValueError(f"unknown series {name!r}")


def vector_lengths(frames) -> MotionTrace:
    """HtM and TtM lengths for each frame.

    TtM is produced only when every frame carries a tail point. Frames where
    head and mid coincide give a zero length and are listed in
    ``degenerate``.
    """
    frames = list(frames)
    if not frames:
        raise TrajectoryError("no frames")
    for i, f in enumerate(frames):
        if f.mid is None:
            raise TrajectoryError(f"frame {i} has no mid point")
        if i and f.t_s <= frames[i - 1].t_s:
            raise TrajectoryError(f"frame {i} time {f.t_s} is not after the previous frame")
    t = np.array([f.t_s for f in frames])
    htm = np.array([math.dist(f.head, f.mid) for f in frames])
    have_tail = all(f.tail is not None for f in frames)
    ttm = np.array([math.dist(f.tail, f.mid) for f in frames]) if have_tail else None
    bad = htm == 0
    if ttm is not None:
        bad |= ttm == 0
    return MotionTrace(t, htm, ttm, tuple(int(i) for i in np.flatnonzero(bad)))


def frames_from_trace(trace: MotionTrace) -> list[TrajectoryFrame]:
    """Lay a length trace out along the x axis with the midsection at the origin."""
    frames = []
    for i, t in enumerate(trace.t_s):
        tail = None if trace.ttm is None else (float(trace.ttm[i]), 0.0)
        frames.append(TrajectoryFrame(float(t), (-float(trace.htm[i]), 0.0), (0.0, 0.0), tail))
    return frames


def write_trajectory_csv(path, frames, comments=()) -> None:
    frames = list(frames)
    with_tail = all(f.tail is not None for f in frames)
    cols = TRAJECTORY_COLUMNS if with_tail else TRAJECTORY_COLUMNS[:5]
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for f in frames:
            row = [f.t_s, *f.head, *f.mid]
            if with_tail:
                row += list(f.tail)
            w.writerow([repr(float(v)) for v in row])


def read_trajectory_csv(path) -> list[TrajectoryFrame]:
    """Parse ``t,head_x,head_y,mid_x,mid_y[,tail_x,tail_y]``; ``#`` lines are skipped.

    Empty mid cells are kept as missing so ``vector_lengths`` can reject the
    frame by index.
    """
    text = Path(path).read_text()
    frames = []
    header = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in next(csv.reader([line]))]
        if header is None:
            header = cells
            if tuple(header) not in (TRAJECTORY_COLUMNS, TRAJECTORY_COLUMNS[:5]):
                raise TrajectoryError(f"unexpected header {','.join(header)}", lineno)
            continue
        if len(cells) != len(header):
            raise TrajectoryError(f"expected {len(header)} fields, got {len(cells)}", lineno)
        try:
            vals = [float(c) if c else None for c in cells]
        except ValueError as exc:
            raise TrajectoryError(str(exc), lineno) from None
        if vals[0] is None or vals[1] is None or vals[2] is None:
            raise TrajectoryError("time and head coordinates are required", lineno)
        mid = None if vals[3] is None or vals[4] is None else (vals[3], vals[4])
        tail = None
        if len(vals) == 7 and vals[5] is not None and vals[6] is not None:
            tail = (vals[5], vals[6])
        frames.append(TrajectoryFrame(vals[0], (vals[1], vals[2]), mid, tail))
    if header is None:
        raise TrajectoryError("empty trajectory file", 1)
    if not frames:
        raise TrajectoryError("no data rows")
    return frames


@dataclass(frozen=True)
class Extremum:
    t_s: float
    kind: str  # "contraction-min" | "expansion-max"
    value: float


def find_extrema(t, values, min_prominence=None, rest_length=None) -> list[Extremum]:
    """Local minima and maxima of a length trace with enough prominence.

    ``min_prominence`` defaults to 10% of ``rest_length``; without a rest length
    the median of the trace stands in for it.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if min_prominence is None:
        ref = rest_length if rest_length is not None else float(np.median(np.abs(values)))
        min_prominence = 0.1 * ref
    if not min_prominence > 0:
        return []
    out = []
    for sign, kind in ((-1.0, "contraction-min"), (1.0, "expansion-max")):
        idx, _ = find_peaks(sign * values, prominence=min_prominence)
        out += [Extremum(float(t[i]), kind, float(values[i])) for i in idx]
    out.sort(key=lambda e: e.t_s)
    return out


def htm_ttm_correlation(trace: MotionTrace) -> float:
    """Zero-lag Pearson correlation between HtM and TtM."""
    if trace.ttm is None:
        raise ValueError("trace has no TtM series")
    if trace.htm.size < 10:
        raise ValueError("need at least 10 samples")
    x = trace.htm - trace.htm.mean()
    y = trace.ttm - trace.ttm.mean()
    sxx, syy = float(x @ x), float(y @ y)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance")
    r = float(x @ y) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def peristimulus_average(t, values, stim_times, window_s):
    """Mean of the trace segments starting at each stimulus, over ``[0, window_s]``.

    Segments that run past the end of the trace are dropped. Returns the lag
    axis, the averaged curve and the number of segments used.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if t.size < 2:
        raise ValueError("trace too short")
    dt = float(np.median(np.diff(t)))
    n_win = int(round(window_s / dt)) + 1
    segments = []
    for s in np.atleast_1d(stim_times):
        if s < t[0] or s > t[-1]:
            continue
        i0 = int(np.searchsorted(t, s - 1e-9 * dt))
        if i0 + n_win > t.size:
            continue
        segments.append(values[i0 : i0 + n_win])
    if not segments:
        raise ValueError("no complete peristimulus segment inside the trace")
    return np.arange(n_win) * dt, np.mean(segments, axis=0), len(segments)
