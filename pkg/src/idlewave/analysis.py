"""Idle-period statistics, wave-front detection and self-synchronization detection.

Everything here is a pure function of an immutable :class:`Trace`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, PhaseUndefinedError
from .trace import Trace

DEFAULT_THRESHOLD = 1_000_000


# -- per-rank statistics ---------------------------------------------------------

@dataclass(frozen=True)
class RankStats:
    rank: int
    min_idle: int
    mean_idle: float
    max_idle: int
    count: int

    def to_json(self) -> str:
        return json.dumps({"type": "rank_stats", "rank": self.rank, "min_idle": self.min_idle,
                           "mean_idle": self.mean_idle, "max_idle": self.max_idle,
                           "count": self.count}, separators=(",", ":"))


def idle_stats(trace: Trace) -> list[RankStats]:
    """Exact min/mean/max idle per rank; ranks without records are omitted."""
    if len(trace) == 0:
        return []
    dur = trace.duration
    ranks = trace.rank
    present = np.unique(ranks)
    count = np.bincount(ranks, minlength=trace.header.ranks)
    total = np.zeros(trace.header.ranks, dtype=np.int64)
    lo = np.full(trace.header.ranks, np.iinfo(np.int64).max, dtype=np.int64)
    hi = np.full(trace.header.ranks, -1, dtype=np.int64)
    np.add.at(total, ranks, dur)
    np.minimum.at(lo, ranks, dur)
    np.maximum.at(hi, ranks, dur)
    return [RankStats(int(r), int(lo[r]), int(total[r]) / int(count[r]), int(hi[r]), int(count[r]))
            for r in present]


# -- binarization --------------------------------------------------------------

@dataclass(frozen=True)
class Occupancy:
    """0/1 long-idle occupancy, one row per rank; bin ``i`` covers
    ``[origin + i*bin, origin + (i+1)*bin)``."""
    matrix: np.ndarray
    bin: int
    origin: int
    threshold: int

    @property
    def n_bins(self) -> int:
        return self.matrix.shape[1]


def binarize(trace: Trace, threshold: int = DEFAULT_THRESHOLD, bin: int = 1_000_000,
             origin: int = 0, n_bins: int | None = None) -> Occupancy:
    if threshold <= 0:
        raise ValueError("threshold must be > 0")
    if bin <= 0:
        raise ValueError("bin must be > 0")
    R = trace.header.ranks
    long = trace.duration >= threshold
    s = trace.start[long] - origin
    e = trace.end[long] - origin
    r = trace.rank[long]
    if n_bins is None:
        n_bins = int(-(-int(trace.end.max() - origin) // bin)) if len(trace) else 0
        n_bins = max(n_bins, 0)
    first = np.clip(s // bin, 0, n_bins)
    last = np.clip(-(-e // bin), 0, n_bins)      # exclusive
    keep = last > first
    diff = np.zeros((R, n_bins + 1), dtype=np.int64)
    np.add.at(diff, (r[keep], first[keep]), 1)
    np.add.at(diff, (r[keep], last[keep]), -1)
    matrix = (np.cumsum(diff[:, :n_bins], axis=1) > 0).astype(np.uint8)
    return Occupancy(matrix, int(bin), int(origin), int(threshold))


# -- wave fronts -----------------------------------------------------------------

@dataclass(frozen=True)
class WaveFront:
    points: tuple
    slope: float                      # cycles of onset per rank
    speed_ranks_per_gcycle: float
    speed_ranks_per_sec: float
    r_squared: float

    @property
    def ranks(self) -> list[int]:
        return [p[0] for p in self.points]

    def to_json(self) -> str:
        return json.dumps({"type": "wave_front", "points": [list(p) for p in self.points],
                           "slope": self.slope,
                           "speed_ranks_per_gcycle": self.speed_ranks_per_gcycle,
                           "speed_ranks_per_sec": self.speed_ranks_per_sec,
                           "r_squared": self.r_squared}, separators=(",", ":"))


def long_idle_onsets(trace: Trace, threshold: int = DEFAULT_THRESHOLD) -> dict[int, np.ndarray]:
    """Onset times of long idles per rank; back-to-back long waits count once."""
    long = trace.duration >= threshold
    out = {}
    for r in np.unique(trace.rank[long]):
        sel = long & (trace.rank == r)
        s, e = trace.start[sel], trace.end[sel]
        order = np.argsort(s, kind="stable")
        s, e = s[order], e[order]
        reach = np.maximum.accumulate(e)
        fresh = np.ones(len(s), dtype=bool)
        fresh[1:] = s[1:] > reach[:-1]
        out[int(r)] = s[fresh]
    return out


def cycle_period_estimate(trace: Trace) -> float:
    if len(trace) == 0:
        return 0.0
    span = int(trace.end.max() - trace.start.min())
    return span / max(trace.header.cycles, 1)


def fit_front(points, clock_hz: float) -> WaveFront:
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = ((x - xm) ** 2).sum()
    slope = float(((x - xm) * (y - ym)).sum() / sxx)
    resid = y - (ym + slope * (x - xm))
    sst = ((y - ym) ** 2).sum()
    r2 = 1.0 if sst == 0 else max(0.0, 1.0 - float((resid ** 2).sum() / sst))
    speed = 1e9 / slope if slope else math.inf
    return WaveFront(tuple((int(a), int(b)) for a, b in points), slope, speed,
                     clock_hz / slope if slope else math.inf, r2)


def _chains(onsets: dict[int, np.ndarray], window: float, sign: int):
    used = {r: np.zeros(len(t), dtype=bool) for r, t in onsets.items()}
    chains = []
    for r0 in sorted(onsets):
        for i0 in range(len(onsets[r0])):
            if used[r0][i0]:
                continue
            chain = [(r0, int(onsets[r0][i0]))]
            idx = [(r0, i0)]
            r, t = r0, onsets[r0][i0]
            while r + 1 in onsets:
                cand = onsets[r + 1]
                gap = (cand - t) * sign
                ok = (gap > 0) & (gap <= window) & ~used[r + 1]
                if not ok.any():
                    break
                j = int(np.flatnonzero(ok)[np.argmin(gap[ok])])
                r, t = r + 1, cand[j]
                chain.append((r, int(t)))
                idx.append((r, j))
            if len(chain) >= 3:
                for rr, j in idx:
                    used[rr][j] = True
                chains.append(chain)
    return chains


def detect_waves(trace: Trace, threshold: int = DEFAULT_THRESHOLD,
                 chaining_window: float | None = None, min_points: int = 3) -> list[WaveFront]:
    """Chain long-idle onsets across adjacent ranks and fit each chain.

    A rising front (onset grows with rank) gets a positive speed, a falling one
    a negative speed.  Fronts are returned ordered by their first point.
    """
    onsets = long_idle_onsets(trace, threshold)
    if not onsets:
        return []
    if chaining_window is None:
        chaining_window = 3.0 * cycle_period_estimate(trace)
    fronts = []
    for sign in (1, -1):
        for chain in _chains(onsets, chaining_window, sign):
            if len(chain) >= min_points:
                fronts.append(fit_front(chain, trace.header.clock_hz))
    fronts.sort(key=lambda f: (f.points[0][0], f.points[0][1], -f.slope))
    return fronts


# -- periodicity and phase -------------------------------------------------------

def _xcorr_raw(a, b):
    """c[k] = sum_n a[n] * b[(n + k) % N] via FFT."""
    n = len(a)
    c = np.fft.irfft(np.conj(np.fft.rfft(a)) * np.fft.rfft(b), n)
    return c


def _is_integral(x):
    return np.issubdtype(x.dtype, np.integer) or np.issubdtype(x.dtype, np.bool_)


def xcorr_peak(a, b, period: int | None = None) -> tuple[int, float]:
    """Best circular shift (in bins, reduced modulo ``period``) and its normalized correlation."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("series must be one-dimensional and of equal length")
    n = len(a)
    af, bf = a.astype(float), b.astype(float)
    sa, sb = af.std(), bf.std()
    if n == 0 or sa == 0 or sb == 0:
        raise PhaseUndefinedError("phase undefined for a zero-variance series")
    raw = _xcorr_raw(af, bf)
    if _is_integral(a) and _is_integral(b):
        raw = np.rint(raw)
        best = raw.max()
        cand = np.flatnonzero(raw == best)
    else:
        best = raw.max()
        cand = np.flatnonzero(raw >= best - 1e-9 * max(abs(best), 1.0))
    norm = (best - n * af.mean() * bf.mean()) / (n * sa * sb)
    p = period if period and period > 0 else n
    return int((cand % p).min()), float(norm)


def phase_between(series_a, series_b, period_hint: int | None = None, bin: int = 1) -> int:
    """Shift in cycles that best maps ``series_a`` onto ``series_b``.

    ``b == np.roll(a, d)`` gives ``d * bin``.  ``period_hint`` is in bins; when
    omitted the period is estimated from ``series_a``.
    """
    if period_hint is None:
        period_hint = estimate_period(series_a)
    shift, _ = xcorr_peak(series_a, series_b, period_hint)
    return shift * bin


def autocorrelation(x) -> np.ndarray:
    """Biased, normalized linear autocorrelation (lag 0 is 1)."""
    x = np.asarray(x, dtype=float)
    x = x - x.mean()
    n = len(x)
    size = 1 << int(2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    ac = np.fft.irfft(f * np.conj(f), size)[:n]
    return ac / ac[0] if ac[0] > 0 else np.zeros(n)


def estimate_period(series, harmonic_ratio: float = 0.9) -> int | None:
    """Dominant period in bins, or None when no significant peak exists.

    Past the initial decay of the autocorrelation, the highest peak wins; a
    sub-multiple of it is preferred when its peak is nearly as high, so a
    slightly noisier first repeat does not double the period.
    """
    x = np.asarray(series)
    n = len(x)
    if n < 4 or x.std() == 0:
        return None
    ac = autocorrelation(x)
    half = n // 2 + 1
    k = 1
    while k < half - 1 and ac[k + 1] < ac[k]:
        k += 1
    if k >= half - 2:
        return None
    is_peak = np.zeros(half, dtype=bool)
    is_peak[k + 1:half - 1] = (ac[k + 1:half - 1] >= ac[k:half - 2]) & (ac[k + 1:half - 1] > ac[k + 2:half])
    peaks = np.flatnonzero(is_peak)
    floor = 3.0 / math.sqrt(n)
    if not len(peaks) or ac[peaks].max() < floor:
        return None
    best = int(peaks[np.argmax(ac[peaks])])
    for m in range(best // max(k, 1), 1, -1):
        # candidates near best/m, smallest lag first
        lo, hi = int(math.floor(best / m * 0.95)), int(math.ceil(best / m * 1.05))
        near = peaks[(peaks >= lo) & (peaks <= hi)]
        if len(near):
            j = int(near[np.argmax(ac[near])])
            if ac[j] >= harmonic_ratio * ac[best] and ac[j] >= floor:
                best = j
                break
    # a real period repeats: demand a significant echo near twice the lag
    lo, hi = int(math.floor(2 * best * 0.95)), int(math.ceil(2 * best * 1.05)) + 1
    if hi <= half and ac[lo:hi].max() < floor:
        return None
    return best


# -- self-synchronization ------------------------------------------------------

@dataclass(frozen=True)
class SyncConfig:
    threshold: int = DEFAULT_THRESHOLD
    bin: int | None = None                 # default: per-cycle period / 20
    period_tolerance: float = 0.10
    correlation_threshold: float = 0.5
    confidence_threshold: float = 0.5
    min_periods: int = 10
    min_occupancy_ratio: float = 0.1


@dataclass(frozen=True)
class SyncReport:
    period: int
    phases: dict = field(default_factory=dict)
    confidence: float = 0.0
    excluded_ranks: tuple = ()
    analyzed_ranks: tuple = ()
    bin: int = 1
    synchronized: bool = False
    low_confidence: bool = True

    def to_json(self) -> str:
        return json.dumps({"type": "sync_report", "period": self.period,
                           "phases": {str(r): p for r, p in sorted(self.phases.items())},
                           "confidence": self.confidence,
                           "excluded_ranks": list(self.excluded_ranks),
                           "analyzed_ranks": list(self.analyzed_ranks),
                           "bin": self.bin, "synchronized": self.synchronized,
                           "low_confidence": self.low_confidence}, separators=(",", ":"))


def default_sync_bin(trace: Trace) -> int:
    return max(1, int(round(cycle_period_estimate(trace) / 20)))


def detect_self_sync(trace: Trace, cfg: SyncConfig | None = None) -> SyncReport:
    cfg = cfg or SyncConfig()
    R = trace.header.ranks
    if len(trace) == 0:
        raise InsufficientDataError("empty trace")
    bin_ = cfg.bin or default_sync_bin(trace)
    origin = int(trace.start.min())
    occ = binarize(trace, cfg.threshold, bin_, origin=origin)
    m = occ.matrix
    load = m.sum(axis=1)

    has_long = load > 0
    excluded = set(np.flatnonzero(~has_long).tolist())
    if has_long.any():
        # a rank whose long idles are a small fraction of the typical rank's
        # behaves like the slow band: no pattern of its own worth phasing
        med = float(np.median(load[has_long]))
        excluded |= set(np.flatnonzero(has_long & (load < cfg.min_occupancy_ratio * med)).tolist())
    analyzed = [r for r in range(R) if r not in excluded]
    if len(analyzed) < 3:
        raise InsufficientDataError(
            f"only {len(analyzed)} rank(s) show long idles at threshold {cfg.threshold}; need 3")

    periods = {r: estimate_period(m[r]) for r in analyzed}
    found = {r: p for r, p in periods.items() if p is not None}
    if len(found) < 3:
        return SyncReport(0, {}, 0.0, tuple(sorted(excluded | set(analyzed) - set(found))),
                          tuple(analyzed), bin_, False, True)
    P = int(round(float(np.median(list(found.values())))))
    tol = cfg.period_tolerance * P
    included = [r for r in analyzed if r in found and abs(found[r] - P) <= tol]
    excluded |= set(analyzed) - set(included)

    span = int(trace.end.max()) - origin
    low = span < cfg.min_periods * P * bin_
    if not included:
        return SyncReport(P * bin_, {}, 0.0, tuple(sorted(excluded)), tuple(analyzed), bin_, False, True)

    ref = included[0]
    phases = {ref: 0}
    good = 0
    for r in included[1:]:
        shift, peak = xcorr_peak(m[ref], m[r], P)
        phases[r] = shift * bin_
        if peak >= cfg.correlation_threshold:
            good += 1
    pairs = len(analyzed) - 1
    confidence = good / pairs if pairs else 0.0
    return SyncReport(P * bin_, phases, confidence, tuple(sorted(excluded)), tuple(analyzed), bin_,
                      confidence >= cfg.confidence_threshold and not low, low)


def dumps_results(items) -> str:
    return "".join(item.to_json() + "\n" for item in items)
