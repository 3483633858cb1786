"""Hand-built traces with known structure."""
import numpy as np

from idlewave.trace import Trace, TraceHeader


def staircase(ranks=128, t0=1_000_000_000, step=2_000_000_000 / 128, duration=2_000_000,
              clock_hz=2.1e9, first_rank=0):
    """One long idle per rank with onset t0 + (r - first_rank) * step."""
    rs = np.arange(first_rank, ranks)
    starts = np.rint(t0 + (rs - first_rank) * step).astype(np.int64)
    header = TraceHeader(ranks=ranks, cycles=1, clock_hz=clock_hz, source="constructed")
    peer = np.maximum(rs - 1, 0)
    peer[rs == 0] = 1
    return Trace(header, rs, np.zeros_like(rs), peer, np.zeros_like(rs), starts, starts + duration)


def periodic_pattern(ranks=32, period=10_000_000, block=3_000_000, delta=1_500_000, periods=40,
                     clock_hz=2.1e9):
    """Rank r repeats one idle block of ``block`` cycles every ``period``
    cycles, offset by r*delta, over the window [0, periods*period).

    Blocks are clipped to the window so every rank's series is exactly
    periodic; two sub-threshold marker records pin the time span.
    """
    T = periods * period
    rank, start, end = [], [], []
    for r in range(ranks):
        off = (r * delta) % period
        for k in range(-1, periods + 1):
            s, e = off + k * period, off + k * period + block
            s, e = max(s, 0), min(e, T)
            if e - s > 0:
                rank.append(r)
                start.append(s)
                end.append(e)
    rank += [0, 0]
    start += [0, T]
    end += [0, T]
    rank = np.array(rank)
    header = TraceHeader(ranks=ranks, cycles=periods, clock_hz=clock_hz, source="constructed")
    n = len(rank)
    peer = np.where(rank == 0, 1, rank - 1)
    cycle = np.minimum(np.array(start) // period, periods - 1)
    return Trace(header, rank, cycle, peer, np.zeros(n, dtype=np.int64), start, end)


def random_onsets(seed, ranks=32, count=40, span=400_000_000, duration=3_000_000, clock_hz=2.1e9):
    """Independent uniformly random idle onsets per rank."""
    g = np.random.default_rng(seed)
    rank = np.repeat(np.arange(ranks), count)
    start = g.integers(0, span - duration, size=ranks * count)
    header = TraceHeader(ranks=ranks, cycles=count, clock_hz=clock_hz, source="constructed")
    peer = np.where(rank == 0, 1, rank - 1)
    cycle = np.tile(np.arange(count), ranks)
    return Trace(header, rank, cycle, peer, np.zeros_like(rank), start, start + duration)
