"""Delay sources: per-rank speed factors, multiplicative compute jitter,
periodic OS-noise blackouts and scripted one-off delays.

Random streams
--------------
Every rank owns independent streams derived from the master seed with
``numpy.random.SeedSequence(seed, spawn_key=(rank, purpose))``.  Purpose 0 is
compute jitter, purpose ``1 + i`` is the i-th OS-noise class.  A stream depends
only on (seed, rank, purpose), so adding ranks or changing another rank's
parameters never perturbs an existing rank's draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

JITTER_STREAM = 0


def rank_stream(seed: int, rank: int, purpose: int = JITTER_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(rank, purpose))))


@dataclass(frozen=True)
class NoiseClass:
    """Periodic OS interference: a blackout of ``duration`` every ``period`` cycles.

    ``affected_ranks`` of ``None`` means every rank.
    """

    period: int
    duration: int
    jitter_fraction: float = 0.0
    affected_ranks: frozenset[int] | None = None
    name: str = "os"

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigError(f"os_noise.{self.name}.period", "must be > 0")
        if self.duration < 0:
            raise ConfigError(f"os_noise.{self.name}.duration", "must be >= 0")
        if not 0.0 <= self.jitter_fraction <= 1.0:
            raise ConfigError(f"os_noise.{self.name}.jitter_fraction", "must be in [0, 1]")

    def affects(self, rank: int) -> bool:
        return self.affected_ranks is None or rank in self.affected_ranks


@dataclass(frozen=True)
class InjectedDelay:
    rank: int
    cycle: int
    duration: int


@dataclass(frozen=True)
class NoiseConfig:
    speed_factor: float = 1.0
    speed_overrides: tuple[tuple[int, float], ...] = ()
    jitter_sigma: float = 0.0
    os_noise: tuple[NoiseClass, ...] = ()
    injected_delays: tuple[InjectedDelay, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "speed_overrides", tuple(sorted(dict(self.speed_overrides).items())))
        if not self.speed_factor >= 0.01:
            raise ConfigError("noise.speed_factor", "must be >= 0.01")
        for rank, factor in self.speed_overrides:
            if not factor >= 0.01:
                raise ConfigError("noise.speed_factors", f"factor for rank {rank} must be >= 0.01")
        if not self.jitter_sigma >= 0.0:
            raise ConfigError("noise.jitter_sigma", "must be >= 0")
        for d in self.injected_delays:
            if d.duration < 0:
                raise ConfigError("noise.injected_delays", f"negative duration for rank {d.rank}")

    def factor(self, rank: int) -> float:
        return dict(self.speed_overrides).get(rank, self.speed_factor)

    def factors(self, ranks: int) -> np.ndarray:
        out = np.full(ranks, self.speed_factor, dtype=np.float64)
        for r, f in self.speed_overrides:
            if r < ranks:
                out[r] = f
        return out


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


def compute_cost(rank: int, cycle: int, base_cost: int, noise_cfg: NoiseConfig,
                 rng_stream: np.random.Generator) -> int:
    """Cycles rank ``rank`` needs for one compute phase.

    Draws exactly one standard normal from ``rng_stream`` per call regardless
    of ``jitter_sigma`` so that the stream stays aligned with the cycle index.
    The jitter multiplier ``exp(sigma * z)`` is log-normal with median 1.
    """
    if base_cost <= 0:
        raise ValueError("base_cost must be > 0")
    z = rng_stream.standard_normal()
    return int(_round_half_up(base_cost * noise_cfg.factor(rank) * math.exp(noise_cfg.jitter_sigma * z)))


def compute_costs(ranks: int, cycles: int, base_cost: int, noise_cfg: NoiseConfig, seed: int) -> np.ndarray:
    """Vectorised ``compute_cost`` for every (rank, cycle); shape (ranks, cycles)."""
    if base_cost <= 0:
        raise ValueError("base_cost must be > 0")
    z = np.empty((ranks, cycles), dtype=np.float64)
    for r in range(ranks):
        z[r] = rank_stream(seed, r).standard_normal(cycles)
    scale = base_cost * noise_cfg.factors(ranks)[:, None]
    return _round_half_up(scale * np.exp(noise_cfg.jitter_sigma * z))


def injected_delay_matrix(ranks: int, cycles: int, noise_cfg: NoiseConfig) -> np.ndarray:
    out = np.zeros((ranks, cycles), dtype=np.int64)
    for d in noise_cfg.injected_delays:
        if not 0 <= d.rank < ranks:
            raise ConfigError("noise.injected_delays", f"rank {d.rank} out of range")
        if not 0 <= d.cycle < cycles:
            raise ConfigError("noise.injected_delays", f"cycle {d.cycle} out of range")
        out[d.rank, d.cycle] += d.duration
    return out


def _schedule_starts(horizon: int, noise_class: NoiseClass, rng_stream: np.random.Generator) -> np.ndarray:
    period, jf = noise_class.period, noise_class.jitter_fraction
    # k runs while the earliest possible start (k - jf) * period is below the horizon
    n = int(math.floor(horizon / period + jf))
    while (n - jf) * period < horizon:
        n += 1
    u = rng_stream.uniform(-1.0, 1.0, size=n)
    starts = _round_half_up(np.arange(n, dtype=np.float64) * period + u * (period * jf))
    starts = np.maximum(starts, 0)
    return np.sort(starts[starts < horizon], kind="stable")


def os_noise_schedule(rank: int, horizon: int, noise_class: NoiseClass,
                      rng_stream: np.random.Generator) -> list[tuple[int, int]]:
    """Blackouts ``(start, duration)`` with start in ``[0, horizon)``, sorted by start.

    Event k sits at ``k*period + u*period*jitter_fraction`` with u uniform in
    [-1, 1], clamped at 0.  One uniform is drawn per k, so a longer horizon
    only appends events.
    """
    if horizon <= 0 or not noise_class.affects(rank):
        return []
    return [(int(t), noise_class.duration) for t in _schedule_starts(horizon, noise_class, rng_stream)]


def merged_blackouts(rank: int, horizon: int, noise_cfg: NoiseConfig, seed: int) -> np.ndarray:
    """Union of every class's blackouts for ``rank``; shape (n, 2) of disjoint ``[start, end)``."""
    starts, ends = [], []
    for i, cls in enumerate(noise_cfg.os_noise):
        if cls.duration == 0 or horizon <= 0 or not cls.affects(rank):
            continue
        s = _schedule_starts(horizon, cls, rank_stream(seed, rank, 1 + i))
        starts.append(s)
        ends.append(s + cls.duration)
    if not starts:
        return np.zeros((0, 2), dtype=np.int64)
    s = np.concatenate(starts)
    e = np.concatenate(ends)
    order = np.lexsort((e, s))
    s, e = s[order], e[order]
    reach = np.maximum.accumulate(e)
    new_group = np.ones(len(s), dtype=bool)
    new_group[1:] = s[1:] > reach[:-1]
    group = np.cumsum(new_group) - 1
    out = np.empty((group[-1] + 1, 2), dtype=np.int64)
    out[:, 0] = s[new_group]
    out[:, 1] = np.maximum.reduceat(e, np.flatnonzero(new_group))
    return out


def extend_through_blackouts(start: int, work: int, blackouts, ptr: int) -> tuple[int, int, int]:
    """Advance ``work`` cycles of compute from ``start``, pausing inside blackouts.

    ``blackouts`` is a sorted list of disjoint ``(start, end)`` pairs and
    ``ptr`` the first index that may still matter.  Returns
    ``(end_time, cycles_lost_to_noise, new_ptr)``.
    """
    pos, lost = start, 0
    n = len(blackouts)
    while ptr < n and blackouts[ptr][1] <= pos:
        ptr += 1
    while work > 0:
        if ptr >= n:
            pos += work
            break
        b, e = blackouts[ptr]
        if b <= pos:
            lost += e - pos
            pos = e
            ptr += 1
        elif b - pos >= work:
            pos += work
            break
        else:
            work -= b - pos
            lost += e - b
            pos = e
            ptr += 1
    return pos, lost, ptr
