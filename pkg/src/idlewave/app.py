"""One-dimensional halo-exchange application model.

Each cycle a rank posts its receives, computes, sends its boundary values
left then right, and waits for the left then the right message.  The wait is
the only idle source: a blocking receive is treated as post + wait and only
the wait is measured.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ConfigError

LEFT, RIGHT = 0, 1
SIDES = ("left", "right")


class Boundary(str, enum.Enum):
    NON_PERIODIC = "non-periodic"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class AppConfig:
    grid_points_per_rank: int = 1_000_000
    cost_per_point: int = 50
    cycles: int = 100
    boundary: Boundary = Boundary.NON_PERIODIC
    message_bytes: int = 8
    overlap: bool = False

    def __post_init__(self):
        if self.grid_points_per_rank < 1:
            raise ConfigError("app.grid_points_per_rank", "must be >= 1")
        if self.cost_per_point < 1:
            raise ConfigError("app.cost_per_point", "must be >= 1")
        if self.cycles < 1:
            raise ConfigError("app.cycles", "must be >= 1")
        if self.message_bytes < 0:
            raise ConfigError("app.message_bytes", "must be >= 0")
        if self.overlap:
            raise ConfigError("app.overlap", "compute/communication overlap is not implemented")

    @property
    def base_cost(self) -> int:
        return self.grid_points_per_rank * self.cost_per_point


def neighbors(rank: int, ranks: int, boundary: Boundary) -> tuple[int | None, int | None]:
    """``(left, right)`` neighbor ranks; ``None`` at a non-periodic edge."""
    if boundary is Boundary.PERIODIC:
        return (rank - 1) % ranks, (rank + 1) % ranks
    return (rank - 1 if rank > 0 else None), (rank + 1 if rank < ranks - 1 else None)


def records_per_cycle(ranks: int, boundary: Boundary) -> int:
    return 2 * ranks if boundary is Boundary.PERIODIC else 2 * ranks - 2


@dataclass(frozen=True)
class Action:
    op: str  # post_recv | compute | send | wait
    side: str | None = None
    peer: int | None = None
    tag: int | None = None


def cycle_protocol(rank: int, cycle: int, ranks: int, boundary: Boundary, total_cycles: int) -> list[Action]:
    """Ordered actions rank ``rank`` performs during ``cycle``."""
    if not 0 <= cycle < total_cycles:
        raise ValueError(f"rank {rank} has no cycle {cycle} (total {total_cycles})")
    peers = list(zip(SIDES, neighbors(rank, ranks, boundary)))
    present = [(side, peer) for side, peer in peers if peer is not None]
    actions = [Action("post_recv", side, peer, cycle) for side, peer in present]
    actions.append(Action("compute", tag=cycle))
    actions += [Action("send", side, peer, cycle) for side, peer in present]
    actions += [Action("wait", side, peer, cycle) for side, peer in present]
    return actions


def idle_of_wait(entry: int, arrival: int) -> int:
    return max(0, arrival - entry)


def wait_exit(entry: int, arrival: int) -> int:
    return max(entry, arrival)
