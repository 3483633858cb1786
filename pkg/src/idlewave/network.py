"""Point-to-point transfer costs over a three-tier locality hierarchy.

Ranks are placed contiguously: a socket holds ``cores_per_socket`` consecutive
ranks and a node holds ``sockets_per_node`` consecutive sockets.  Messages
between nodes additionally go through the sending node's NIC, a FIFO
resource that serves one message at a time.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import ConfigError


class Locality(enum.IntEnum):
    INTRA_SOCKET = 0
    INTER_SOCKET = 1
    INTER_NODE = 2


@dataclass(frozen=True)
class Location:
    node: int
    socket: int


@dataclass(frozen=True)
class Topology:
    ranks: int
    cores_per_socket: int = 16
    sockets_per_node: int = 2

    def __post_init__(self):
        if self.ranks < 2:
            raise ConfigError("topology.ranks", f"need at least 2 ranks, got {self.ranks}")
        if self.cores_per_socket < 1:
            raise ConfigError("topology.cores_per_socket", "must be >= 1")
        if self.sockets_per_node < 1:
            raise ConfigError("topology.sockets_per_node", "must be >= 1")

    @property
    def ranks_per_node(self) -> int:
        return self.cores_per_socket * self.sockets_per_node

    @property
    def nodes(self) -> int:
        return -(-self.ranks // self.ranks_per_node)


@dataclass(frozen=True)
class NetworkParams:
    """Costs in clock cycles.

    ``send_overhead`` is the CPU time a rank spends handing a message to the
    transport; the same overhead is charged on the receiving side before the
    payload is usable, so a message posted at ``t`` becomes available at
    ``t + 2*send_overhead + transfer_time`` (plus NIC queueing).
    """

    latency_intra_socket: int = 2_000
    latency_inter_socket: int = 4_000
    latency_inter_node: int = 20_000
    bandwidth_cost: int = 1
    send_overhead: int = 1_000
    nic_service: int = 2_000
    nic_contention: bool = True

    def __post_init__(self):
        for name in ("latency_intra_socket", "latency_inter_socket", "latency_inter_node"):
            if getattr(self, name) < 1:
                raise ConfigError(f"network.{name}", "latency must be >= 1 cycle")
        if not self.latency_intra_socket <= self.latency_inter_socket <= self.latency_inter_node:
            raise ConfigError(
                "network.latency_inter_socket",
                "latencies must satisfy intra_socket <= inter_socket <= inter_node",
            )
        for name in ("bandwidth_cost", "send_overhead", "nic_service"):
            if getattr(self, name) < 0:
                raise ConfigError(f"network.{name}", "must be >= 0")

    def latency(self, locality: Locality) -> int:
        return (self.latency_intra_socket, self.latency_inter_socket, self.latency_inter_node)[locality]


def locate(rank: int, topo: Topology) -> Location:
    if not 0 <= rank < topo.ranks:
        raise ValueError(f"rank {rank} out of range [0, {topo.ranks})")
    return Location(
        node=rank // topo.ranks_per_node,
        socket=(rank // topo.cores_per_socket) % topo.sockets_per_node,
    )


def locality(a: int, b: int, topo: Topology) -> Locality:
    la, lb = locate(a, topo), locate(b, topo)
    if la.node != lb.node:
        return Locality.INTER_NODE
    if la.socket != lb.socket:
        return Locality.INTER_SOCKET
    return Locality.INTRA_SOCKET


def transfer_time(size_bytes: int, cls: Locality, params: NetworkParams) -> int:
    if size_bytes < 0:
        raise ValueError("size_bytes must be >= 0")
    return params.latency(cls) + params.bandwidth_cost * size_bytes


@dataclass
class NicState:
    """Per-node NIC occupancy.

    Requests must be presented in non-decreasing request time (ties in rank
    order); the engine guarantees this because requests are events.
    """

    nodes: int
    busy_until: list[int] = field(default_factory=list)
    served: list[int] = field(default_factory=list)

    def __post_init__(self):
        if not self.busy_until:
            self.busy_until = [0] * self.nodes
        if not self.served:
            self.served = [0] * self.nodes


def nic_request(node: int, t_request: int, nic: NicState, params: NetworkParams) -> int:
    """Grant time for an inter-node message handed to ``node``'s NIC at ``t_request``."""
    grant = max(t_request, nic.busy_until[node])
    nic.busy_until[node] = grant + params.nic_service
    nic.served[node] += 1
    return grant
