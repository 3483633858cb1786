"""Deterministic virtual-time event loop.

Time is integer clock cycles.  Events are processed in (time, rank, kind,
sequence) order, where ``sequence`` is the insertion counter; this order is
total, so a run is a pure function of its config.

The loop exists twice: :class:`Engine` (pure Python, steppable) and
``idlewave._kernel.run_plan`` (Cython).  Both consume the same :class:`Plan`
and emit identical records.  :func:`simulate` uses the compiled kernel when it
imports and falls back to :class:`Engine` otherwise.
"""
from __future__ import annotations

import enum
import heapq
import logging
from dataclasses import dataclass

import numpy as np

from . import noise as noise_mod
from .app import LEFT, RIGHT, SIDES, neighbors, records_per_cycle
from .config import SimConfig
from .errors import ProtocolError, SimulationError
from .network import Locality, NetworkParams, NicState, locality, nic_request, transfer_time
from .trace import Trace, TraceHeader

log = logging.getLogger(__name__)

try:
    from ._kernel import run_plan as _run_plan_compiled
except ImportError:  # pragma: no cover - exercised when the extension is not built
    _run_plan_compiled = None

HAVE_KERNEL = _run_plan_compiled is not None


class Kind(enum.IntEnum):
    COMPUTE_DONE = 0
    NIC_REQUEST = 1
    NIC_GRANTED = 2
    MESSAGE_ARRIVE = 3


class Phase(enum.IntEnum):
    COMPUTING = 0
    WAITING = 1
    DONE = 2


class Status(enum.Enum):
    RUNNING = "running"
    FINISHED = "finished"


@dataclass(frozen=True, order=True)
class Event:
    time: int
    rank: int
    kind: Kind
    seq: int = 0
    tag: int = 0
    dest: int = -1
    side: int = -1
    src: int = -1


@dataclass
class Plan:
    """Flat, precomputed inputs shared by both loop implementations."""

    ranks: int
    cycles: int
    nbr: np.ndarray          # (R, 2) int64, -1 where absent
    xfer: np.ndarray         # (R, 2) int64 transfer time for a send to that side
    internode: np.ndarray    # (R, 2) uint8
    node: np.ndarray         # (R,) int64
    nodes: int
    send_overhead: int
    nic_service: int
    nic_contention: bool
    work: np.ndarray         # (R, K) int64 compute cost
    delay: np.ndarray        # (R, K) int64 injected delay
    bo_start: np.ndarray     # flat blackout starts
    bo_end: np.ndarray
    bo_off: np.ndarray       # (R+1,) offsets into bo_*
    has_noise: np.ndarray    # (R,) uint8
    horizon: int
    expected_records: int


def _horizon_guess(work, delay, net: NetworkParams, max_xfer):
    per_cycle_slack = 3 * net.send_overhead + max_xfer + 2 * net.nic_service
    return int(2 * (work.max(axis=0).sum() + delay.sum() + work.shape[1] * per_cycle_slack)) + 1


def build_plan(cfg: SimConfig, horizon: int | None = None) -> Plan:
    R, K = cfg.ranks, cfg.cycles
    topo, net = cfg.topology, cfg.network
    nbr = np.full((R, 2), -1, dtype=np.int64)
    xfer = np.zeros((R, 2), dtype=np.int64)
    internode = np.zeros((R, 2), dtype=np.uint8)
    for r in range(R):
        for side, peer in enumerate(neighbors(r, R, cfg.app.boundary)):
            if peer is None:
                continue
            cls = locality(r, peer, topo)
            nbr[r, side] = peer
            xfer[r, side] = transfer_time(cfg.app.message_bytes, cls, net)
            internode[r, side] = cls is Locality.INTER_NODE
    node = np.arange(R, dtype=np.int64) // topo.ranks_per_node

    work = noise_mod.compute_costs(R, K, cfg.app.base_cost, cfg.noise, cfg.seed)
    delay = noise_mod.injected_delay_matrix(R, K, cfg.noise)

    has_noise = np.array([any(c.duration > 0 and c.affects(r) for c in cfg.noise.os_noise) for r in range(R)],
                         dtype=np.uint8)
    if horizon is None:
        horizon = _horizon_guess(work, delay, net, int(xfer.max()))
    starts, ends, off = [], [], [0]
    for r in range(R):
        bo = noise_mod.merged_blackouts(r, horizon, cfg.noise, cfg.seed) if has_noise[r] else np.zeros((0, 2), np.int64)
        starts.append(bo[:, 0])
        ends.append(bo[:, 1])
        off.append(off[-1] + len(bo))

    return Plan(
        ranks=R, cycles=K, nbr=nbr, xfer=xfer, internode=internode, node=node, nodes=topo.nodes,
        send_overhead=net.send_overhead, nic_service=net.nic_service, nic_contention=net.nic_contention,
        work=work, delay=delay,
        bo_start=np.concatenate(starts).astype(np.int64), bo_end=np.concatenate(ends).astype(np.int64),
        bo_off=np.array(off, dtype=np.int64), has_noise=has_noise, horizon=horizon,
        expected_records=K * records_per_cycle(R, cfg.app.boundary),
    )


@dataclass
class RunResult:
    """Raw loop output, records in emission order."""

    rank: np.ndarray
    cycle: np.ndarray
    peer: np.ndarray
    direction: np.ndarray
    start: np.ndarray
    end: np.ndarray
    compute: np.ndarray
    noise: np.ndarray
    send: np.ndarray
    idle: np.ndarray
    completion: np.ndarray
    final_time: int
    events: int
    nic_served: np.ndarray
    horizon_exceeded: bool


class Engine:
    """Steppable pure-Python event loop.

    >>> eng = Engine(build_plan(cfg))
    >>> eng.start()
    >>> while eng.step() is Status.RUNNING: ...
    """

    def __init__(self, plan: Plan):
        self.plan = plan
        R = plan.ranks
        self.now = 0
        self.queue: list[tuple] = []
        self._seq = 0
        self.cycle = [0] * R
        self.phase = [Phase.COMPUTING] * R
        self.wait_entry = [-1] * R
        # arrivals[r][side][tag & 1] = (tag, time)
        self.arrivals = [[[None, None], [None, None]] for _ in range(R)]
        self.nic = NicState(plan.nodes)
        self._net = NetworkParams(nic_service=plan.nic_service)
        self._bo = [list(zip(plan.bo_start[plan.bo_off[r]:plan.bo_off[r + 1]].tolist(),
                             plan.bo_end[plan.bo_off[r]:plan.bo_off[r + 1]].tolist())) for r in range(R)]
        self._bo_ptr = [0] * R
        self.records: list[tuple[int, int, int, int, int, int]] = []
        self.compute = [0] * R
        self.noise = [0] * R
        self.send = [0] * R
        self.idle = [0] * R
        self.completion = [-1] * R
        self.finished = 0
        self.events = 0
        self.horizon_exceeded = False
        self._nbr = plan.nbr.tolist()
        self._xfer = plan.xfer.tolist()
        self._internode = plan.internode.tolist()
        self._node = plan.node.tolist()

    # -- queue ----------------------------------------------------------------

    def schedule(self, time, rank, kind, tag=0, dest=-1, side=-1, src=-1):
        if time < self.now:
            raise SimulationError(f"event at t={time} scheduled in the past (now={self.now})")
        heapq.heappush(self.queue, (time, rank, int(kind), self._seq, tag, dest, side, src))
        self._seq += 1

    def peek(self) -> Event | None:
        if not self.queue:
            return None
        t, r, k, seq, tag, dest, side, src = self.queue[0]
        return Event(t, r, Kind(k), seq, tag, dest, side, src)

    def start(self):
        for r in range(self.plan.ranks):
            self._start_compute(r, 0)

    # -- transitions ------------------------------------------------------------

    def _start_compute(self, r, t):
        p = self.plan
        k = self.cycle[r]
        cost = int(p.work[r, k])
        extra = int(p.delay[r, k])
        end, lost, self._bo_ptr[r] = noise_mod.extend_through_blackouts(t, cost + extra, self._bo[r], self._bo_ptr[r])
        self.compute[r] += cost
        self.noise[r] += extra + lost
        if p.has_noise[r] and end > p.horizon:
            self.horizon_exceeded = True
        self.phase[r] = Phase.COMPUTING
        self.schedule(end, r, Kind.COMPUTE_DONE, tag=k)

    def _compute_done(self, t, r, k):
        if self.phase[r] is not Phase.COMPUTING or k != self.cycle[r]:
            raise SimulationError(f"stale ComputeDone for rank {r} cycle {k} (rank at cycle {self.cycle[r]})")
        o = self.plan.send_overhead
        ts = t
        for side in (LEFT, RIGHT):
            peer = self._nbr[r][side]
            if peer < 0:
                continue
            ts += o
            self.send[r] += o
            dest_side = 1 - side
            if self._internode[r][side] and self.plan.nic_contention:
                self.schedule(ts, r, Kind.NIC_REQUEST, k, peer, dest_side, r)
            else:
                self.schedule(ts + self._xfer[r][side] + o, peer, Kind.MESSAGE_ARRIVE, k, peer, dest_side, r)
        self.wait_entry[r] = ts
        self.phase[r] = Phase.WAITING
        self._try_complete(r)

    def _nic_request(self, t, r, tag, dest, side):
        grant = nic_request(self._node[r], t, self.nic, self._net)
        self.schedule(grant, r, Kind.NIC_GRANTED, tag, dest, side, r)

    def _nic_granted(self, t, r, tag, dest, side):
        o = self.plan.send_overhead
        self.schedule(t + self._xfer[r][1 - side] + o, dest, Kind.MESSAGE_ARRIVE, tag, dest, side, r)

    def _message_arrive(self, t, dest, tag, side):
        c = self.cycle[dest]
        if tag != c and tag != c + 1:
            raise ProtocolError(f"rank {dest} at cycle {c} received tag {tag} on its {SIDES[side]} side")
        slot = self.arrivals[dest][side]
        if slot[tag & 1] is not None:
            raise ProtocolError(f"duplicate message tag {tag} for rank {dest} {SIDES[side]}")
        slot[tag & 1] = (tag, t)
        if tag == c and self.phase[dest] is Phase.WAITING:
            self._try_complete(dest)

    def _try_complete(self, r):
        k = self.cycle[r]
        par = k & 1
        arr = self.arrivals[r]
        nbr = self._nbr[r]
        for side in (LEFT, RIGHT):
            if nbr[side] >= 0 and arr[side][par] is None:
                return
        entry = self.wait_entry[r]
        for side in (LEFT, RIGHT):
            if nbr[side] < 0:
                continue
            tag, a = arr[side][par]
            if tag != k:
                raise ProtocolError(f"rank {r} matched tag {tag} while in cycle {k}")
            end = entry if entry >= a else a
            self.records.append((r, k, nbr[side], side, entry, end))
            self.idle[r] += end - entry
            entry = end
            arr[side][par] = None
        self.wait_entry[r] = -1
        self.cycle[r] = k + 1
        if k + 1 == self.plan.cycles:
            self.phase[r] = Phase.DONE
            self.completion[r] = entry
            self.finished += 1
        else:
            self._start_compute(r, entry)

    def step(self) -> Status:
        if not self.queue:
            raise SimulationError("step() on an empty event queue")
        t, r, kind, _seq, tag, dest, side, src = heapq.heappop(self.queue)
        if not 0 <= r < self.plan.ranks:
            raise SimulationError(f"event references unknown rank {r}")
        self.now = t
        self.events += 1
        if kind == Kind.COMPUTE_DONE:
            self._compute_done(t, r, tag)
        elif kind == Kind.MESSAGE_ARRIVE:
            self._message_arrive(t, r, tag, side)
        elif kind == Kind.NIC_REQUEST:
            self._nic_request(t, r, tag, dest, side)
        elif kind == Kind.NIC_GRANTED:
            self._nic_granted(t, r, tag, dest, side)
        else:
            raise SimulationError(f"unknown event kind {kind}")
        return Status.RUNNING if self.queue else Status.FINISHED

    def run(self) -> RunResult:
        self.start()
        while self.queue and not self.horizon_exceeded:
            self.step()
        return self.result()

    def result(self) -> RunResult:
        recs = np.array(self.records, dtype=np.int64).reshape(-1, 6)
        done = [c for c in self.completion if c >= 0]
        final = max([self.now] + done)
        self.now = final
        return RunResult(
            rank=recs[:, 0], cycle=recs[:, 1], peer=recs[:, 2], direction=recs[:, 3],
            start=recs[:, 4], end=recs[:, 5],
            compute=np.array(self.compute, np.int64), noise=np.array(self.noise, np.int64),
            send=np.array(self.send, np.int64), idle=np.array(self.idle, np.int64),
            completion=np.array(self.completion, np.int64), final_time=final, events=self.events,
            nic_served=np.array(self.nic.served, np.int64), horizon_exceeded=self.horizon_exceeded,
        )


def _run_python(plan: Plan) -> RunResult:
    return Engine(plan).run()


def run_plan(plan: Plan, backend: str = "auto") -> RunResult:
    if backend == "auto":
        backend = "cython" if HAVE_KERNEL else "python"
    if backend == "python":
        return _run_python(plan)
    if backend == "cython":
        if not HAVE_KERNEL:
            raise RuntimeError("compiled kernel not available; build with `python setup.py build_ext --inplace`")
        try:
            return RunResult(**_run_plan_compiled(plan))
        except RuntimeError as exc:
            raise SimulationError(str(exc)) from exc
    raise ValueError(f"unknown backend {backend!r}")


@dataclass
class SimRun:
    trace: Trace
    result: RunResult
    plan: Plan
    backend: str


def run(cfg: SimConfig, backend: str = "auto") -> SimRun:
    """Simulate ``cfg`` and keep the per-rank accounting alongside the trace."""
    if backend == "auto":
        backend = "cython" if HAVE_KERNEL else "python"
    plan = build_plan(cfg)
    res = run_plan(plan, backend)
    while res.horizon_exceeded:
        log.debug("noise horizon %d exceeded; doubling", plan.horizon)
        plan = build_plan(cfg, horizon=2 * plan.horizon)
        res = run_plan(plan, backend)
    if int((res.completion >= 0).sum()) != cfg.ranks:
        raise SimulationError("event queue drained before every rank finished (deadlock)")
    if len(res.rank) != plan.expected_records:
        raise SimulationError(f"emitted {len(res.rank)} records, expected {plan.expected_records}")
    header = TraceHeader(ranks=cfg.ranks, cycles=cfg.cycles, clock_hz=cfg.clock_hz,
                         config_fingerprint=cfg.fingerprint(), source="simulated")
    trace = Trace(header, res.rank, res.cycle, res.peer, res.direction, res.start, res.end)
    return SimRun(trace=trace, result=res, plan=plan, backend=backend)


def simulate(cfg: SimConfig, backend: str = "auto") -> Trace:
    return run(cfg, backend).trace
