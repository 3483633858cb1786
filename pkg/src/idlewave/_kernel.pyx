# cython: language_level=3
"""Compiled event loop; a line-for-line port of ``idlewave.engine.Engine``.

Any behavioural change here must be mirrored in engine.py: the test suite
asserts byte-identical traces from both.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, realloc, free
from libc.stdint cimport int64_t, int32_t, uint8_t

cnp.import_array()

cdef enum:
    COMPUTE_DONE = 0
    NIC_REQUEST = 1
    NIC_GRANTED = 2
    MESSAGE_ARRIVE = 3


cdef struct Ev:
    int64_t time
    int64_t seq
    int32_t rank
    int32_t kind
    int32_t tag
    int32_t dest
    int32_t side
    int32_t src


cdef inline bint ev_less(Ev* a, Ev* b) nogil:
    if a.time != b.time:
        return a.time < b.time
    if a.rank != b.rank:
        return a.rank < b.rank
    if a.kind != b.kind:
        return a.kind < b.kind
    return a.seq < b.seq


cdef class _Heap:
    cdef Ev* data
    cdef Py_ssize_t size, cap
    cdef int64_t seq

    def __cinit__(self, Py_ssize_t cap):
        self.cap = cap if cap > 16 else 16
        self.size = 0
        self.seq = 0
        self.data = <Ev*> malloc(self.cap * sizeof(Ev))
        if self.data == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self.data)

    cdef int push(self, int64_t time, int32_t rank, int32_t kind, int32_t tag,
                  int32_t dest, int32_t side, int32_t src) except -1:
        cdef Ev* grown
        cdef Ev e
        cdef Py_ssize_t i, parent
        if self.size == self.cap:
            grown = <Ev*> realloc(self.data, 2 * self.cap * sizeof(Ev))
            if grown == NULL:
                raise MemoryError()
            self.data = grown
            self.cap *= 2
        e.time = time
        e.seq = self.seq
        e.rank = rank
        e.kind = kind
        e.tag = tag
        e.dest = dest
        e.side = side
        e.src = src
        self.seq += 1
        i = self.size
        self.size += 1
        while i > 0:
            parent = (i - 1) >> 1
            if ev_less(&e, &self.data[parent]):
                self.data[i] = self.data[parent]
                i = parent
            else:
                break
        self.data[i] = e
        return 0

    cdef Ev pop(self):
        cdef Ev top = self.data[0]
        cdef Ev last
        cdef Py_ssize_t i = 0, child, n
        self.size -= 1
        n = self.size
        if n > 0:
            last = self.data[n]
            while True:
                child = 2 * i + 1
                if child >= n:
                    break
                if child + 1 < n and ev_less(&self.data[child + 1], &self.data[child]):
                    child += 1
                if ev_less(&self.data[child], &last):
                    self.data[i] = self.data[child]
                    i = child
                else:
                    break
            self.data[i] = last
        return top


cdef class _Loop:
    cdef int R, K
    cdef int64_t o, nic_service, horizon
    cdef bint nic_contention
    cdef int64_t[:, ::1] nbr, xfer, work, delay
    cdef uint8_t[:, ::1] internode
    cdef int64_t[::1] node, bo_start, bo_end, bo_off
    cdef uint8_t[::1] has_noise
    cdef _Heap heap
    cdef int64_t now
    cdef int64_t[::1] cycle, phase, wait_entry, bo_ptr
    cdef int64_t[:, :, ::1] arr_tag, arr_time
    cdef int64_t[::1] nic_busy, nic_served
    cdef int64_t[::1] compute, noise, send, idle, completion
    cdef int64_t[:, ::1] recs
    cdef Py_ssize_t nrec
    cdef int64_t finished, events
    cdef bint exceeded

    def __init__(self, plan):
        self.R = plan.ranks
        self.K = plan.cycles
        self.o = plan.send_overhead
        self.nic_service = plan.nic_service
        self.nic_contention = plan.nic_contention
        self.horizon = plan.horizon
        self.nbr = np.ascontiguousarray(plan.nbr, dtype=np.int64)
        self.xfer = np.ascontiguousarray(plan.xfer, dtype=np.int64)
        self.work = np.ascontiguousarray(plan.work, dtype=np.int64)
        self.delay = np.ascontiguousarray(plan.delay, dtype=np.int64)
        self.internode = np.ascontiguousarray(plan.internode, dtype=np.uint8)
        self.node = np.ascontiguousarray(plan.node, dtype=np.int64)
        self.bo_start = np.ascontiguousarray(plan.bo_start, dtype=np.int64)
        self.bo_end = np.ascontiguousarray(plan.bo_end, dtype=np.int64)
        self.bo_off = np.ascontiguousarray(plan.bo_off, dtype=np.int64)
        self.has_noise = np.ascontiguousarray(plan.has_noise, dtype=np.uint8)
        self.heap = _Heap(8 * self.R + 16)
        self.now = 0
        self.cycle = np.zeros(self.R, dtype=np.int64)
        self.phase = np.zeros(self.R, dtype=np.int64)
        self.wait_entry = np.full(self.R, -1, dtype=np.int64)
        self.bo_ptr = np.array(plan.bo_off[:-1], dtype=np.int64)
        self.arr_tag = np.full((self.R, 2, 2), -1, dtype=np.int64)
        self.arr_time = np.zeros((self.R, 2, 2), dtype=np.int64)
        self.nic_busy = np.zeros(plan.nodes, dtype=np.int64)
        self.nic_served = np.zeros(plan.nodes, dtype=np.int64)
        self.compute = np.zeros(self.R, dtype=np.int64)
        self.noise = np.zeros(self.R, dtype=np.int64)
        self.send = np.zeros(self.R, dtype=np.int64)
        self.idle = np.zeros(self.R, dtype=np.int64)
        self.completion = np.full(self.R, -1, dtype=np.int64)
        self.recs = np.zeros((plan.expected_records, 6), dtype=np.int64)
        self.nrec = 0
        self.finished = 0
        self.events = 0
        self.exceeded = False

    cdef int start_compute(self, int r, int64_t t) except -1:
        cdef int k = <int> self.cycle[r]
        cdef int64_t cost = self.work[r, k]
        cdef int64_t extra = self.delay[r, k]
        cdef int64_t pos = t, rem = cost + extra, lost = 0, b, e
        cdef int64_t ptr = self.bo_ptr[r], stop = self.bo_off[r + 1]
        while ptr < stop and self.bo_end[ptr] <= pos:
            ptr += 1
        while rem > 0:
            if ptr >= stop:
                pos += rem
                break
            b = self.bo_start[ptr]
            e = self.bo_end[ptr]
            if b <= pos:
                lost += e - pos
                pos = e
                ptr += 1
            elif b - pos >= rem:
                pos += rem
                break
            else:
                rem -= b - pos
                lost += e - b
                pos = e
                ptr += 1
        self.bo_ptr[r] = ptr
        self.compute[r] += cost
        self.noise[r] += extra + lost
        if self.has_noise[r] and pos > self.horizon:
            self.exceeded = True
        self.phase[r] = 0
        self.heap.push(pos, r, COMPUTE_DONE, k, -1, -1, -1)
        return 0

    cdef int try_complete(self, int r) except -1:
        cdef int k = <int> self.cycle[r]
        cdef int par = k & 1
        cdef int side
        cdef int64_t entry, a, end
        for side in range(2):
            if self.nbr[r, side] >= 0 and self.arr_tag[r, side, par] < 0:
                return 0
        entry = self.wait_entry[r]
        for side in range(2):
            if self.nbr[r, side] < 0:
                continue
            if self.arr_tag[r, side, par] != k:
                raise RuntimeError(f"rank {r} matched tag {self.arr_tag[r, side, par]} while in cycle {k}")
            a = self.arr_time[r, side, par]
            end = entry if entry >= a else a
            if self.nrec >= self.recs.shape[0]:
                raise RuntimeError("record buffer overflow")
            self.recs[self.nrec, 0] = r
            self.recs[self.nrec, 1] = k
            self.recs[self.nrec, 2] = self.nbr[r, side]
            self.recs[self.nrec, 3] = side
            self.recs[self.nrec, 4] = entry
            self.recs[self.nrec, 5] = end
            self.nrec += 1
            self.idle[r] += end - entry
            entry = end
            self.arr_tag[r, side, par] = -1
        self.wait_entry[r] = -1
        self.cycle[r] = k + 1
        if k + 1 == self.K:
            self.phase[r] = 2
            self.completion[r] = entry
            self.finished += 1
        else:
            self.start_compute(r, entry)
        return 0

    cdef int compute_done(self, int64_t t, int r, int k) except -1:
        cdef int side, peer
        cdef int64_t ts = t
        if self.phase[r] != 0 or k != self.cycle[r]:
            raise RuntimeError(f"stale ComputeDone for rank {r} cycle {k}")
        for side in range(2):
            peer = <int> self.nbr[r, side]
            if peer < 0:
                continue
            ts += self.o
            self.send[r] += self.o
            if self.internode[r, side] and self.nic_contention:
                self.heap.push(ts, r, NIC_REQUEST, k, peer, 1 - side, r)
            else:
                self.heap.push(ts + self.xfer[r, side] + self.o, peer, MESSAGE_ARRIVE, k, peer, 1 - side, r)
        self.wait_entry[r] = ts
        self.phase[r] = 1
        self.try_complete(r)
        return 0

    cdef int message_arrive(self, int64_t t, int dest, int tag, int side) except -1:
        cdef int64_t c = self.cycle[dest]
        cdef int slot = tag & 1
        if tag != c and tag != c + 1:
            raise RuntimeError(f"rank {dest} at cycle {c} received tag {tag}")
        if self.arr_tag[dest, side, slot] >= 0:
            raise RuntimeError(f"duplicate message tag {tag} for rank {dest}")
        self.arr_tag[dest, side, slot] = tag
        self.arr_time[dest, side, slot] = t
        if tag == c and self.phase[dest] == 1:
            self.try_complete(dest)
        return 0

    cdef int loop(self) except -1:
        cdef Ev ev
        cdef int64_t nd, grant
        cdef int r
        for r in range(self.R):
            self.start_compute(r, 0)
        while self.heap.size > 0 and not self.exceeded:
            ev = self.heap.pop()
            if ev.rank < 0 or ev.rank >= self.R:
                raise RuntimeError(f"event references unknown rank {ev.rank}")
            self.now = ev.time
            self.events += 1
            if ev.kind == COMPUTE_DONE:
                self.compute_done(ev.time, ev.rank, ev.tag)
            elif ev.kind == MESSAGE_ARRIVE:
                self.message_arrive(ev.time, ev.rank, ev.tag, ev.side)
            elif ev.kind == NIC_REQUEST:
                nd = self.node[ev.rank]
                grant = ev.time if ev.time >= self.nic_busy[nd] else self.nic_busy[nd]
                self.nic_busy[nd] = grant + self.nic_service
                self.nic_served[nd] += 1
                self.heap.push(grant, ev.rank, NIC_GRANTED, ev.tag, ev.dest, ev.side, ev.src)
            elif ev.kind == NIC_GRANTED:
                self.heap.push(ev.time + self.xfer[ev.rank, 1 - ev.side] + self.o, ev.dest,
                               MESSAGE_ARRIVE, ev.tag, ev.dest, ev.side, ev.src)
            else:
                raise RuntimeError(f"unknown event kind {ev.kind}")
        return 0


def run_plan(plan):
    """Run the event loop over ``plan``; returns a dict of RunResult fields."""
    cdef _Loop lp = _Loop(plan)
    lp.loop()
    recs = np.asarray(lp.recs)[:lp.nrec]
    completion = np.asarray(lp.completion).copy()
    final = lp.now
    if completion.size and completion.max() > final:
        final = int(completion.max())
    return dict(
        rank=recs[:, 0].copy(), cycle=recs[:, 1].copy(), peer=recs[:, 2].copy(),
        direction=recs[:, 3].copy(), start=recs[:, 4].copy(), end=recs[:, 5].copy(),
        compute=np.asarray(lp.compute).copy(), noise=np.asarray(lp.noise).copy(),
        send=np.asarray(lp.send).copy(), idle=np.asarray(lp.idle).copy(),
        completion=completion, final_time=int(final), events=int(lp.events),
        nic_served=np.asarray(lp.nic_served).copy(), horizon_exceeded=bool(lp.exceeded),
    )
