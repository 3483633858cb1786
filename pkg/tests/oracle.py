"""Event-free reference model of the halo exchange.

Computes every wait interval cycle by cycle from a max-plus recurrence:

    S[r,0] = 0
    D[r,k] = S[r,k] + work[r,k] + delay[r,k]
    departure of the j-th send = D + j*o
    arrival = departure (or NIC grant) + transfer + o
    left wait  = [D + n_sends*o, max(entry, arrival from left))
    right wait = [left exit,     max(entry, arrival from right))
    S[r,k+1] = exit of the last wait

NIC queueing is solved by monotone fixpoint iteration instead of an event
queue: grants start at request times, and each round recomputes the whole
schedule and then the FIFO grants per node, until nothing changes.

Compute costs are re-drawn here from the documented stream rule rather than
taken from the package.  OS blackouts are not modelled.
"""
import math

import numpy as np


def draw_costs(R, K, base, factors, sigma, seed):
    out = np.zeros((R, K), dtype=np.int64)
    for r in range(R):
        g = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(r, 0))))
        for k in range(K):
            z = g.standard_normal()
            out[r, k] = math.floor(base * factors[r] * math.exp(sigma * z) + 0.5)
    return out


def layout(cfg):
    R = cfg.ranks
    topo, net = cfg.topology, cfg.network
    periodic = cfg.app.boundary.value == "periodic"
    per_node, per_sock = topo.ranks_per_node, topo.cores_per_socket
    nbr = {}
    xfer = {}
    inter = {}
    for r in range(R):
        for side, peer in ((0, r - 1), (1, r + 1)):
            if not periodic and not 0 <= peer < R:
                continue
            peer %= R
            nbr[r, side] = peer
            if r // per_node != peer // per_node:
                lat, inter[r, side] = net.latency_inter_node, True
            elif (r // per_sock) % topo.sockets_per_node != (peer // per_sock) % topo.sockets_per_node:
                lat, inter[r, side] = net.latency_inter_socket, False
            else:
                lat, inter[r, side] = net.latency_intra_socket, False
            xfer[r, side] = lat + net.bandwidth_cost * cfg.app.message_bytes
    return nbr, xfer, inter


def _schedule(cfg, work, delay, nbr, xfer, grants):
    R, K = work.shape
    o = cfg.network.send_overhead
    S = np.zeros(R, dtype=np.int64)
    records = []
    requests = []             # (time, rank, side, cycle, node)
    per_node = cfg.topology.ranks_per_node
    inter_flags = layout(cfg)[2]
    use_nic = cfg.network.nic_contention
    totals = {"compute": work.sum(axis=1), "noise": delay.sum(axis=1),
              "send": np.zeros(R, dtype=np.int64)}
    for k in range(K):
        D = S + work[:, k] + delay[:, k]
        arrive = {}
        entry = np.zeros(R, dtype=np.int64)
        for r in range(R):
            t = int(D[r])
            for side in (0, 1):
                if (r, side) not in nbr:
                    continue
                t += o
                totals["send"][r] += o
                dest, dside = nbr[r, side], 1 - side
                if use_nic and inter_flags[r, side]:
                    requests.append((t, r, side, k, r // per_node))
                    g = grants.get((r, side, k), t)
                else:
                    g = t
                arrive[dest, dside] = g + xfer[r, side] + o
            entry[r] = t
        for r in range(R):
            t = int(entry[r])
            for side in (0, 1):
                if (r, side) not in nbr:
                    continue
                end = max(t, arrive[r, side])
                records.append((r, k, nbr[r, side], side, t, end))
                t = end
            S[r] = t
    return records, requests, S, totals


def _grants(requests, service):
    out = {}
    busy = {}
    for t, r, side, k, node in sorted(requests):
        g = max(t, busy.get(node, 0))
        busy[node] = g + service
        out[r, side, k] = g
    return out


def solve(cfg):
    """Return (records sorted like a Trace, completion per rank, totals)."""
    R, K = cfg.ranks, cfg.cycles
    factors = [cfg.noise.factor(r) for r in range(R)]
    work = draw_costs(R, K, cfg.app.base_cost, factors, cfg.noise.jitter_sigma, cfg.seed)
    delay = np.zeros((R, K), dtype=np.int64)
    for d in cfg.noise.injected_delays:
        delay[d.rank, d.cycle] += d.duration
    nbr, xfer, _ = layout(cfg)
    grants = {}
    for _ in range(10_000):
        records, requests, S, totals = _schedule(cfg, work, delay, nbr, xfer, grants)
        new = _grants(requests, cfg.network.nic_service)
        if new == grants or not requests:
            break
        grants = new
    records.sort(key=lambda x: (x[4], x[0], x[1], x[3]))
    return records, S, totals
