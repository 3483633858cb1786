import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from idlewave.app import AppConfig, Boundary  # noqa: E402
from idlewave.config import SimConfig  # noqa: E402
from idlewave.engine import HAVE_KERNEL  # noqa: E402
from idlewave.network import NetworkParams, Topology  # noqa: E402
from idlewave.noise import NoiseConfig  # noqa: E402

BACKENDS = ["python"] + (["cython"] if HAVE_KERNEL else [])


def make_cfg(ranks=4, cycles=10, *, cost=1000, boundary="non-periodic", sigma=0.0,
             delays=(), overrides=(), os_noise=(), seed=0, cores=16, sockets=2,
             message_bytes=8, **net):
    return SimConfig(
        topology=Topology(ranks, cores, sockets),
        network=NetworkParams(**net),
        app=AppConfig(grid_points_per_rank=cost, cost_per_point=1, cycles=cycles,
                      boundary=Boundary(boundary), message_bytes=message_bytes),
        noise=NoiseConfig(jitter_sigma=sigma, injected_delays=tuple(delays),
                          speed_overrides=tuple(overrides), os_noise=tuple(os_noise)),
        seed=seed,
    )


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


# acceptance verdicts, printed once at the end of the session
VERDICTS = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
