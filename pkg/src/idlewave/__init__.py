"""Idle-period propagation in halo-exchange message-passing codes.

Simulate a 1D halo exchange under noise, write/read idle traces, detect idle
waves and self-synchronization, and render rank-by-time idle maps.
"""
from .config import SimConfig
from .engine import HAVE_KERNEL, run, simulate
from .trace import IdleRecord, Trace, TraceHeader, ingest_csv, read_trace, write_trace

__all__ = [
    "HAVE_KERNEL",
    "IdleRecord",
    "SimConfig",
    "Trace",
    "TraceHeader",
    "ingest_csv",
    "read_trace",
    "run",
    "simulate",
    "write_trace",
]
__version__ = "0.1.0"
