"""Trace data model and the two on-disk formats.

Line-delimited trace file (the native format)::

    {"type":"header","format_version":1,"ranks":4,"cycles":10,"clock_hz":2100000000.0,"config_fingerprint":"...","source":"simulated"}
    {"type":"idle","rank":1,"cycle":0,"peer":0,"dir":"left","start":51002000,"end":51004008}
    ...

Records are sorted by (start, rank, cycle, dir).  Times are clock cycles.

CSV ingestion format: a header row naming ``rank,cycle,peer,dir,start,end``
(any column order); ``peer`` may be empty; ``dir`` is ``left``/``right`` or
``L``/``R``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import SchemaError, TraceError, TraceParseError, TraceValidationError

FORMAT_VERSION = 1
DIRECTIONS = ("left", "right")
_DIR_CODES = {"left": 0, "right": 1, "L": 0, "R": 1}
CSV_COLUMNS = ("rank", "cycle", "peer", "dir", "start", "end")


@dataclass(frozen=True)
class IdleRecord:
    rank: int
    cycle: int
    peer: int | None
    direction: str
    wait_start: int
    wait_end: int

    @property
    def duration(self) -> int:
        return self.wait_end - self.wait_start


@dataclass(frozen=True)
class TraceHeader:
    ranks: int
    cycles: int
    clock_hz: float
    config_fingerprint: str = ""
    source: str = "simulated"
    format_version: int = FORMAT_VERSION

    def to_json(self) -> str:
        return json.dumps({
            "type": "header",
            "format_version": self.format_version,
            "ranks": self.ranks,
            "cycles": self.cycles,
            "clock_hz": float(self.clock_hz),
            "config_fingerprint": self.config_fingerprint,
            "source": self.source,
        }, separators=(",", ":"))


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class Trace:
    """Immutable, columnar collection of idle records plus a header.

    ``peer`` uses -1 for "unknown"; ``direction`` is 0 (left) or 1 (right).
    """

    __slots__ = ("header", "rank", "cycle", "peer", "direction", "start", "end")

    def __init__(self, header: TraceHeader, rank, cycle, peer, direction, start, end, *,
                 sort: bool = True, validate: bool = True):
        cols = [np.asarray(c, dtype=np.int64).reshape(-1) for c in (rank, cycle, peer, direction, start, end)]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise ValueError("trace columns differ in length")
        if validate:
            _validate_columns(header, *cols)
        if sort and n:
            order = np.lexsort((cols[3], cols[1], cols[0], cols[4]))
            cols = [c[order] for c in cols]
        self.header = header
        self.rank, self.cycle, self.peer = (_frozen(c, np.int64) for c in cols[:3])
        self.direction = _frozen(cols[3], np.int8)
        self.start, self.end = (_frozen(c, np.int64) for c in cols[4:])

    @classmethod
    def from_records(cls, header: TraceHeader, records: Iterable[IdleRecord], **kw) -> "Trace":
        recs = list(records)
        return cls(
            header,
            [r.rank for r in recs],
            [r.cycle for r in recs],
            [-1 if r.peer is None else r.peer for r in recs],
            [_DIR_CODES[r.direction] for r in recs],
            [r.wait_start for r in recs],
            [r.wait_end for r in recs],
            **kw,
        )

    def __len__(self) -> int:
        return len(self.rank)

    @property
    def duration(self) -> np.ndarray:
        return self.end - self.start

    def record(self, i: int) -> IdleRecord:
        peer = int(self.peer[i])
        return IdleRecord(int(self.rank[i]), int(self.cycle[i]), None if peer < 0 else peer,
                          DIRECTIONS[self.direction[i]], int(self.start[i]), int(self.end[i]))

    def records(self) -> Iterator[IdleRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def shifted(self, offset: int) -> "Trace":
        """Same trace with every timestamp moved by ``offset`` cycles."""
        return Trace(self.header, self.rank, self.cycle, self.peer, self.direction,
                     self.start + offset, self.end + offset)

    def select(self, mask) -> "Trace":
        return Trace(self.header, self.rank[mask], self.cycle[mask], self.peer[mask],
                     self.direction[mask], self.start[mask], self.end[mask], sort=False, validate=False)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        return self.header == other.header and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("rank", "cycle", "peer", "direction", "start", "end"))

    __hash__ = None

    def __repr__(self):
        h = self.header
        return f"Trace(ranks={h.ranks}, cycles={h.cycles}, records={len(self)}, source={h.source!r})"


def _validate_columns(header, rank, cycle, peer, direction, start, end):
    """Raise TraceValidationError naming the first bad record (0-based index in ``line``)."""
    checks = (
        (end < start, "wait end precedes wait start"),
        (start < 0, "negative timestamp"),
        ((rank < 0) | (rank >= header.ranks), f"rank outside [0, {header.ranks})"),
        ((cycle < 0) | (cycle >= header.cycles), f"cycle outside [0, {header.cycles})"),
        (peer == rank, "record names its own rank as peer"),
        ((peer < -1) | (peer >= header.ranks), "peer outside rank range"),
        ((direction != 0) & (direction != 1), "direction must be left or right"),
    )
    for bad, why in checks:
        if bad.any():
            i = int(np.argmax(bad))
            raise TraceValidationError(i, why)


# -- native format ------------------------------------------------------------

def _record_lines(trace: Trace) -> Iterator[str]:
    dirs = ('"left"', '"right"')
    cols = zip(trace.rank.tolist(), trace.cycle.tolist(), trace.peer.tolist(),
               trace.direction.tolist(), trace.start.tolist(), trace.end.tolist())
    for r, c, p, d, s, e in cols:
        peer = "null" if p < 0 else str(p)
        yield f'{{"type":"idle","rank":{r},"cycle":{c},"peer":{peer},"dir":{dirs[d]},"start":{s},"end":{e}}}\n'


def dumps_trace(trace: Trace) -> str:
    return trace.header.to_json() + "\n" + "".join(_record_lines(trace))


def write_trace(trace: Trace, destination) -> None:
    text = dumps_trace(trace)
    if hasattr(destination, "write"):
        destination.write(text)
        return
    path = Path(destination)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot write trace to {path}: {exc.strerror or exc}") from exc


def _parse_header(obj, line):
    if not isinstance(obj, dict) or obj.get("type") != "header":
        raise TraceParseError(line, "first line must be a header object")
    if obj.get("format_version") != FORMAT_VERSION:
        raise TraceParseError(line, f"unsupported format_version {obj.get('format_version')!r}")
    try:
        header = TraceHeader(
            ranks=int(obj["ranks"]),
            cycles=int(obj["cycles"]),
            clock_hz=float(obj["clock_hz"]),
            config_fingerprint=str(obj.get("config_fingerprint", "")),
            source=str(obj.get("source", "simulated")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceParseError(line, f"bad header field: {exc}") from None
    if header.clock_hz <= 0:
        raise TraceValidationError(line, "clock_hz must be > 0")
    if header.ranks < 1 or header.cycles < 1:
        raise TraceValidationError(line, "ranks and cycles must be >= 1")
    return header


def loads_trace(text: str, source_name: str | None = None) -> Trace:
    lines = text.splitlines()
    if not lines:
        raise TraceParseError(1, "empty file", source_name)
    try:
        header = _parse_header(json.loads(lines[0]), 1)
    except json.JSONDecodeError as exc:
        raise TraceParseError(1, f"malformed JSON: {exc.msg}", source_name) from None
    n = len(lines) - 1
    cols = np.zeros((6, n), dtype=np.int64)
    for i in range(n):
        lineno = i + 2
        try:
            obj = json.loads(lines[i + 1])
        except json.JSONDecodeError as exc:
            raise TraceParseError(lineno, f"malformed JSON: {exc.msg}", source_name) from None
        try:
            if obj["type"] != "idle":
                raise TraceParseError(lineno, f"unexpected record type {obj['type']!r}", source_name)
            peer = obj["peer"]
            if obj["dir"] not in DIRECTIONS:
                raise TraceParseError(lineno, f"dir must be left or right, got {obj['dir']!r}", source_name)
            vals = (obj["rank"], obj["cycle"], -1 if peer is None else peer,
                    _DIR_CODES[obj["dir"]], obj["start"], obj["end"])
        except (KeyError, TypeError) as exc:
            raise TraceParseError(lineno, f"bad or missing field {exc}", source_name) from None
        if not all(type(v) is int for v in vals):
            raise TraceParseError(lineno, "numeric fields must be integers", source_name)
        cols[:, i] = vals
    try:
        return Trace(header, *cols)
    except TraceValidationError as exc:
        # record index -> file line (header is line 1)
        raise TraceValidationError(exc.line + 2, exc.reason, source_name) from None


def read_trace(source) -> Trace:
    if hasattr(source, "read"):
        return loads_trace(source.read())
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceError(f"cannot read trace {path}: {exc.strerror or exc}") from exc
    return loads_trace(text, str(path))


# -- CSV ingestion ------------------------------------------------------------

def ingest_csv(source, clock_hz: float, ranks: int, cycles: int | None = None) -> Trace:
    """Build a Trace (source="ingested") from an externally produced CSV file."""
    if hasattr(source, "read"):
        text, name = source.read(), None
    else:
        name = str(source)
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise TraceError(f"cannot read {name}: {exc.strerror or exc}") from exc
    reader = csv.DictReader(io.StringIO(text))
    fields = [f.strip() for f in (reader.fieldnames or [])]
    missing = [c for c in CSV_COLUMNS if c not in fields]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    reader.fieldnames = fields

    rows = []
    for row in reader:
        lineno = reader.line_num
        try:
            peer_s = (row["peer"] or "").strip()
            peer = -1 if peer_s in ("", "none", "None", "-") else int(peer_s)
            d = (row["dir"] or "").strip()
            if d not in _DIR_CODES:
                raise TraceParseError(lineno, f"dir must be one of left, right, L, R; got {d!r}", name)
            rows.append((int(row["rank"]), int(row["cycle"]), peer, _DIR_CODES[d],
                         int(row["start"]), int(row["end"])))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, TraceParseError):
                raise
            raise TraceParseError(lineno, f"non-numeric field in row: {exc}", name) from None

    cols = np.array(rows, dtype=np.int64).reshape(-1, 6).T
    if cycles is None:
        cycles = int(cols[1].max()) + 1 if len(rows) else 1
    header = TraceHeader(ranks=ranks, cycles=cycles, clock_hz=clock_hz,
                         config_fingerprint=hashlib.sha256(text.encode()).hexdigest()[:16],
                         source="ingested")
    try:
        return Trace(header, *cols)
    except TraceValidationError as exc:
        # index -> file line: rows are in file order and the header is line 1
        line = exc.line + 2
        raise TraceValidationError(line, exc.reason, name) from None
