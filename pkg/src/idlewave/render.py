"""Rank-by-time idle heatmaps and phase-shifted per-rank timelines.

Two colors only: long idles (duration >= threshold) in blue, everything else
in the busy color.  Output formats: binary PPM (P6), SVG built from ``rect``
elements, and an ASCII grid.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import RenderError
from .network import Topology
from .trace import Trace

IDLE_RGB = (31, 119, 180)
BUSY_RGB = (255, 221, 87)
LINE_RGB = (0, 0, 0)
MIN_SIZE = 16


class OutputFormat(str, enum.Enum):
    PPM = "ppm"
    SVG = "svg"
    ASCII = "ascii"


@dataclass(frozen=True)
class RenderConfig:
    threshold: int = 1_000_000
    time_bin: int | None = None       # cycles per column; default fits the trace into width
    width: int = 800
    height: int = 512
    annotate_topology: bool = False
    output_format: OutputFormat = OutputFormat.PPM

    def __post_init__(self):
        if self.width < MIN_SIZE or self.height < MIN_SIZE:
            raise RenderError(f"width and height must be >= {MIN_SIZE}")
        if self.time_bin is not None and self.time_bin <= 0:
            raise RenderError("time_bin must be > 0")
        if self.threshold <= 0:
            raise RenderError("threshold must be > 0")
        object.__setattr__(self, "output_format", OutputFormat(self.output_format))


def _time_bin(cfg: RenderConfig, span: int, columns: int) -> int:
    if cfg.time_bin is not None:
        return cfg.time_bin
    return max(1, -(-span // columns))


def _grid(starts, ends, rows, n_rows, n_cols, bin_):
    """Boolean [n_rows, n_cols] grid; cell (row, c) set when an interval on
    that row overlaps [c*bin, (c+1)*bin)."""
    first = np.clip(np.floor_divide(starts, bin_), 0, n_cols)
    last = np.clip(-np.floor_divide(-ends, bin_), 0, n_cols)
    keep = last > first
    diff = np.zeros((n_rows, n_cols + 1), dtype=np.int64)
    np.add.at(diff, (rows[keep], first[keep]), 1)
    np.add.at(diff, (rows[keep], last[keep]), -1)
    return np.cumsum(diff[:, :n_cols], axis=1) > 0


def _band_height(n_rows, cfg):
    h = cfg.height // n_rows if n_rows else 0
    if h < 1:
        raise RenderError(f"{n_rows} ranks do not fit in height {cfg.height}; "
                          f"use a height of at least {max(n_rows, MIN_SIZE)} pixels")
    return h


def _raster(grid: np.ndarray, cfg: RenderConfig, separators=()) -> np.ndarray:
    """Expand the [rows, cols] idle grid into an RGB image; row 0 at the bottom."""
    n_rows = grid.shape[0]
    band = _band_height(n_rows, cfg)
    img = np.empty((cfg.height, cfg.width, 3), dtype=np.uint8)
    img[:] = BUSY_RGB
    pad = cfg.height - band * n_rows
    body = np.repeat(grid[::-1], band, axis=0)
    img[pad:][body] = IDLE_RGB
    for row, dashed in separators:
        # line sits on the lower edge of the band for ``row``
        y = cfg.height - row * band
        if not 0 <= y < cfg.height:
            continue
        xs = np.arange(cfg.width)
        if dashed:
            xs = xs[(xs // 4) % 2 == 0]
        img[y, xs] = LINE_RGB
    return img


def _separators(ranks: list[int], topo: Topology):
    """(row, dashed) for every boundary between consecutive displayed ranks:
    node boundaries dashed, socket boundaries solid."""
    out = []
    per_node = topo.ranks_per_node
    per_socket = topo.cores_per_socket
    for row in range(1, len(ranks)):
        a, b = ranks[row - 1], ranks[row]
        if a // per_node != b // per_node:
            out.append((row, True))
        elif a // per_socket != b // per_socket:
            out.append((row, False))
    return out


def _encode(img: np.ndarray, grid: np.ndarray, cfg: RenderConfig) -> bytes:
    fmt = cfg.output_format
    if fmt is OutputFormat.PPM:
        h, w, _ = img.shape
        return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()
    if fmt is OutputFormat.SVG:
        return _svg(img)
    return _ascii(grid)


def _svg(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    busy = "#%02x%02x%02x" % BUSY_RGB
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}">\n',
             f'<rect x="0" y="0" width="{w}" height="{h}" fill="{busy}"/>\n']
    packed = (img[..., 0].astype(np.int32) << 16) | (img[..., 1].astype(np.int32) << 8) | img[..., 2]
    busy_val = (BUSY_RGB[0] << 16) | (BUSY_RGB[1] << 8) | BUSY_RGB[2]
    for y in range(h):
        row = packed[y]
        change = np.flatnonzero(np.diff(row)) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [w]))
        for x0, x1 in zip(starts.tolist(), ends.tolist()):
            v = int(row[x0])
            if v != busy_val:
                parts.append(f'<rect x="{x0}" y="{y}" width="{x1 - x0}" height="1" fill="#{v:06x}"/>\n')
    parts.append("</svg>\n")
    return "".join(parts).encode("ascii")


def _ascii(grid: np.ndarray) -> bytes:
    lines = ["".join("#" if v else "." for v in row) for row in grid[::-1]]
    return ("\n".join(lines) + "\n").encode("ascii")


def _long(trace: Trace, threshold: int):
    return trace.duration >= threshold


def _render_rows(trace: Trace, ranks: list[int], shifts, cfg: RenderConfig, topo: Topology | None):
    long = _long(trace, cfg.threshold)
    row_of = np.full(trace.header.ranks, -1, dtype=np.int64)
    row_of[np.asarray(ranks, dtype=np.int64)] = np.arange(len(ranks))
    rows = row_of[trace.rank]
    sel = long & (rows >= 0)
    off = np.zeros(trace.header.ranks, dtype=np.int64)
    off[np.asarray(ranks, dtype=np.int64)] = shifts
    s = trace.start[sel] - off[trace.rank[sel]]
    e = trace.end[sel] - off[trace.rank[sel]]
    span = int(trace.end.max()) if len(trace) else 0
    cols = cfg.width
    bin_ = _time_bin(cfg, span, cols)
    grid = _grid(s, e, rows[sel], len(ranks), cols, bin_)
    seps = _separators(ranks, topo) if cfg.annotate_topology and topo is not None else ()
    if cfg.output_format is OutputFormat.ASCII:
        return _encode(None, grid, cfg)
    return _encode(_raster(grid, cfg, seps), grid, cfg)


def render_heatmap(trace: Trace, cfg: RenderConfig | None = None, topo: Topology | None = None) -> bytes:
    """Rank (y, rank 0 at the bottom) by time (x) idle image.

    Each column covers ``time_bin`` cycles from time 0; a cell is idle-colored
    when any long idle of that rank overlaps it.
    """
    cfg = cfg or RenderConfig()
    if len(trace) == 0:
        raise RenderError("cannot render an empty trace")
    ranks = list(range(trace.header.ranks))
    return _render_rows(trace, ranks, np.zeros(len(ranks), dtype=np.int64), cfg, topo)


def render_shifted_timelines(trace: Trace, ranks, shifts, cfg: RenderConfig | None = None,
                             topo: Topology | None = None) -> bytes:
    """One strip per selected rank, each translated left by its shift (cycles).

    ``shifts`` is a mapping rank -> cycles or a sequence parallel to ``ranks``.
    """
    cfg = cfg or RenderConfig()
    ranks = [int(r) for r in ranks]
    if not ranks:
        raise RenderError("no ranks selected")
    if len(trace) == 0:
        raise RenderError("cannot render an empty trace")
    bad = [r for r in ranks if not 0 <= r < trace.header.ranks]
    if bad:
        raise RenderError(f"rank(s) {bad} outside trace")
    if isinstance(shifts, dict):
        missing = [r for r in ranks if r not in shifts]
        if missing:
            raise ValueError(f"no shift given for rank(s) {missing}")
        vals = [int(shifts[r]) for r in ranks]
    else:
        vals = [int(v) for v in shifts]
        if len(vals) != len(ranks):
            raise ValueError(f"{len(ranks)} ranks selected but {len(vals)} shifts given")
    return _render_rows(trace, ranks, np.asarray(vals, dtype=np.int64), cfg, topo)
