"""Command-line entry point: ``idlewave {simulate,analyze,render,ingest}``.

Exit status: 0 success, 1 runtime error (bad file, invalid config or trace),
2 usage error, 3 sync analysis finished without a confident result.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import analysis, config as config_mod, render
from .config import PRESETS, apply_preset, parse_ranks
from .engine import run
from .errors import IdleWaveError
from .network import Topology
from .trace import ingest_csv, read_trace, write_trace

EXIT_ERROR = 1
EXIT_LOW_CONFIDENCE = 3
IMAGE_WIDTH = 800
ASCII_WIDTH = 100


def _write_output(data, out):
    """Write text or bytes to ``out`` (a path) or standard output."""
    if out is None or out == "-":
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
            sys.stdout.buffer.flush()
        else:
            sys.stdout.write(data)
        return
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        with open(out, mode) as fh:
            fh.write(data)
    except OSError as exc:
        raise IdleWaveError(f"cannot write {out}: {exc.strerror or exc}") from None


def _load_config(args):
    cfg = config_mod.load(args.config)
    if args.preset:
        cfg = apply_preset(cfg, args.preset)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    t0 = time.perf_counter()
    result = run(cfg, backend=args.backend)
    wall = time.perf_counter() - t0
    if args.out:
        write_trace(result.trace, args.out)
        log = sys.stdout
    else:
        write_trace(result.trace, sys.stdout)
        log = sys.stderr
    print(f"ranks={cfg.ranks} cycles={cfg.cycles} nodes={cfg.topology.nodes} "
          f"records={len(result.trace)} wall_time={wall:.3f}s backend={result.backend}", file=log)
    return 0


def cmd_analyze(args) -> int:
    trace = read_trace(args.trace)
    status = 0
    if args.kind == "stats":
        items = analysis.idle_stats(trace)
    elif args.kind == "waves":
        items = analysis.detect_waves(trace, args.threshold, args.window)
    else:
        cfg = analysis.SyncConfig(threshold=args.threshold, bin=args.time_bin,
                                  min_periods=args.min_periods)
        report = analysis.detect_self_sync(trace, cfg)
        items = [report]
        if report.low_confidence:
            why = ("no common idle period found" if report.period == 0 else
                   f"trace covers fewer than {args.min_periods} periods of {report.period} cycles")
            print(f"low confidence: {why}", file=sys.stderr)
            status = EXIT_LOW_CONFIDENCE
        elif not report.synchronized:
            print(f"not synchronized: confidence {report.confidence:.3f}", file=sys.stderr)
    _write_output(analysis.dumps_results(items), args.out)
    return status


def _topology_for(trace, args):
    if args.config:
        return _load_config(args).topology
    preset = PRESETS.get(args.preset or "pal")
    return Topology(trace.header.ranks, preset["cores_per_socket"], preset["sockets_per_node"])


def _shifts_from(args, ranks, parser):
    if args.shifts:
        shifts = {}
        for part in args.shifts.split(","):
            r, _, s = part.partition(":")
            try:
                shifts[int(r)] = int(s)
            except ValueError:
                parser.error(f"--shifts: expected rank:cycles pairs, got {part!r}")
        return shifts
    if args.sync_report:
        text = Path(args.sync_report).read_text(encoding="utf-8")
        for line in text.splitlines():
            obj = json.loads(line)
            if obj.get("type") == "sync_report":
                return {int(r): int(p) for r, p in obj["phases"].items()}
        parser.error(f"--sync-report: no sync_report object in {args.sync_report}")
    parser.error("timelines needs --shifts or --sync-report")


def cmd_render(args, parser) -> int:
    trace = read_trace(args.trace)
    width = args.width or (ASCII_WIDTH if args.format == "ascii" else IMAGE_WIDTH)
    cfg = render.RenderConfig(threshold=args.threshold, time_bin=args.time_bin, width=width,
                              height=args.height, annotate_topology=args.annotate,
                              output_format=args.format)
    topo = _topology_for(trace, args) if args.annotate else None
    if args.mode == "heatmap":
        data = render.render_heatmap(trace, cfg, topo)
    else:
        ranks = parse_ranks(args.ranks, "--ranks") if args.ranks else list(range(trace.header.ranks))
        shifts = _shifts_from(args, ranks, parser)
        missing = [r for r in ranks if r not in shifts]
        if missing:
            parser.error(f"no shift for rank(s) {config_mod.format_ranks(missing)}")
        data = render.render_shifted_timelines(trace, ranks, shifts, cfg, topo)
    _write_output(data, args.out)
    return 0


def cmd_ingest(args) -> int:
    clock = args.clock_hz or PRESETS[args.preset or "pal"]["clock_hz"]
    trace = ingest_csv(args.csv, clock, args.ranks, args.cycles)
    if args.out:
        write_trace(trace, args.out)
        print(f"ranks={trace.header.ranks} cycles={trace.header.cycles} records={len(trace)}")
    else:
        write_trace(trace, sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idlewave", description="Idle-wave simulator and trace toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--seed", type=int)

    s = sub.add_parser("simulate", parents=[common], help="run a simulation and write a trace")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.add_argument("--backend", choices=("auto", "python", "cython"), default="auto")

    a = sub.add_parser("analyze", help="statistics, wave fronts or self-synchronization")
    a.add_argument("kind", choices=("stats", "waves", "sync"))
    a.add_argument("--trace", required=True)
    a.add_argument("--out")
    a.add_argument("--threshold", type=int, default=analysis.DEFAULT_THRESHOLD)
    a.add_argument("--time-bin", type=int, help="sync bin width in cycles")
    a.add_argument("--window", type=float, help="wave chaining window in cycles")
    a.add_argument("--min-periods", type=int, default=10)

    r = sub.add_parser("render", parents=[common], help="heatmap or shifted timelines")
    r.add_argument("mode", choices=("heatmap", "timelines"))
    r.add_argument("--trace", required=True)
    r.add_argument("--out")
    r.add_argument("--format", choices=[f.value for f in render.OutputFormat], default="ppm")
    r.add_argument("--threshold", type=int, default=1_000_000)
    r.add_argument("--time-bin", type=int)
    r.add_argument("--width", type=int, help=f"pixels or characters (default {IMAGE_WIDTH}, ascii {ASCII_WIDTH})")
    r.add_argument("--height", type=int, default=512)
    r.add_argument("--annotate", action="store_true", help="draw socket and node separators")
    r.add_argument("--config", help="config whose topology drives --annotate")
    r.add_argument("--ranks", help="rank list for timelines, e.g. 113-122")
    r.add_argument("--shifts", help="rank:cycles pairs, comma separated")
    r.add_argument("--sync-report", help="analyze sync output supplying phases")

    i = sub.add_parser("ingest", help="convert an external CSV idle log to a trace")
    i.add_argument("csv")
    i.add_argument("--ranks", type=int, required=True)
    i.add_argument("--cycles", type=int)
    i.add_argument("--clock-hz", type=float)
    i.add_argument("--preset", choices=sorted(PRESETS))
    i.add_argument("--out")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "render":
            return cmd_render(args, parser)
        return cmd_ingest(args)
    except (IdleWaveError, OSError) as exc:
        print(f"idlewave: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
