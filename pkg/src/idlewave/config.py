"""SimConfig and its INI-style config file.

Example document::

    [run]
    seed = 7
    preset = seapearl

    [topology]
    ranks = 256

    [app]
    cycles = 1000

    [noise]
    jitter_sigma = 0.01
    speed_factors = 64-73:10; 5:1.5
    injected_delays = 0:3:10500000

    [os_noise.timer]
    period = 2100000
    duration = 2100
    affected_ranks = all

Every key is optional except ``topology.ranks``.  Environment variables are
never consulted.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path

from .app import AppConfig, Boundary
from .errors import ConfigError
from .network import NetworkParams, Topology
from .noise import InjectedDelay, NoiseClass, NoiseConfig

PRESETS = {
    "pal": {"cores_per_socket": 16, "sockets_per_node": 2, "clock_hz": 2.1e9},
    "seapearl": {"cores_per_socket": 10, "sockets_per_node": 2, "clock_hz": 2.8e9},
    "beskow": {"cores_per_socket": 16, "sockets_per_node": 2, "clock_hz": 2.3e9},
}

DEFAULT_CLOCK_HZ = 2.1e9


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    network: NetworkParams = field(default_factory=NetworkParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    app: AppConfig = field(default_factory=AppConfig)
    seed: int = 0
    clock_hz: float = DEFAULT_CLOCK_HZ
    preset: str | None = None

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("run.seed", "must be a non-negative integer")
        if not self.clock_hz > 0:
            raise ConfigError("run.clock_hz", "must be > 0")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError("run.preset", f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        n = self.topology.ranks
        for rank, _ in self.noise.speed_overrides:
            if not 0 <= rank < n:
                raise ConfigError("noise.speed_factors", f"rank {rank} out of range [0, {n})")
        for d in self.noise.injected_delays:
            if not 0 <= d.rank < n:
                raise ConfigError("noise.injected_delays", f"rank {d.rank} out of range [0, {n})")
            if not 0 <= d.cycle < self.app.cycles:
                raise ConfigError("noise.injected_delays", f"cycle {d.cycle} out of range [0, {self.app.cycles})")
        for cls in self.noise.os_noise:
            for rank in cls.affected_ranks or ():
                if not 0 <= rank < n:
                    raise ConfigError(f"os_noise.{cls.name}.affected_ranks", f"rank {rank} out of range")

    @property
    def ranks(self) -> int:
        return self.topology.ranks

    @property
    def cycles(self) -> int:
        return self.app.cycles

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def fingerprint(self) -> str:
        return hashlib.sha256(dumps(self).encode()).hexdigest()[:16]


def apply_preset(cfg: SimConfig, name: str) -> SimConfig:
    if name not in PRESETS:
        raise ConfigError("run.preset", f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    topo = dataclasses.replace(cfg.topology, cores_per_socket=p["cores_per_socket"],
                               sockets_per_node=p["sockets_per_node"])
    return dataclasses.replace(cfg, topology=topo, clock_hz=p["clock_hz"], preset=name)


# -- rank-set text ------------------------------------------------------------

def parse_ranks(text: str, key: str) -> list[int]:
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                lo_i, hi_i = int(lo), int(hi)
                if hi_i < lo_i:
                    raise ValueError
                out.extend(range(lo_i, hi_i + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise ConfigError(key, f"bad rank list element {part!r}") from None
    return out


def format_ranks(ranks) -> str:
    ranks = sorted(set(ranks))
    parts = []
    i = 0
    while i < len(ranks):
        j = i
        while j + 1 < len(ranks) and ranks[j + 1] == ranks[j] + 1:
            j += 1
        parts.append(str(ranks[i]) if i == j else f"{ranks[i]}-{ranks[j]}")
        i = j + 1
    return ",".join(parts)


# -- parsing ------------------------------------------------------------------

_TOPOLOGY_KEYS = {"ranks", "cores_per_socket", "sockets_per_node"}
_NETWORK_INT_KEYS = {f.name for f in dataclasses.fields(NetworkParams)} - {"nic_contention"}
_APP_INT_KEYS = {"grid_points_per_rank", "cost_per_point", "cycles", "message_bytes"}
_NOISE_KEYS = {"speed_factor", "speed_factors", "jitter_sigma", "injected_delays"}
_OS_KEYS = {"period", "duration", "jitter_fraction", "affected_ranks"}
_RUN_KEYS = {"seed", "clock_hz", "preset"}


def _int(section, key, value):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected an integer, got {value!r}") from None


def _float(section, key, value):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected a number, got {value!r}") from None


def _bool(section, key, value):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{section}.{key}", f"expected a boolean, got {value!r}")


def _check_keys(section, items, allowed):
    for key in items:
        if key not in allowed:
            raise ConfigError(f"{section}.{key}", "unknown key")


def _parse_speed_factors(text):
    out = []
    for chunk in text.replace(" ", "").split(";"):
        if not chunk:
            continue
        if ":" not in chunk:
            raise ConfigError("noise.speed_factors", f"expected RANKS:FACTOR, got {chunk!r}")
        ranks, factor = chunk.rsplit(":", 1)
        f = _float("noise", "speed_factors", factor)
        out.extend((r, f) for r in parse_ranks(ranks, "noise.speed_factors"))
    seen = {}
    for r, f in out:
        seen[r] = f
    return tuple(sorted(seen.items()))


def _format_speed_factors(overrides):
    groups: list[tuple[list[int], float]] = []
    for r, f in sorted(overrides):
        if groups and groups[-1][1] == f and groups[-1][0][-1] == r - 1:
            groups[-1][0].append(r)
        else:
            groups.append(([r], f))
    return "; ".join(f"{format_ranks(rs)}:{f!r}" for rs, f in groups)


def _parse_delays(text):
    out = []
    for chunk in text.replace(" ", "").split(","):
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError("noise.injected_delays", f"expected RANK:CYCLE:DURATION, got {chunk!r}")
        r, c, d = (_int("noise", "injected_delays", p) for p in parts)
        out.append(InjectedDelay(r, c, d))
    return tuple(out)


def loads(text: str) -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None

    for section in parser.sections():
        if section not in ("run", "topology", "network", "app", "noise") and not section.startswith("os_noise."):
            raise ConfigError(section, "unknown section")

    run = dict(parser["run"]) if parser.has_section("run") else {}
    _check_keys("run", run, _RUN_KEYS)
    preset = run.get("preset") or None
    if preset is not None and preset not in PRESETS:
        raise ConfigError("run.preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    pvals = PRESETS.get(preset, {})

    topo_s = dict(parser["topology"]) if parser.has_section("topology") else {}
    _check_keys("topology", topo_s, _TOPOLOGY_KEYS)
    if "ranks" not in topo_s:
        raise ConfigError("topology.ranks", "required")
    topology = Topology(
        ranks=_int("topology", "ranks", topo_s["ranks"]),
        cores_per_socket=_int("topology", "cores_per_socket",
                              topo_s.get("cores_per_socket", pvals.get("cores_per_socket", 16))),
        sockets_per_node=_int("topology", "sockets_per_node",
                              topo_s.get("sockets_per_node", pvals.get("sockets_per_node", 2))),
    )

    net_s = dict(parser["network"]) if parser.has_section("network") else {}
    _check_keys("network", net_s, _NETWORK_INT_KEYS | {"nic_contention"})
    net_kwargs = {k: _int("network", k, v) for k, v in net_s.items() if k != "nic_contention"}
    if "nic_contention" in net_s:
        net_kwargs["nic_contention"] = _bool("network", "nic_contention", net_s["nic_contention"])
    network = NetworkParams(**net_kwargs)

    app_s = dict(parser["app"]) if parser.has_section("app") else {}
    _check_keys("app", app_s, _APP_INT_KEYS | {"boundary", "overlap"})
    app_kwargs = {k: _int("app", k, v) for k, v in app_s.items() if k in _APP_INT_KEYS}
    if "boundary" in app_s:
        try:
            app_kwargs["boundary"] = Boundary(app_s["boundary"].strip())
        except ValueError:
            raise ConfigError("app.boundary", "expected 'periodic' or 'non-periodic'") from None
    if "overlap" in app_s:
        app_kwargs["overlap"] = _bool("app", "overlap", app_s["overlap"])
    app = AppConfig(**app_kwargs)

    noise_s = dict(parser["noise"]) if parser.has_section("noise") else {}
    _check_keys("noise", noise_s, _NOISE_KEYS)
    classes = []
    for section in parser.sections():
        if not section.startswith("os_noise."):
            continue
        name = section.split(".", 1)[1]
        s = dict(parser[section])
        _check_keys(section, s, _OS_KEYS)
        for req in ("period", "duration"):
            if req not in s:
                raise ConfigError(f"{section}.{req}", "required")
        affected = s.get("affected_ranks", "all").strip()
        classes.append(NoiseClass(
            period=_int(section, "period", s["period"]),
            duration=_int(section, "duration", s["duration"]),
            jitter_fraction=_float(section, "jitter_fraction", s.get("jitter_fraction", "0")),
            affected_ranks=None if affected == "all" else frozenset(parse_ranks(affected, f"{section}.affected_ranks")),
            name=name,
        ))
    noise = NoiseConfig(
        speed_factor=_float("noise", "speed_factor", noise_s.get("speed_factor", "1.0")),
        speed_overrides=_parse_speed_factors(noise_s.get("speed_factors", "")),
        jitter_sigma=_float("noise", "jitter_sigma", noise_s.get("jitter_sigma", "0.0")),
        os_noise=tuple(classes),
        injected_delays=_parse_delays(noise_s.get("injected_delays", "")),
    )

    seed = _int("run", "seed", run.get("seed", "0"))
    clock_hz = _float("run", "clock_hz", run.get("clock_hz", pvals.get("clock_hz", DEFAULT_CLOCK_HZ)))
    return SimConfig(topology=topology, network=network, noise=noise, app=app,
                     seed=seed, clock_hz=clock_hz, preset=preset)


def load(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("file", f"cannot read config {path}: {exc.strerror or exc}") from None
    return loads(text)


def dumps(cfg: SimConfig) -> str:
    """Canonical text form; ``loads(dumps(c)) == c``."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    parser.optionxform = str
    run = {"seed": str(cfg.seed), "clock_hz": repr(float(cfg.clock_hz))}
    if cfg.preset:
        run["preset"] = cfg.preset
    parser["run"] = run
    parser["topology"] = {
        "ranks": str(cfg.topology.ranks),
        "cores_per_socket": str(cfg.topology.cores_per_socket),
        "sockets_per_node": str(cfg.topology.sockets_per_node),
    }
    net = {k: str(getattr(cfg.network, k)) for k in sorted(_NETWORK_INT_KEYS)}
    net["nic_contention"] = "true" if cfg.network.nic_contention else "false"
    parser["network"] = net
    parser["app"] = {
        "grid_points_per_rank": str(cfg.app.grid_points_per_rank),
        "cost_per_point": str(cfg.app.cost_per_point),
        "cycles": str(cfg.app.cycles),
        "boundary": cfg.app.boundary.value,
        "message_bytes": str(cfg.app.message_bytes),
    }
    noise = {"speed_factor": repr(float(cfg.noise.speed_factor)),
             "jitter_sigma": repr(float(cfg.noise.jitter_sigma))}
    if cfg.noise.speed_overrides:
        noise["speed_factors"] = _format_speed_factors(cfg.noise.speed_overrides)
    if cfg.noise.injected_delays:
        noise["injected_delays"] = ", ".join(f"{d.rank}:{d.cycle}:{d.duration}" for d in cfg.noise.injected_delays)
    parser["noise"] = noise
    for cls in cfg.noise.os_noise:
        parser[f"os_noise.{cls.name}"] = {
            "period": str(cls.period),
            "duration": str(cls.duration),
            "jitter_fraction": repr(float(cls.jitter_fraction)),
            "affected_ranks": "all" if cls.affected_ranks is None else format_ranks(cls.affected_ranks),
        }
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
