from pathlib import Path

import pytest

from idlewave.config import PRESETS, SimConfig, apply_preset, dumps, format_ranks, load, loads, parse_ranks
from idlewave.errors import ConfigError
from idlewave.network import Topology

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

FULL = """
[run]
seed = 42
preset = seapearl

[topology]
ranks = 40

[network]
latency_inter_node = 30000
nic_contention = false

[app]
cycles = 12
boundary = periodic
message_bytes = 64

[noise]
jitter_sigma = 0.02
speed_factors = 4-6:10; 9:1.5
injected_delays = 0:3:1000, 2:1:50

[os_noise.timer]
period = 2100000
duration = 2100
jitter_fraction = 0.1
affected_ranks = 0-3,8
"""


def test_presets_match_hardware_table():
    assert PRESETS["pal"] == {"cores_per_socket": 16, "sockets_per_node": 2, "clock_hz": 2.1e9}
    assert PRESETS["seapearl"] == {"cores_per_socket": 10, "sockets_per_node": 2, "clock_hz": 2.8e9}
    assert PRESETS["beskow"] == {"cores_per_socket": 16, "sockets_per_node": 2, "clock_hz": 2.3e9}


def test_full_document_parses():
    cfg = loads(FULL)
    assert cfg.seed == 42 and cfg.preset == "seapearl"
    assert cfg.topology.cores_per_socket == 10 and cfg.clock_hz == 2.8e9
    assert cfg.network.latency_inter_node == 30000 and not cfg.network.nic_contention
    assert cfg.app.boundary.value == "periodic"
    assert cfg.noise.factor(5) == 10.0 and cfg.noise.factor(9) == 1.5 and cfg.noise.factor(0) == 1.0
    assert len(cfg.noise.injected_delays) == 2
    (timer,) = cfg.noise.os_noise
    assert timer.name == "timer" and timer.affected_ranks == frozenset({0, 1, 2, 3, 8})


def test_round_trip_is_identity():
    cfg = loads(FULL)
    assert loads(dumps(cfg)) == cfg
    assert dumps(loads(dumps(cfg))) == dumps(cfg)


def test_fingerprint_tracks_content():
    cfg = loads(FULL)
    assert cfg.fingerprint() == loads(dumps(cfg)).fingerprint()
    assert cfg.fingerprint() != cfg.replace(seed=43).fingerprint()


def test_unknown_key_named():
    with pytest.raises(ConfigError) as exc:
        loads("[topology]\nranks = 4\ncolour = blue\n")
    assert "colour" in str(exc.value)


def test_unknown_section_named():
    with pytest.raises(ConfigError) as exc:
        loads("[topology]\nranks = 4\n[extras]\na = 1\n")
    assert "extras" in str(exc.value)


def test_missing_ranks():
    with pytest.raises(ConfigError) as exc:
        loads("[app]\ncycles = 3\n")
    assert "ranks" in exc.value.field


def test_bad_number_names_field():
    with pytest.raises(ConfigError) as exc:
        loads("[topology]\nranks = four\n")
    assert exc.value.field == "topology.ranks"


def test_delay_rank_out_of_range():
    with pytest.raises(ConfigError) as exc:
        loads("[topology]\nranks = 4\n[noise]\ninjected_delays = 9:0:10\n")
    assert exc.value.field == "noise.injected_delays"


def test_missing_file_names_path(tmp_path):
    missing = tmp_path / "nope.ini"
    with pytest.raises(ConfigError) as exc:
        load(missing)
    assert str(missing) in str(exc.value)


def test_apply_preset():
    cfg = apply_preset(SimConfig(topology=Topology(256)), "beskow")
    assert cfg.topology.nodes == 8 and cfg.clock_hz == 2.3e9
    with pytest.raises(ConfigError):
        apply_preset(cfg, "summit")


def test_rank_lists():
    assert parse_ranks("0-3, 8,10-11", "k") == [0, 1, 2, 3, 8, 10, 11]
    assert format_ranks([11, 0, 1, 2, 3, 8, 10]) == "0-3,8,10-11"
    with pytest.raises(ConfigError):
        parse_ranks("5-2", "k")


@pytest.mark.parametrize("name", ["fig1.ini", "slow_group.ini", "homogeneous.ini"])
def test_shipped_scenarios_load(name):
    cfg = load(SCENARIOS / name)
    assert loads(dumps(cfg)) == cfg


def test_invalid_seed():
    with pytest.raises(ConfigError) as exc:
        SimConfig(topology=Topology(4), seed=-1)
    assert exc.value.field == "run.seed"
