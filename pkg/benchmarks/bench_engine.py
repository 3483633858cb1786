"""Compare the pure-Python and compiled event loops on the same plans.

    python3 benchmarks/bench_engine.py [--repeat 3]
"""
import argparse
import time

from idlewave.app import AppConfig
from idlewave.config import SimConfig
from idlewave.engine import HAVE_KERNEL, build_plan, run_plan
from idlewave.network import Topology
from idlewave.noise import NoiseClass, NoiseConfig

CASES = {
    "64x200 quiet": SimConfig(topology=Topology(64), app=AppConfig(cycles=200)),
    "256x200 jitter": SimConfig(topology=Topology(256), app=AppConfig(cycles=200),
                                noise=NoiseConfig(jitter_sigma=0.01)),
    "128x100 os-noise": SimConfig(topology=Topology(128), app=AppConfig(cycles=100),
                                  noise=NoiseConfig(os_noise=(NoiseClass(2_100_000, 21_000, 0.1, name="timer"),))),
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_KERNEL:
        print("compiled kernel not built; only the python backend is available")
    print(f"{'case':<20}{'events':>10}{'python s':>12}{'cython s':>12}{'speedup':>10}")
    for name, cfg in CASES.items():
        plan = build_plan(cfg)
        res = run_plan(plan, "python")
        t_py = best_of(lambda: run_plan(plan, "python"), args.repeat)
        if HAVE_KERNEL:
            t_cy = best_of(lambda: run_plan(plan, "cython"), args.repeat)
            print(f"{name:<20}{res.events:>10}{t_py:>12.3f}{t_cy:>12.4f}{t_py / t_cy:>10.1f}")
        else:
            print(f"{name:<20}{res.events:>10}{t_py:>12.3f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
