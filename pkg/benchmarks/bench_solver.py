"""Compare the numba and pure-numpy backends on one-shot solves and a closed-loop run.

Each backend runs in its own interpreter because the switch is read at import.

    python3 benchmarks/bench_solver.py [--count 200] [--p 3] [--m 2]
"""
import argparse
import json
import os
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

WORKER = """
import json, statistics, sys, time
import numpy as np
from robust_cbf._accel import backend
from robust_cbf.config import load_config
from robust_cbf.sdp import solve_safe_control
from robust_cbf.sim import run_simulation
from robust_cbf.verification import random_instance

count, p, m, cfg = int(sys.argv[1]), int(sys.argv[2]), int(sys.argv[3]), sys.argv[4]
rng = np.random.default_rng(0)
insts = [random_instance(rng, p, m) for _ in range(count)]
t0 = time.perf_counter()
solve_safe_control(insts[0])
first = time.perf_counter() - t0
times, statuses = [], []
for t in insts:
    t0 = time.perf_counter()
    s = solve_safe_control(t)
    times.append(time.perf_counter() - t0)
    statuses.append(s.status.value)
sc = load_config(cfg).scenario()
t0 = time.perf_counter()
run_simulation(sc)
sim = time.perf_counter() - t0
print(json.dumps({
    "backend": backend(),
    "first_call_s": first,
    "median_ms": 1e3 * statistics.median(times),
    "p90_ms": 1e3 * sorted(times)[int(0.9 * len(times))],
    "optimal": statuses.count("Optimal"),
    "simulation_s": sim,
}))
"""


def run(flag: str, args) -> dict:
    env = dict(os.environ, ROBUST_CBF_NUMBA=flag)
    cfg = str(ROOT / "scenarios" / "linear_disk_uncertain.cfg")
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(args.count), str(args.p), str(args.m), cfg],
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=200)
    ap.add_argument("--p", type=int, default=3)
    ap.add_argument("--m", type=int, default=2)
    args = ap.parse_args()
    rows = [run("1", args), run("0", args)]
    print(f"{args.count} random solves, p={args.p}, m={args.m}; simulation: linear_disk_uncertain (501 steps)")
    print(f"{'backend':<8} {'first call':>11} {'median':>9} {'p90':>9} {'optimal':>8} {'simulation':>11}")
    for r in rows:
        print(
            f"{r['backend']:<8} {r['first_call_s']:>10.2f}s {r['median_ms']:>7.2f}ms {r['p90_ms']:>7.2f}ms "
            f"{r['optimal']:>8} {r['simulation_s']:>10.2f}s"
        )
    if rows[0]["optimal"] != rows[1]["optimal"]:
        print("warning: backends disagree on the number of Optimal solves")
    print(f"speedup (median): {rows[1]['median_ms'] / rows[0]['median_ms']:.1f}x")


if __name__ == "__main__":
    main()
