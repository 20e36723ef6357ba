"""Compiled vs pure-Python kernels.

Runs the same workload in two subprocesses, one per value of
TANDEM_TLC_NUMBA, and prints the timings side by side.  The first compiled
call is timed separately so compilation does not blur the steady state.

    python benchmarks/bench_kernels.py [--reps 20] [--horizon 1000]
"""

import argparse
import json
import os
import subprocess
import sys

WORKLOAD = r"""
import json, sys, time
import numpy as np
from tandem_tlc._jit import USE_NUMBA
from tandem_tlc.sim import SimConfig, simulate
from tandem_tlc.ipa import run_ipa
from tandem_tlc.baseline import GridSpec, grid_costs

reps, horizon = int(sys.argv[1]), float(sys.argv[2])
out = {"numba": USE_NUMBA}

def timed(fn):
    t0 = time.perf_counter()
    fn()
    return time.perf_counter() - t0

def paths(backend):
    for s in range(reps):
        cfg = SimConfig(theta=(22.0, 17.0, 19.0, 26.0), horizon=horizon, backend=backend, seed=s)
        res = simulate(cfg)
        run_ipa(res.trace, cfg.weights)

grid = GridSpec(ranges=((15.0, 25.0, 1.0),) * 4, reps=3)
out["warmup"] = timed(lambda: (paths("discrete"), paths("fluid")))
out["discrete"] = timed(lambda: paths("discrete")) / reps
out["fluid"] = timed(lambda: paths("fluid")) / reps
out["grid_11^4"] = timed(lambda: grid_costs(SimConfig(horizon=horizon), grid))
print(json.dumps(out))
"""


def run(flag: str, reps: int, horizon: float) -> dict:
    env = dict(os.environ, TANDEM_TLC_NUMBA=flag)
    proc = subprocess.run([sys.executable, "-c", WORKLOAD, str(reps), str(horizon)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--horizon", type=float, default=1000.0)
    args = ap.parse_args()

    fast = run("1", args.reps, args.horizon)
    slow = run("0", args.reps, args.horizon)
    print(f"{'workload':<22}{'numba [s]':>12}{'python [s]':>12}{'speedup':>10}")
    for key in ("discrete", "fluid", "grid_11^4"):
        label = f"{key} path+IPA" if key != "grid_11^4" else "grid 11^4 x 3 reps"
        print(f"{label:<22}{fast[key]:>12.4f}{slow[key]:>12.4f}{slow[key] / fast[key]:>9.1f}x")
    print(f"first call (incl. compile): numba {fast['warmup']:.2f} s, python {slow['warmup']:.2f} s")


if __name__ == "__main__":
    main()
