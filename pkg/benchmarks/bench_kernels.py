"""Time the trajectory and master-equation kernels under numba and plain numpy.

The backend is fixed at import time, so each one runs in its own interpreter:

    python3 benchmarks/bench_kernels.py            # both backends, summary table
    python3 benchmarks/bench_kernels.py --steps 20000 --repeat 5
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
import numpy as np
from qtbo import _accel, mcwf
from qtbo.lindblad import evolve
from qtbo.models import OptomechParams, optomech_initial_state, optomech_model

steps, repeat = int(sys.argv[1]), int(sys.argv[2])
p = OptomechParams(gamma=0.2)
sys_ = optomech_model(p)
psi0 = optomech_initial_state(p)
dt = 5e-4
cfg = mcwf.TrajectoryConfig(dt=dt, t_final=steps * dt, sample_every=100)
rho_steps = max(steps // 20, 1)


def best(fn):
    fn()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


out = {
    "backend": _accel.backend(),
    "trajectory_s": best(lambda: mcwf.run_trajectory(sys_.model, cfg, psi0, index=1)),
    "master_s": best(lambda: evolve(sys_.model, psi0.projector(), dt, rho_steps * dt, 100)),
    "steps": steps,
    "rho_steps": rho_steps,
}
print(json.dumps(out))
"""


def run_backend(disable, steps, repeat):
    env = dict(os.environ)
    env["QTBO_DISABLE_NUMBA"] = "1" if disable else "0"
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(steps), str(repeat)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=10000, help="trajectory steps per timing")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    t0 = time.perf_counter()
    rows = [run_backend(d, args.steps, args.repeat) for d in (False, True)]
    print(f"{'backend':<8} {'trajectory [s]':>15} {'master RK4 [s]':>15}")
    for r in rows:
        print(f"{r['backend']:<8} {r['trajectory_s']:>15.4f} {r['master_s']:>15.4f}")
    if rows[0]["backend"] == "numba":
        print(
            f"speed-up: trajectory x{rows[1]['trajectory_s'] / rows[0]['trajectory_s']:.1f}, "
            f"master x{rows[1]['master_s'] / rows[0]['master_s']:.1f}"
        )
    else:
        print("numba is not installed; both rows use the numpy path")
    print(f"({rows[0]['steps']} trajectory steps, {rows[0]['rho_steps']} master steps, "
          f"dim 32/1024, total {time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
