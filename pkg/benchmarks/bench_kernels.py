"""Time the numba and numpy drive kernels at full experiment sizes.

    python benchmarks/bench_kernels.py [--steps 4200] [--repeat 5]

Also times one full NARMA10 trial under each backend, each in a fresh
interpreter because the backend is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from robustrc import _kernels
from robustrc.reservoir import build_esn, build_scr

CASES = [
    ("SCR N=50 n=1", lambda g: build_scr(50, 0.9, 0.1, g), 1),
    ("ESN N=50 l=0.2 n=10", lambda g: build_esn(50, 0.2, 0.9, 0.1, g), 10),
    ("SCR N=100 n=2", lambda g: build_scr(100, 0.9, 0.1, g), 2),
    ("ESN N=100 l=0.2 n=40", lambda g: build_esn(100, 0.2, 0.9, 0.1, g), 40),
    ("ESN N=200 l=0.1 n=80", lambda g: build_esn(200, 0.1, 0.9, 0.1, g), 80),
]

TRIAL = """
import time
from robustrc import _kernels
from robustrc.harness import TrialConfig, run_trial
from robustrc.reservoir import NoiseSpec, ReservoirSpec
cfg = TrialConfig(ReservoirSpec("ESN", 100, 0.1, l=0.2, lam=0.9), NoiseSpec(0.02, 0.01), task="NARMA10")
run_trial(cfg)
t = time.perf_counter()
for i in range(5):
    run_trial(cfg)
print(_kernels.backend(), (time.perf_counter() - t) / 5)
"""


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_case(build, n, steps, repeat):
    g = np.random.default_rng(0)
    inst = build(g)
    inputs = g.uniform(-1, 1, steps)
    sel_u = g.random((steps, n))
    deltas = 0.01 * g.standard_normal((steps, n))
    out = np.empty((steps, inst.readout_nodes.size + 1))

    def run(kernel):
        x = inst.state.copy()
        kernel(inst.rows, inst.indptr, inst.cols, inst.vals.copy(), inst.w_res.copy(), inst.w_in, x,
               inputs, 0, inst.readout_nodes, sel_u, deltas, out)
        return x

    if _kernels.HAVE_NUMBA:
        run(_kernels.drive_numba)  # compile outside the timing
        t_numba = best_of(lambda: run(_kernels.drive_numba), repeat)
        agree = np.allclose(run(_kernels.drive_numba), run(_kernels.drive_numpy), rtol=0, atol=1e-12)
    else:
        t_numba, agree = float("nan"), True
    t_numpy = best_of(lambda: run(_kernels.drive_numpy), repeat)
    return t_numba, t_numpy, agree


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=4200)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--no-trial", action="store_true", help="skip the end-to-end trial timing")
    args = p.parse_args()

    print(f"drive kernel, {args.steps} steps, best of {args.repeat}")
    print(f"{'case':24s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  agree")
    for name, build, n in CASES:
        tn, tp, agree = bench_case(build, n, args.steps, args.repeat)
        print(f"{name:24s} {1e3 * tn:10.2f} {1e3 * tp:10.2f} {tp / tn:8.1f}x  {agree}")

    if not args.no_trial:
        print("\none ESN N=100 NARMA10 trial (train + test, noisy)")
        for flag in ("0", "1"):
            env = dict(os.environ, ROBUSTRC_DISABLE_NUMBA=flag)
            res = subprocess.run([sys.executable, "-c", TRIAL], env=env, capture_output=True, text=True,
                                 check=True)
            backend, secs = res.stdout.split()
            print(f"{backend:8s} {1e3 * float(secs):8.1f} ms")


if __name__ == "__main__":
    main()
