"""Compare the compiled and pure-Python kernel backends.

Usage::

    python benchmarks/bench_kernels.py [--repeat N] [--no-closed-loop]

Times the three hot kernels (RK4 closed-loop integration, the delay-free
flow used as an oracle, and the successive-approximation operator) on the
example4 plant, checks that both backends agree bit for bit, and finally
times a short closed-loop run with each backend in a fresh interpreter.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from predictorlab import kernels
from predictorlab.plant import catalog_get
from predictorlab.predictor import _q_operator


def best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def kernel_cases(model, plant):
    n = plant.n
    x = np.array([1.0, -0.5])
    z = np.zeros(n)
    steps = 2000
    dvals = 0.5 * np.sin(np.linspace(0.0, 2.0, 2 * steps + 1))
    U = np.linspace(0.0, 0.25, 257)
    durations = np.array([0.1, 0.2, 0.2])
    values = np.array([1.0, -2.0, 0.5])
    return {
        "integrate (2000 RK4 steps)": lambda: model.integrate(x, z, 0.0, 1e-3, steps, -1.0, -1.0,
                                                             dvals)[0][-1],
        "flow (oracle, h=1e-4)": lambda: model.flow(x, durations, values, 1e-4),
        "q_operator (l=6, n_q=256)": lambda: _q_operator(model, x, U, 6, 0.25, 256),
    }


CLOSED_LOOP = ("import time; from predictorlab import SimConfig, run_closed_loop;"
               "t=time.perf_counter(); run_closed_loop(SimConfig(t_end=10.0, monitors=False));"
               "print(time.perf_counter()-t)")


def closed_loop_time(pure: bool) -> float:
    env = dict(os.environ)
    env["PREDICTORLAB_PURE_PYTHON"] = "1" if pure else "0"
    out = subprocess.run([sys.executable, "-c", CLOSED_LOOP], env=env, check=True,
                         capture_output=True, text=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-closed-loop", action="store_true")
    args = ap.parse_args(argv)

    plant = catalog_get("example4")
    if not kernels.can_compile(plant):
        print("compiled extension not available; nothing to compare")
        return 1
    py = kernels.make_model(plant, np.array([-6.0, -9.0]), np.array([1.0, 0.0]), backend="python")
    cc = kernels.make_model(plant, np.array([-6.0, -9.0]), np.array([1.0, 0.0]), backend="compiled")
    print(f"{'kernel':<30}{'python [ms]':>14}{'compiled [ms]':>16}{'speed-up':>10}  identical")
    py_cases, cc_cases = kernel_cases(py, plant), kernel_cases(cc, plant)
    for name in py_cases:
        tp, op = best_of(py_cases[name], args.repeat)
        tc, oc = best_of(cc_cases[name], args.repeat)
        same = np.array_equal(np.asarray(op), np.asarray(oc))
        print(f"{name:<30}{tp * 1e3:>14.3f}{tc * 1e3:>16.3f}{tp / tc:>10.1f}  {same}")
    if not args.no_closed_loop:
        tp = closed_loop_time(pure=True)
        tc = closed_loop_time(pure=False)
        print(f"{'closed loop (t_end=10)':<30}{tp * 1e3:>14.1f}{tc * 1e3:>16.1f}{tp / tc:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
