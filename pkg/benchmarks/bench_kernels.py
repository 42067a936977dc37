"""Compare the compiled kernels with the numpy fallback.

Times the explicit time-stepping kernels (the hot loop of every explicit run)
on an interval and on a disk at a few resolutions and prints a table of
seconds per step and the speed-up.

    python3 benchmarks/bench_kernels.py [--steps 200] [--repeat 3]
"""

import argparse
import time

import numpy as np

from cylflow import ConstantAngle, Interval, StarShaped, build_geometry, contact_angle_field
from cylflow.config import random_smooth
from cylflow.flow import FlowParams, stable_dt
from cylflow.kernels import available_backends


def _case_1d(n):
    g = build_geometry(Interval(-1.0, 1.0, n))
    th = contact_angle_field(g, ConstantAngle(np.pi / 3))
    sl, sr = th.slopes_1d
    u0 = random_smooth(g, np.random.default_rng(0))
    dt = stable_dt(g, FlowParams(A=0.5, theta=th))

    def run(k, steps):
        u, ut = u0.copy(), np.empty_like(u0)
        k.explicit_1d(u, g.h, 0.5, sl, sr, dt, steps, ut)
        return u

    return f"interval n={n}", run


def _case_2d(nr):
    g = build_geometry(StarShaped((1.0, 0.0, 0.3), nr=nr))
    th = contact_angle_field(g, ConstantAngle(np.pi / 3))
    u0 = random_smooth(g, np.random.default_rng(0))
    dt = stable_dt(g, FlowParams(A=0.5, theta=th))

    def run(k, steps):
        u, ut = u0.copy(), np.empty_like(u0)
        k.explicit_2d(u, g.metric, th.bnd, g.pole_weights, g.dxi, g.deta, 0.5, dt, steps, ut)
        return u

    return f"star nr={nr} ntheta={g.ntheta}", run


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    backends = available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    cases = [_case_1d(201), _case_1d(1601), _case_2d(16), _case_2d(32), _case_2d(64)]
    print(f"{'case':<28}{'python s/step':>15}{'compiled s/step':>17}{'speed-up':>10}{'max diff':>11}")
    for name, run in cases:
        tp, up = best_of(lambda: run(backends["python"], args.steps), args.repeat)
        row = f"{name:<28}{tp / args.steps:>15.3e}"
        if "compiled" in backends:
            tc, uc = best_of(lambda: run(backends["compiled"], args.steps), args.repeat)
            row += f"{tc / args.steps:>17.3e}{tp / tc:>10.1f}{np.max(np.abs(up - uc)):>11.1e}"
        print(row)


if __name__ == "__main__":
    main()
