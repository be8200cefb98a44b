"""Time the compiled integration kernel against its pure-Python twin.

    python3 benchmarks/bench_kernel.py [--days 20] [--repeat 3]
"""
import argparse
import time

import numpy as np

from swff import kernel
from swff.params import DEFAULT
from swff.rotation import _start


def bench(fn, p, days, chs, repeat):
    y0, r = _start(p, chs)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(y0.copy(), int(r.wake), int(r.scn_high), 0.0, days * 24.0, p.packed(), int(chs),
                 1e-9, 1e-11, 1e-9, 1e-3, 1.0, 0, 1, 0)
        best = min(best, time.perf_counter() - t)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=float, default=20.0)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    if kernel.BACKEND != "cython":
        print("compiled kernel not available (backend: python); rebuild with Cython to compare")
        return
    print(f"{'case':<14}{'compiled s':>12}{'python s':>12}{'speedup':>10}{'steps':>8}{'max |dy|':>12}")
    for name, p, chs in (("default", DEFAULT, False), ("k=0.36", DEFAULT.with_(k=0.36), False),
                         ("hard switch", DEFAULT.with_(k=0.5), True)):
        tc, oc = bench(kernel.run, p, a.days, chs, a.repeat)
        tp, op = bench(kernel.py_run, p, a.days, chs, 1)
        dy = float(np.max(np.abs(oc[2] - op[2])))
        print(f"{name:<14}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}{oc[7]:>8d}{dy:>12.2e}")


if __name__ == "__main__":
    main()
