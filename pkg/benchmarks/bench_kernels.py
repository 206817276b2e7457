"""Compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time of each backend and the speed-up, plus the largest
difference between their outputs.
"""

import argparse
import timeit

import numpy as np

from qpeuler import _kernels_py as py

try:
    from qpeuler._ext import _kernels as cy
except ImportError:  # pragma: no cover
    cy = None


def _rk4_case(n=16385):
    y = np.linspace(0.0, 1.0, n)
    h = y[1] - y[0]
    q = -60.0 / (1.0 + np.exp(160.0 * (y - 0.5)))
    qm = -60.0 / (1.0 + np.exp(160.0 * (y[:-1] + 0.5 * h - 0.5)))
    return (q, qm, h, 0.0, 1.0, 0.0)


def _invert_case(npts=20000, order=12, seed=0):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(order + 1, npts)) * 0.1 ** np.arange(order + 1)[:, None]
    c[1] = 1.0 + np.abs(c[1])  # monotone on the bracket
    lo = np.full(npts, -0.1)
    hi = np.full(npts, 0.1)
    target = c[0] + 0.05 * c[1] * rng.uniform(-1, 1, npts)
    return (np.ascontiguousarray(c), target, lo, hi)


def bench(name, args, repeat, number=1):
    rows = []
    outs = {}
    for label, mod in (("python", py), ("cython", cy)):
        if mod is None:
            continue
        fn = getattr(mod, name)
        outs[label] = fn(*args)
        t = min(timeit.repeat(lambda: fn(*args), repeat=repeat, number=number)) / number
        rows.append((label, t))
    diff = None
    if len(outs) == 2:
        a, b = outs["python"], outs["cython"]
        a = a[:2] if isinstance(a, tuple) else (a,)
        b = b[:2] if isinstance(b, tuple) else (b,)
        diff = max(float(np.max(np.abs(np.asarray(x) - np.asarray(z)))) for x, z in zip(a, b))
    return rows, diff


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    for name, case in (("rk4_linear2", _rk4_case()), ("taylor_invert", _invert_case())):
        rows, diff = bench(name, case, args.repeat)
        times = dict(rows)
        line = "  ".join(f"{k}={v * 1e3:9.3f} ms" for k, v in rows)
        speed = f"  speed-up x{times['python'] / times['cython']:.1f}" if "cython" in times else ""
        print(f"{name:14s} {line}{speed}  max|diff|={diff if diff is not None else float('nan'):.2e}")


if __name__ == "__main__":
    main()
