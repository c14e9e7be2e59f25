#!/usr/bin/env python3
"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5] [--json out.json]

Each kernel runs on the same random points under both backends; the table
reports the best-of-``repeat`` wall time, the speedup, and the largest
difference between the two outputs.  End-to-end rows time a full SVE
certificate and a covering search.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from torusendo import _backend, paper_example
from torusendo.certify import certify_strong_volume_expansion
from torusendo.transitivity import RegionCover, covering_witness


def _best(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _flat(out):
    if isinstance(out, tuple):
        return np.concatenate([np.ravel(np.asarray(o, dtype=float)) for o in out])
    return np.ravel(np.asarray(out, dtype=float))


def cases(f, n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.random(n), rng.random(n)
    sx, sy = np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64)
    args = f.kernel_args()
    px, py = rng.random(41), rng.random(41)
    return {
        "displacement": lambda k: k.displacement(*args, x, y),
        "jacobian": lambda k: k.jacobian(f.a_flat, *args, x, y),
        "torus_iterate(10)": lambda k: k.torus_iterate(f.a_flat, *args, x, y, 10),
        "lift_iterate(10)": lambda k: k.lift_iterate(f.a_flat, f.ai_flat, *args, x, y, sx, sy, 10),
        "relative_survival(40)": lambda k: k.relative_survival(
            f.a_flat, *args, px, py, *k.displacement(*args, px, py),
            1e-3 * (x - 0.5), 1e-3 * (y - 0.5), 0.5),
    }


def end_to_end(f):
    return {
        "certify_sve(m=1024)": lambda: certify_strong_volume_expansion(f, 1024).certified_margin,
        "covering(m=32)": lambda: covering_witness(f, RegionCover.from_ball((0, 0), 0.05), 32, 25).n,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", default=None)
    a = ap.parse_args(argv)

    f = paper_example()
    backends = _backend.available()
    rows = []
    prev = _backend.name
    try:
        for label, fn in cases(f, a.n, a.seed).items():
            times, outs = {}, {}
            for b in backends:
                _backend.use(b)
                times[b], outs[b] = _best(lambda: fn(_backend.kernels), a.repeat)
            diff = float(np.max(np.abs(_flat(outs[backends[0]]) - _flat(outs[backends[-1]]))))
            rows.append((label, times, diff))
        for label, fn in end_to_end(f).items():
            times, outs = {}, {}
            for b in backends:
                _backend.use(b)
                times[b], outs[b] = _best(fn, max(1, a.repeat // 2))
            rows.append((label, times, abs(float(outs[backends[0]]) - float(outs[backends[-1]]))))
    finally:
        _backend.use(prev)

    head = f"{'case':24s}" + "".join(f"{b + ' [ms]':>16s}" for b in backends) + f"{'speedup':>10s}{'max diff':>12s}"
    print(f"n = {a.n}, best of {a.repeat}, threads = {_backend.threads()}")
    print(head)
    print("-" * len(head))
    for label, times, diff in rows:
        sp = times.get("python", np.nan) / times.get("cython", np.nan) if "cython" in times else float("nan")
        print(f"{label:24s}" + "".join(f"{1e3 * times[b]:16.2f}" for b in backends) + f"{sp:10.1f}{diff:12.2e}")
    if a.json:
        with open(a.json, "w", encoding="utf-8") as fh:
            json.dump({"n": a.n, "repeat": a.repeat, "rows": [
                {"case": c, "times_s": t, "max_diff": d} for c, t, d in rows]}, fh, indent=2)


if __name__ == "__main__":
    main()
