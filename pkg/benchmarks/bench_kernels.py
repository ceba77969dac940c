"""Time the compiled and pure-Python kernels on pipeline-sized inputs.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel runs on the shapes one pipeline case produces (T=21 lead times,
20 members, a 45-day training window). Reported times are the best of
``--repeat`` rounds, in microseconds per call.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from dualecc._backend import available_backends


def workloads(rng):
    T, N, D = 21, 20, 45
    B = rng.normal(size=(T, T))
    A = np.ascontiguousarray(B @ B.T)
    m = rng.uniform(2, 14, D)
    s2 = rng.uniform(0.2, 2, D)
    y = m + 0.5 + rng.normal(size=D) * np.sqrt(1 + s2)
    x0 = np.array([0.0, 1.0, 0.1, 1.0])
    X = np.ascontiguousarray(rng.gamma(2, 2, (T, N)))
    obs = rng.gamma(2, 2, T)
    return {
        "jacobi_eigh (21x21)": lambda k: k.jacobi_eigh(A),
        "emos_nelder_mead (45 pairs)": lambda k: k.emos_nelder_mead(m, s2, y, x0),
        "energy_score (21x20)": lambda k: k.energy_score(X, obs),
        "variogram_score (21x20)": lambda k: k.variogram_score(X, obs, 0.5),
        "crps_ensemble (20)": lambda k: k.crps_ensemble(X[0], obs[0]),
    }


def bench(repeat: int) -> dict:
    backends = available_backends()
    jobs = workloads(np.random.default_rng(0))
    out = {}
    for name, job in jobs.items():
        out[name] = {}
        for bname, k in sorted(backends.items()):
            timer = timeit.Timer(lambda: job(k))
            n, _ = timer.autorange()
            best = min(timer.repeat(repeat, n)) / n
            out[name][bname] = best * 1e6
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    results = bench(args.repeat)
    names = sorted({b for r in results.values() for b in r})
    print(f"{'kernel':<30}" + "".join(f"{n + ' [us]':>16}" for n in names) + f"{'speed-up':>12}")
    for kernel, r in results.items():
        ratio = r["python"] / r["cython"] if "cython" in r else float("nan")
        print(f"{kernel:<30}" + "".join(f"{r[n]:>16.1f}" for n in names) + f"{ratio:>11.1f}x")
    if "cython" not in names:
        print("compiled extension not importable; only the fallback was timed", file=sys.stderr)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
