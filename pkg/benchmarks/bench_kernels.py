"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Times the Gaussian stream and the batched quadratic PGD loop on each
available backend, checks that both produce the same numbers, and prints
one line per workload.
"""

import argparse
import time

import numpy as np

from covnoise import _backend
from covnoise.covariance import Explicit
from covnoise.optimizer import RunConfig, run_quadratic_batch
from covnoise.quadratic import TheoremDecay, make_quadratic, random_spd
from covnoise.rng import Rng


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def normals_workload(name):
    kern = _backend.get(name)
    key = Rng(0).key
    return lambda: kern.normals(key, 0, 2_000_000)


def pgd_workload(name, dim, steps, seeds):
    p = make_quadratic(random_spd(dim, Rng(0), 10.0))
    spec = Explicit(p.sqrt())
    cfg = RunConfig(steps, TheoremDecay.for_problem(p), log_every=100)
    return lambda: np.array([lg.loss for lg in run_quadratic_batch(p, spec, cfg, range(seeds), backend=name)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    names = _backend.available()
    workloads = [
        ("normals n=2e6", normals_workload),
        ("pgd d=10 K=1e4 seeds=100", lambda b: pgd_workload(b, 10, 10_000, 100)),
        ("pgd d=2 K=2e4 seeds=200", lambda b: pgd_workload(b, 2, 20_000, 200)),
    ]
    if "cython" not in names:
        print("compiled extension not built; timing the numpy backend only")
    for label, make in workloads:
        times, outs = {}, {}
        for name in names:
            times[name], outs[name] = best_of(make(name), args.repeat)
        line = f"{label:28s}" + "".join(f"  {n}={times[n] * 1e3:9.1f} ms" for n in names)
        if len(names) == 2:
            a, b = outs["python"], outs["cython"]
            dev = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
            line += f"  speedup={times['python'] / times['cython']:6.1f}x  max_rel_diff={dev:.1e}"
        print(line)


if __name__ == "__main__":
    main()
