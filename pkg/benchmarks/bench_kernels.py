"""Compare the compiled kernels with the pure-Python fallback.

Two measurements per backend:

* the batched block kernels alone (LU solve, Cholesky solve, block mat-vec)
  on the subdomain blocks of a real level, and
* a complete FETI-DP solve (setup excluded) with the block-triangular
  preconditioner.

Usage::

    python benchmarks/bench_kernels.py --levels 3 --ratio 4 --repeat 20
"""

import argparse
import time

import numpy as np

from mlfetidp import kernels
from mlfetidp.coarse import Multilevel
from mlfetidp.decomposition import build_hierarchy
from mlfetidp.fem import StructuredGrid, assemble_global
from mlfetidp.krylov import gmres_right
from mlfetidp.precond import MFPreconditioner, assemble_saddle_system, condensed_rhs, make_coarse_solver


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build(levels, ratio, constraints, backend):
    h = build_hierarchy(levels, [ratio] * (levels - 1))
    return Multilevel(assemble_global(StructuredGrid(h.n)), h, constraints, backend)


def bench_backend(args, backend):
    ml = build(args.levels, args.ratio, args.constraints, backend)
    lv = ml.level(1)
    rng = np.random.default_rng(0)
    schur, saddle = lv.schur, lv.coarse.saddle
    x_int = rng.standard_normal(schur.interior.n)
    x_w = rng.standard_normal(schur.S_apply.n)
    x_sad = rng.standard_normal(saddle.n)
    out = {
        "cholesky solve": best_of(lambda: schur.interior.solve(x_int), args.repeat),
        "block matvec": best_of(lambda: schur.S_apply.matvec(x_w), args.repeat),
        "lu solve": best_of(lambda: saddle.solve(x_sad), args.repeat),
    }
    fg, _ = condensed_rhs(lv, ml.problem.f)
    system, rhs = assemble_saddle_system(lv, fg)
    prec = MFPreconditioner(lv, make_coarse_solver(ml, 1))
    its = []

    def run():
        its.append(gmres_right(system, prec, rhs, args.tol).iterations)

    out["fetidp-mf solve"] = best_of(run, max(1, args.repeat // 10))
    return out, its[-1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, default=3)
    ap.add_argument("--ratio", type=int, default=4)
    ap.add_argument("--constraints", default="c+e", choices=("c", "c+e"))
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    results = {}
    for b in backends:
        results[b], its = bench_backend(args, b)
        print(f"{b}: solve took {its} iterations")
    print(f"\nL={args.levels} ratio={args.ratio} constraints={args.constraints}, best of {args.repeat}\n")
    head = "| kernel | " + " | ".join(f"{b} [ms]" for b in backends)
    print(head + (" | speedup |" if len(backends) == 2 else " |"))
    print("|---" * (len(backends) + 1 + (len(backends) == 2)) + "|")
    for name in results["python"]:
        row = [f"{1e3 * results[b][name]:.3f}" for b in backends]
        extra = [f"{results['python'][name] / results['cython'][name]:.1f}x"] if len(backends) == 2 else []
        print("| " + " | ".join([name] + row + extra) + " |")
    if len(backends) == 1:
        print("\ncompiled kernels not available; only the fallback was measured")


if __name__ == "__main__":
    main()
