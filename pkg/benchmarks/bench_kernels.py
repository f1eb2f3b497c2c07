"""Compare the compiled kernels with the numpy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 100000] [--repeat 5]

Prints the best-of-``repeat`` wall time of each kernel under both backends
and the speed-up, for single kernels, one Dykstra projection of the discrete
solver and a short estimator run.  Both backends are also checked to agree on the inputs
used for timing.
"""
import argparse
import timeit

import numpy as np

from copulapid.copula import CopulaFamily, kernels
from copulapid.oracle import _MarginalPolytope, quantize_model

THETA = {
    CopulaFamily.GAUSSIAN: 0.6,
    CopulaFamily.CLAYTON: 2.0,
    CopulaFamily.CLAYTON180: 2.0,
    CopulaFamily.GUMBEL: 2.0,
    CopulaFamily.GUMBEL180: 2.0,
    CopulaFamily.FRANK: 5.0,
}


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_copula(n, repeat):
    rng = np.random.default_rng(0)
    u, v, w = rng.uniform(1e-6, 1 - 1e-6, (3, n))
    rows = []
    for fam, th in THETA.items():
        for name, args in (("logpdf", (u, v)), ("h", (u, v)), ("hinv", (w, v)), ("logpdf_grad", (u, v))):
            times, outs = {}, {}
            for backend in ("python", "compiled"):
                kernels.use_backend(backend)
                fn = getattr(kernels, name)
                outs[backend] = fn(fam, th, *args)
                times[backend] = best_time(lambda: fn(fam, th, *args), repeat)
            a, b = outs["python"], outs["compiled"]
            if isinstance(a, tuple):
                a, b = a[0], b[0]
            agree = np.allclose(a, b, rtol=1e-8, atol=1e-10)
            rows.append((f"{fam.name.lower()}.{name}", times["python"], times["compiled"], agree))
    return rows


def bench_dykstra(repeat):
    joint = quantize_model("M1", 0.5, 0.4, 0.3, 16, 3)
    poly = _MarginalPolytope(joint.p)
    x = joint.p.ravel()[poly.idx]
    z = x - 0.5 * x * np.log(np.maximum(x, 1e-300))
    times, outs = {}, {}
    for backend in ("python", "compiled"):
        kernels.use_backend(backend)
        outs[backend] = poly.project(z, scale=np.maximum(x, 1e-12))
        times[backend] = best_time(lambda: poly.project(z, scale=np.maximum(x, 1e-12)), repeat)
    agree = np.allclose(outs["python"], outs["compiled"], rtol=1e-8, atol=1e-14)
    return [("dykstra projection (768 cells)", times["python"], times["compiled"], agree)]


def bench_training(repeat, iterations=100):
    from copulapid.estimator import EstimatorConfig, train_unique
    from copulapid.pseudoobs import pseudo_observations
    from copulapid.simgen import gen_gaussian_triple

    pseudo = pseudo_observations(gen_gaussian_triple(0.8, 0.4, 0.32, 3000, 0))
    cfg = EstimatorConfig(iterations=iterations, window=10)
    times, outs = {}, {}
    for backend in ("python", "compiled"):
        kernels.use_backend(backend)
        outs[backend] = train_unique(pseudo, cfg).estimate
        times[backend] = best_time(lambda: train_unique(pseudo, cfg), max(1, repeat // 2))
    agree = abs(outs["python"] - outs["compiled"]) < 1e-6
    return [(f"train_unique ({iterations} iterations)", times["python"], times["compiled"], agree)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=100_000, help="points per kernel call")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if "compiled" not in kernels.available_backends():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    previous = kernels.BACKEND
    try:
        rows = bench_copula(args.n, args.repeat) + bench_dykstra(args.repeat) + bench_training(args.repeat)
    finally:
        kernels.use_backend(previous)
    print(f"{'kernel':32s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speed-up':>9s}  agree")
    for name, tp, tc, ok in rows:
        print(f"{name:32s} {1e3 * tp:12.3f} {1e3 * tc:14.3f} {tp / tc:9.1f}  {'yes' if ok else 'NO'}")


if __name__ == "__main__":
    main()
