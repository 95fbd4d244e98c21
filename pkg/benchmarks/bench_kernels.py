"""Compare the compiled kernels with the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--steps N] [--paths P] [--repeat R]
"""
import argparse
import time

import numpy as np

from sklab import _kernels
from sklab.generator import constant_coefficients
from sklab.geometry import half_line, orthant
from sklab.simulate import SimConfig, simulate_ensemble
from sklab.skorokhod import DiscretePath, SkorokhodStepper


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_sp_path(domain, steps, repeat, seed=0):
    rng = np.random.default_rng(seed)
    J = domain.dimension
    psi = DiscretePath(np.arange(steps + 1) * 1e-3,
                       np.vstack([np.ones((1, J)), 1 + np.cumsum(rng.standard_normal((steps, J)) * 0.05, axis=0)]))
    out = {}
    for name in ("compiled", "python"):
        st = SkorokhodStepper(domain, backend=name)
        out[name] = best_of(lambda: st.path(psi), repeat)
    return out


def bench_ensemble(domain, paths, steps, repeat):
    J = domain.dimension
    coeffs = constant_coefficients(np.zeros(J), np.eye(J))
    cfg = SimConfig(1e-3, steps * 1e-3, paths, 1, tuple(np.zeros(J)))
    return {name: best_of(lambda: simulate_ensemble(domain, coeffs, cfg, backend=name), repeat)
            for name in ("compiled", "python")}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--paths", type=int, default=200)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if _kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")

    c = 0.5
    cases = [
        ("sp_path  half-line", lambda: bench_sp_path(half_line(), args.steps, args.repeat)),
        ("sp_path  orthant-2 oblique", lambda: bench_sp_path(orthant(2, [[1, -c], [-c, 1]]), args.steps, args.repeat)),
        ("sp_path  orthant-3 oblique",
         lambda: bench_sp_path(orthant(3, np.eye(3) + 0.1 * (np.ones((3, 3)) - np.eye(3))), args.steps, args.repeat)),
        ("ensemble half-line", lambda: bench_ensemble(half_line(), args.paths, 1000, args.repeat)),
        ("ensemble orthant-2 oblique",
         lambda: bench_ensemble(orthant(2, [[1, -c], [-c, 1]]), args.paths, 1000, args.repeat)),
    ]
    print(f"{'case':30s} {'compiled [s]':>13s} {'python [s]':>11s} {'speedup':>8s}")
    for name, fn in cases:
        r = fn()
        print(f"{name:30s} {r['compiled']:13.4f} {r['python']:11.4f} {r['python'] / r['compiled']:8.1f}x")


if __name__ == "__main__":
    main()
