"""Time the compiled and NumPy kernels on the per-loan allocation step.

    python benchmarks/bench_kernels.py [--n 20000] [--repeat 20] [--threads 1 4]
"""

import argparse
import statistics
import time

import numpy as np

from rrmix import kernels

C = np.array([-np.inf, 0.0, 0.6, 1.2, np.inf])
MU = np.array([-5.61, -1.0, 0.3, 5.61])
S2 = np.array([0.01, 0.25, 0.16, 0.0004])


def _time(fn, repeat):
    fn()  # warm up
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return statistics.median(out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--threads", type=int, nargs="+", default=[1])
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    a = rng.normal(0.5, 1.0, args.n)
    y = np.where(rng.random(args.n) < 0.3, 5.612, rng.normal(0, 1.5, args.n))
    lo = rng.normal(4.0, 1.0, args.n)
    hi = lo + rng.uniform(0.01, 2.0, args.n)

    backends = [("python", kernels.python_backend)]
    if kernels.compiled_backend is not None:
        backends.append(("cython", kernels.compiled_backend))
    else:
        print("compiled kernels not built; timing the fallback only")

    print(f"n={args.n}, median of {args.repeat} runs")
    print(f"{'kernel':<12}{'backend':<10}{'threads':>8}{'ms':>10}{'speedup':>10}")
    for label, run in (
        ("draw_loans", lambda m, t: m.draw_loans(a, y, C, MU, S2, 7, t)),
        ("truncnorm", lambda m, t: m.truncnorm(a, lo, hi, 7, t)),
        ("log_weights", lambda m, t: m.log_weights(a, y, C, MU, S2)),
    ):
        base = None
        for name, mod in backends:
            for t in args.threads if name == "cython" else [1]:
                sec = _time(lambda: run(mod, t), args.repeat)
                base = base or sec
                print(f"{label:<12}{name:<10}{t:>8}{1e3 * sec:>10.2f}{base / sec:>9.1f}x")


if __name__ == "__main__":
    main()
