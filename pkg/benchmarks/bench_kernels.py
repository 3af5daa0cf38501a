"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel and shape with the best-of-N time for each
backend and the speedup. Without a built extension only numpy is timed.
"""
import argparse
import timeit

import numpy as np

from prgf.kernels import available_backends


def cases(rng):
    for q, D in ((10, 512), (50, 3072), (100, 268203)):
        W = rng.standard_normal((q, D))
        v = rng.standard_normal(D)
        v /= np.linalg.norm(v)
        deltas = rng.standard_normal(q)
        yield f"normalize_rows q={q} D={D}", lambda k, W=W: k.normalize_rows(W)
        yield f"combine_biased q={q} D={D}", lambda k, W=W, v=v: k.combine_biased(W, v, 0.3)
        yield f"fd_average     q={q} D={D}", lambda k, W=W, d=deltas: k.fd_average(d, W)
    yield "grid_argmax_F  n=1e5", lambda k: k.grid_argmax_F(0.16, 512, 50, 100_000)
    yield "grid_argmax_F_subspace n=1e5", lambda k: k.grid_argmax_F_subspace(0.16, 0.5, 64, 50, 100_000)
    yield "grid_argmin_averaging n=1e5", lambda k: k.grid_argmin_averaging(0.3, 0.2, 0.06, 100_000)
    yield "F_full scalar x1000", lambda k: [k.F_full(0.1 * (i % 10), 0.16, 512, 50) for i in range(1000)]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    backends = available_backends()
    names = sorted(backends, key=lambda n: n != "numpy")
    print(f"{'kernel':<36}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(np.random.default_rng(args.seed)):
        times = []
        for n in names:
            k = backends[n]
            number = max(1, int(0.05 / max(timeit.timeit(lambda: fn(k), number=1), 1e-7)))
            times.append(min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number)
        row = f"{label:<36}" + "".join(f"{t * 1e6:>10.1f}us" for t in times)
        if len(times) > 1:
            row += f"{times[0] / times[1]:>11.2f}x"
        print(row)


if __name__ == "__main__":
    main()
