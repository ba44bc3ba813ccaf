"""Time the numpy fallback against the compiled kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel and size with the median time of each backend.
"""
import argparse
import timeit

import numpy as np

from ntndiff import _backend, _pykernels
from ntndiff.spectral import dct_matrix


def cases(rng):
    for h in (16, 64):
        g = rng.standard_normal((4, h, h))
        m = dct_matrix(h)
        yield f"dct_apply 4x{h}x{h}", "dct_apply", (g, m, m)
        bits = (np.add.outer(np.arange(h), np.arange(h)) < h // 2).astype(np.uint8)
        yield f"band_substitute 4x{h}x{h}", "band_substitute", (g, g[::-1].copy(), bits, m, m)
    for k, n in ((3, 4), (5, 512), (50, 4096)):
        means = rng.standard_normal((k, n))
        args = (rng.standard_normal(n), means, np.log(np.full(k, 1 / k)), 0.8, 0.4, 0.5)
        yield f"gmm_posterior K={k} N={n}", "gmm_posterior", args
    for h in (16, 256):
        yield f"lbp_codes {h}x{h}", "lbp_codes", (rng.uniform(0, 255, (h, h)),)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    try:
        compiled = _backend.select("compiled")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    print(f"{'kernel':32s} {'python us':>11s} {'compiled us':>12s} {'speedup':>8s}")
    for label, name, call_args in cases(rng):
        times = []
        for mod in (_pykernels, compiled):
            fn = getattr(mod, name)
            timer = timeit.Timer(lambda: fn(*call_args))
            number, _ = timer.autorange()
            times.append(min(timer.repeat(args.repeat, number)) / number * 1e6)
        print(f"{label:32s} {times[0]:11.1f} {times[1]:12.1f} {times[0] / times[1]:7.2f}x")


if __name__ == "__main__":
    main()
