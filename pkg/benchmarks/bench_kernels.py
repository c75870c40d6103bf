"""Compare the compiled and pure-Python sequence kernels.

    python3 benchmarks/bench_kernels.py [--lengths 8,16] [--repeat 3]

Length 32 works too, but pure-Python TER then takes several minutes.
"""
import argparse
import timeit

import numpy as np

from pararep import _pykernels

try:
    from pararep import _kernels
except ImportError:
    _kernels = None


def _pairs(n, length, vocab, seed):
    rng = np.random.default_rng(seed)
    return [(rng.integers(vocab, size=length).tolist(), rng.integers(vocab, size=length).tolist())
            for _ in range(n)]


def bench(impl, name, pairs, repeat):
    fn = {
        "edit_distance": lambda: [impl.edit_distance(a, b) for a, b in pairs],
        "lcs_length": lambda: [impl.lcs_length(a, b) for a, b in pairs],
        "ter_greedy": lambda: [impl.ter_greedy(a, b, 10, 50) for a, b in pairs],
    }[name]
    return min(timeit.repeat(fn, number=1, repeat=repeat)) / len(pairs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lengths", default="8,16")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--pairs", type=int, default=20)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; only the pure-Python timings are shown")
    print(f"{'kernel':<14} {'len':>4} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>8}")
    for length in (int(x) for x in args.lengths.split(",")):
        pairs = _pairs(args.pairs, length, 6, length)
        for name in ("edit_distance", "lcs_length", "ter_greedy"):
            n = pairs if name != "ter_greedy" or length <= 16 else pairs[:3]
            py = bench(_pykernels, name, n, args.repeat) * 1e3
            if _kernels is None:
                print(f"{name:<14} {length:>4} {py:>12.3f} {'-':>12} {'-':>8}")
                continue
            cy = bench(_kernels, name, n, args.repeat) * 1e3
            print(f"{name:<14} {length:>4} {py:>12.3f} {cy:>12.4f} {py / cy:>7.0f}x")


if __name__ == "__main__":
    main()
