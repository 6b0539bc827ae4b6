"""Benchmark the two n-gram hashing lanes (pure Python vs Cython).

Usage: python3 benchmarks/bench_features.py [--n-texts 20000] [--buckets 4096]
"""

import argparse
import random
import string
import time

from belforge.features import kernel_lanes


def make_texts(n, rng):
    words = ["".join(rng.choices(string.ascii_lowercase, k=rng.randint(4, 12)))
             for _ in range(500)]
    return ["^" + " ".join(rng.choices(words, k=rng.randint(1, 3))) + "$"
            for _ in range(n)]


def bench(kernel, texts, n_min, n_max, buckets, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for text in texts:
            kernel(text, n_min, n_max, buckets)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-texts", type=int, default=20000)
    ap.add_argument("--buckets", type=int, default=4096)
    ap.add_argument("--n-min", type=int, default=2)
    ap.add_argument("--n-max", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    texts = make_texts(args.n_texts, rng)
    lanes = kernel_lanes()
    if "cython" not in lanes:
        print("note: compiled lane unavailable, benchmarking python only")

    # sanity: identical output before timing
    if len(lanes) == 2:
        for text in texts[:200]:
            a = lanes["python"](text, args.n_min, args.n_max, args.buckets)
            b = lanes["cython"](text, args.n_min, args.n_max, args.buckets)
            assert a == b, f"lane mismatch on {text!r}"

    results = {}
    for name, kernel in lanes.items():
        seconds = bench(kernel, texts, args.n_min, args.n_max, args.buckets)
        results[name] = seconds
        print(f"{name:>7}: {seconds:.3f}s for {args.n_texts} texts "
              f"({args.n_texts / seconds:,.0f} texts/s)")
    if len(results) == 2:
        print(f"speedup: {results['python'] / results['cython']:.1f}x")


if __name__ == "__main__":
    main()
