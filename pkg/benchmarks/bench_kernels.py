"""Time the numba kernels against the pure-numpy fallbacks on synthetic text.

    python benchmarks/bench_kernels.py [--docs 2000] [--words 200] [--repeat 5]

Both backends are checked for identical output before timing.
"""
import argparse
import random
import time

import numpy as np

from corpuskit import kernels


def make_inputs(n_docs, n_words, seed=0):
    rng = random.Random(seed)
    vocab = ["".join(rng.choice("abcdefghijklmnopqrstuvwxyz") for _ in range(rng.randint(2, 9)))
             for _ in range(5000)]
    units, offsets = [], [0]
    for _ in range(n_docs):
        units.extend(rng.choices(vocab, k=rng.randint(n_words // 2, n_words)))
        offsets.append(len(units))
    return units, np.array(offsets, dtype=np.int64)


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--docs", type=int, default=2000)
    ap.add_argument("--words", type=int, default=200)
    ap.add_argument("--perm", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if "numba" not in kernels.IMPLEMENTATIONS:
        print("numba backend unavailable (not installed or CORPUSKIT_DISABLE_NUMBA set)")
    units, offsets = make_inputs(args.docs, args.words)
    buf, starts, ends = kernels.units_to_buffer(units)
    rng = np.random.Generator(np.random.PCG64(1))
    a = rng.integers(1, 2**63, args.perm, dtype=np.uint64) | np.uint64(1)
    b = rng.integers(0, 2**63, args.perm, dtype=np.uint64)
    values = rng.integers(0, 50, 200_000).astype(np.uint64)

    np_impl = kernels.IMPLEMENTATIONS["numpy"]
    uh = np_impl["unit_hashes"](buf, starts, ends)
    grams, gram_offsets = np_impl["ngram_hashes"](uh, offsets, 5)
    cases = {
        "unit_hashes": lambda impl: impl["unit_hashes"](buf, starts, ends),
        "ngram_hashes": lambda impl: impl["ngram_hashes"](uh, offsets, 5),
        "minhash_signatures": lambda impl: impl["minhash_signatures"](grams, gram_offsets, a, b),
        "dup_fraction": lambda impl: impl["dup_fraction"](values, 3),
    }

    print(f"{len(units):,} units in {args.docs:,} docs, {len(grams):,} 5-grams, {args.perm} permutations")
    print(f"{'kernel':<20}{'numpy s':>10}{'numba s':>10}{'speedup':>9}")
    for name, call in cases.items():
        t_np = best_of(lambda: call(np_impl), args.repeat)
        line = f"{name:<20}{t_np:>10.4f}"
        if "numba" in kernels.IMPLEMENTATIONS:
            nb_impl = kernels.IMPLEMENTATIONS["numba"]
            ref, got = call(np_impl), call(nb_impl)  # also warms the jit
            same = all(np.array_equal(x, y) for x, y in zip(ref, got)) if isinstance(ref, tuple) \
                else np.array_equal(ref, got)
            t_nb = best_of(lambda: call(nb_impl), args.repeat)
            line += f"{t_nb:>10.4f}{t_np / t_nb:>8.1f}x" + ("" if same else "  MISMATCH")
        print(line)


if __name__ == "__main__":
    main()
