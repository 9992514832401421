"""Time the compiled BLEU kernel against the pure-Python fallback.

    python benchmarks/bench_bleu.py [--pairs 20000] [--repeat 5]

Pairs are drawn like the synthetic task's sentences (lengths 4-20 over a
500-word vocabulary). Scores from both backends are checked for equality
before timing.
"""
import argparse
import random
import timeit

from bandit_arena import _bleu_py

try:
    from bandit_arena import _bleu_kernel
except ImportError:  # extension not built
    _bleu_kernel = None


def make_pairs(n, seed=0, vocab=500):
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(vocab)]
    out = []
    for _ in range(n):
        ref = [rng.choice(words) for _ in range(rng.randint(4, 20))]
        hyp = [t if rng.random() < 0.7 else rng.choice(words) for t in ref[:rng.randint(4, len(ref))]]
        out.append((hyp, ref))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=20_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    pairs = make_pairs(args.pairs)
    backends = {"python": _bleu_py}
    if _bleu_kernel is not None:
        backends["cython"] = _bleu_kernel
        assert all(_bleu_kernel.smoothed_sentence_bleu(h, r) == _bleu_py.smoothed_sentence_bleu(h, r)
                   for h, r in pairs[:2_000])
    else:
        print("compiled kernel not available; timing the fallback only")

    best = {}
    for name, mod in backends.items():
        fn = mod.smoothed_sentence_bleu
        times = timeit.repeat(lambda: [fn(h, r) for h, r in pairs], number=1, repeat=args.repeat)
        best[name] = min(times)
        print(f"{name:>7}: {best[name]:.3f} s for {len(pairs)} pairs "
              f"({1e6 * best[name] / len(pairs):.1f} us/pair)")
    if "cython" in best:
        print(f"speed-up: {best['python'] / best['cython']:.1f}x")


if __name__ == "__main__":
    main()
