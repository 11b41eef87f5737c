"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from tecmrl._backend import available, load


def ql_case(rng, n=50_000, n_states=25):
    s = rng.integers(0, n_states, n)
    s_next = rng.integers(0, n_states, n)
    a = rng.integers(0, 5, n)
    r = rng.normal(size=n)
    done = (rng.random(n) < 0.1).astype(np.uint8)
    order = rng.permutation(n)

    def run(k):
        q = np.zeros((n_states, 5))
        visits = np.zeros((n_states, 5), dtype=np.int64)
        k.ql_sweep(q, visits, s, a, r, s_next, done, order, 0.1, 0.99)
        return q

    return run


def sim_case(rng, n_ep=2_000, mean_len=12):
    lengths = rng.integers(2, 2 * mean_len, n_ep)
    offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    total = int(offsets[-1])
    acts, best, worst = (rng.integers(0, 5, total) for _ in range(3))
    return lambda k: k.episode_similarity(acts, best, worst, offsets)[0]


def bench(fn, k, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(k)
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    backends = available()
    cases = {"ql_sweep": ql_case, "episode_similarity": sim_case}
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  identical")
    for name, make in cases.items():
        fn = make(np.random.default_rng(args.seed))
        results = {b: bench(fn, load(b), args.repeat) for b in backends}
        row = f"{name:<20}" + "".join(f"{results[b][0] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            speed = results["python"][0] / results["cython"][0]
            same = np.array_equal(results["python"][1], results["cython"][1])
            row += f"{speed:>9.1f}x  {same}"
        print(row)


if __name__ == "__main__":
    main()
