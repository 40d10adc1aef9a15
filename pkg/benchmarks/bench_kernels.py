"""Compare the compiled and pure-Python match enumeration kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import random
import time

from gopt_mini import randgen
from gopt_mini.kernels import BACKENDS
from gopt_mini.oracle import count_matches


def workload(seed: int = 0, n: int = 20):
    rng = random.Random(seed)
    schema = randgen.random_schema(rng, 2, 2)
    cases = []
    for _ in range(n):
        g = randgen.random_graph(rng, schema, 60, 400)
        p = randgen.random_pattern(rng, schema, 4, min_vertices=3)
        cases.append((p, g))
    return cases


def bench(backend: str, cases, repeat: int) -> tuple[float, int]:
    best = float("inf")
    total = 0
    for _ in range(repeat):
        start = time.perf_counter()
        total = sum(count_matches(p, g, backend) for p, g in cases)
        best = min(best, time.perf_counter() - start)
    return best, total


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cases = workload()
    for p, g in cases:
        g.arrays  # build the CSR arrays outside the timed region
    results = {b: bench(b, cases, args.repeat) for b in sorted(BACKENDS)}
    counts = {total for _, total in results.values()}
    if len(counts) != 1:
        raise SystemExit(f"backends disagree: {results}")
    for b, (secs, total) in results.items():
        print(f"{b:>9}: {secs * 1000:9.1f} ms  ({total} matches)")
    if "compiled" in results:
        print(f"  speedup: {results['python'][0] / results['compiled'][0]:.1f}x")
    else:
        print("  compiled extension not built; only the Python kernel ran")


if __name__ == "__main__":
    main()
