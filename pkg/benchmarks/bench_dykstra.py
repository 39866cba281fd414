"""Time the compiled Dykstra sweep against the pure-Python fallback.

Usage: python3 benchmarks/bench_dykstra.py [--sizes 4 6 8] [--repeats 5]
"""

import argparse
import time

import numpy as np

from convexmarket import kernels
from convexmarket.regions import GomRegion, HalfspaceTrimmedSimplex


def run(region, ys, backend):
    c = region.constraints
    out = []
    t0 = time.perf_counter()
    for y in ys:
        x, sweeps, _ = kernels.dykstra_box_slabs(y, c.lo, c.hi, c.indptr, c.indices, c.data,
                                                 c.slo, c.shi, backend=backend)
        out.append((x, sweeps))
    return time.perf_counter() - t0, out


def bench(name, region, count, repeats, seed):
    rng = np.random.default_rng(seed)
    ys = [rng.normal(0.5, 1.0, region.dimension) for _ in range(count)]
    row = {"case": name, "dim": region.dimension, "rows": region.constraints.n_rows}
    results = {}
    for backend in ("python", "compiled"):
        if backend == "compiled" and kernels.BACKEND != "compiled":
            continue
        best = min(run(region, ys, backend)[0] for _ in range(repeats))
        results[backend] = run(region, ys, backend)[1]
        row[backend] = best / count
    if "compiled" in results:
        row["max_diff"] = max(float(np.max(np.abs(a[0] - b[0])))
                              for a, b in zip(results["python"], results["compiled"]))
        row["sweeps"] = int(np.mean([s for _, s in results["compiled"]]))
    return row


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 6, 8])
    ap.add_argument("--count", type=int, default=10, help="projections per case")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cases = [("trimmed-simplex n=3", HalfspaceTrimmedSimplex(3, ((1.0, 0.0, 0.0),), (0.8,)))]
    cases += [(f"gom n={n}", GomRegion(n)) for n in args.sizes]

    print(f"compiled backend available: {kernels.BACKEND == 'compiled'}")
    print(f"{'case':<22}{'dim':>5}{'rows':>6}{'sweeps':>8}{'python ms':>12}{'compiled ms':>13}"
          f"{'speedup':>9}{'max |dx|':>11}")
    for name, region in cases:
        r = bench(name, region, args.count, args.repeats, args.seed)
        py = r["python"] * 1e3
        if "compiled" in r:
            co = r["compiled"] * 1e3
            print(f"{name:<22}{r['dim']:>5}{r['rows']:>6}{r['sweeps']:>8}{py:>12.3f}{co:>13.3f}"
                  f"{py / co:>8.1f}x{r['max_diff']:>11.1e}")
        else:
            print(f"{name:<22}{r['dim']:>5}{r['rows']:>6}{'-':>8}{py:>12.3f}{'-':>13}{'-':>9}{'-':>11}")


if __name__ == "__main__":
    main()
