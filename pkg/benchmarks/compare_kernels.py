"""Compare the compiled and pure-Python checker kernels.

Checks that both backends return identical assessments on the synthetic
benchmark frames, then times each over a small obstacle sweep.

    python3 benchmarks/compare_kernels.py [--reps 20] [--csv out.csv]
"""
import argparse
import csv
import sys

from trajcheck import bench, kernel
from trajcheck.checker import check_frame
from trajcheck.config import defaults
from trajcheck.policy import default_policy


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--obstacles", default="1,5,10,20,30")
    ap.add_argument("--horizon", type=float, default=5.0)
    ap.add_argument("--csv")
    args = ap.parse_args(argv)
    if not kernel.COMPILED_AVAILABLE:
        print("compiled kernel not built; nothing to compare", file=sys.stderr)
        return 1
    tree, cfg = default_policy(), defaults()
    counts = [int(s) for s in args.obstacles.split(",")]
    rows = []
    for n in counts:
        frame = bench.synthetic_frame(n, args.horizon, 1)
        a_py = check_frame(frame, tree, cfg, backend="python")
        a_cy = check_frame(frame, tree, cfg, backend="cython")
        if a_py.canonical_bytes() != a_cy.canonical_bytes():
            print(f"backends disagree at {n} obstacles", file=sys.stderr)
            return 1
        py = bench.time_cell(frame, tree, cfg, args.reps, 2, backend="python")[0]
        cy = bench.time_cell(frame, tree, cfg, args.reps, 2, backend="cython")[0]
        rows.append((n, args.horizon, py, cy, py / cy))
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("obstacles", "horizon_s", "python_median_us", "cython_median_us", "speedup"))
    for n, h, py, cy, sp in rows:
        w.writerow((n, f"{h:g}", f"{py:.1f}", f"{cy:.1f}", f"{sp:.1f}"))
    if args.csv:
        out.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
