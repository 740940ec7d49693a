#!/usr/bin/env python3
"""Middle-point quadrature error E of optimized finite-cut plans against m.

    python scripts/finite_cut_error.py --lambdas 2 5 10 --ms 4 8 12 16 20 24
"""

from __future__ import annotations

import argparse
import csv
from pathlib import Path

from nonclassical.backprojection import finite_cut_plan, uniform_finite_plan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambdas", type=float, nargs="+", default=[1.0, 2.0, 5.0])
    ap.add_argument("--ms", type=int, nargs="+", default=[4, 8, 12, 16, 20])
    ap.add_argument("--out", type=Path, default=Path("results/finite_cut_error.csv"))
    args = ap.parse_args()

    rows = []
    for lam in args.lambdas:
        for m in args.ms:
            plan = finite_cut_plan(lam, m)
            naive = uniform_finite_plan(lam, m).error
            rows.append((lam, m, plan.error, naive))
            print(f"lambda={lam:g}  m={m:2d}  E={plan.error:.4e}  (uniform cuts {naive:.4e}, {plan.sweeps} sweeps)")

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "m", "E", "E_uniform"])
        w.writerows((lam, m, "%.17g" % e, "%.17g" % n) for lam, m, e, n in rows)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
