#!/usr/bin/env python3
"""Optimal figure of merit G against polynomial order N for the single photon.

Writes ``N,G`` and prints the relative change between consecutive even orders.

    python scripts/optimal_g_curve.py --n-max 24 --out results/G_curve.csv
"""

from __future__ import annotations

import argparse
import csv
import time
from pathlib import Path

from nonclassical.elementary import radial_optimum
from nonclassical.phase_space import StateModel


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-min", type=int, default=1)
    ap.add_argument("--n-max", type=int, default=20)
    ap.add_argument("--out", type=Path, default=Path("results/G_curve.csv"))
    args = ap.parse_args()

    model = StateModel()
    rows = []
    t0 = time.perf_counter()
    for N in range(args.n_min, args.n_max + 1):
        opt = radial_optimum(model, N)
        rows.append((N, opt.G))
        print(f"N={N:2d}  G={opt.G:+.15f}  |grad|={opt.grad_norm:.1e}  ({time.perf_counter() - t0:.1f}s)")

    by_n = dict(rows)
    for N in range(4, args.n_max + 1, 2):
        if N - 4 in by_n and N - 4 >= 4:
            prev = by_n[N - 4]
            print(f"|G({N}) - G({N - 4})| / |G({N - 4})| = {abs(by_n[N] - prev) / abs(prev):.4f}")

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["N", "G"])
        w.writerows((N, "%.17g" % G) for N, G in rows)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
