"""Fitted refinement order of the Young compensated sums against gamma + rho - 1.

    python scripts/young_rate_sweep.py [--n 4096] [--levels 6] [--csv out.csv]

Uses f = x = Weierstrass path of regularity gamma, so rho = gamma.
"""

import argparse
import csv
import sys

import numpy as np

from roughcalc.brownian import weierstrass_path
from roughcalc.grid import TimeGrid
from roughcalc.young import young_rate


def sweep(gammas, n, levels):
    grid = TimeGrid.uniform(n)
    rows = []
    for g in gammas:
        x = weierstrass_path(g, grid)
        fit = young_rate(x, x, g, g, levels)
        rows.append((g, fit.expected, float(fit.order)))
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--levels", type=int, default=6)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args()
    rows = sweep(np.arange(0.55, 0.96, 0.1), args.n, args.levels)
    w = csv.writer(open(args.csv, "w", newline="") if args.csv else sys.stdout, lineterminator="\n")
    w.writerow(["gamma", "expected_order", "fitted_order"])
    for r in rows:
        w.writerow([format(v, ".6g") for v in r])
