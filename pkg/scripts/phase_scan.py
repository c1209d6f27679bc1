"""Dense (a, b) scan of the NLS existence diagram; writes a CSV of labels."""
import argparse
import csv
import sys

import numpy as np

from bose3body.functionals import B_CRIT
from bose3body.solver import SolverConfig, phase_diagram


def expected(a, b):
    if b < B_CRIT or (b == B_CRIT and a > 0):
        return "minimizer"
    return "marginal" if (b == B_CRIT and a == 0) else "collapse"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--a", type=float, nargs=3, default=[-1.0, 1.0, 5], metavar=("LO", "HI", "N"))
    ap.add_argument("--b", type=float, nargs=3, default=[0.8, 1.2, 5], metavar=("LO", "HI", "N"),
                    help="range in units of the critical strength")
    ap.add_argument("--s", type=float, default=2.0)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    a_vals = np.linspace(args.a[0], args.a[1], int(args.a[2]))
    b_vals = B_CRIT * np.linspace(args.b[0], args.b[1], int(args.b[2]))
    table = phase_diagram(a_vals, b_vals, s=args.s, config=SolverConfig(init="gaussian", max_iter=3000))
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["a", "b_over_bcrit", "label", "expected", "energy", "status"])
    bad = 0
    for p in table:
        exp = expected(p.a, p.b)
        bad += p.label != exp
        w.writerow([repr(p.a), repr(p.b / B_CRIT), p.label, exp, repr(p.energy), p.status])
    if fh is not sys.stdout:
        fh.close()
    print(f"{len(table) - bad}/{len(table)} points match the existence theorem", file=sys.stderr)


if __name__ == "__main__":
    main()
