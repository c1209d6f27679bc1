"""Hartree versus NLS ground-state energies over a range of N."""
import argparse

from bose3body.collapse import fit_rate
from bose3body.functionals import B_CRIT, ModelParams
from bose3body.grid import Grid
from bose3body.solver import SolverConfig, minimize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--a", type=float, default=1.0)
    ap.add_argument("--b", type=float, default=0.5, help="in units of the critical strength")
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--N", type=float, nargs="+", default=[1e2, 3e2, 1e3, 3e3, 1e4])
    ap.add_argument("--L", type=float, default=10.0)
    ap.add_argument("--M", type=int, default=8192)
    args = ap.parse_args()

    g = Grid(args.L, args.M)
    p = ModelParams(a=args.a, b=args.b * B_CRIT, alpha=args.alpha, beta=args.beta)
    en = minimize("nls", p, SolverConfig(), g)
    print(f"E_NLS = {en.energy:.12f}")
    gaps = []
    for N in args.N:
        eh = minimize("hartree", p, SolverConfig(init="previous"), g, N=N, previous=en.field)
        gaps.append(abs(eh.energy - en.energy))
        print(f"N = {N:8.0e}  E_H = {eh.energy:.12f}  |E_H - E_NLS| = {gaps[-1]:.3e}  ({eh.status})")
    if len(gaps) >= 3:
        print(f"fitted decay exponent {-fit_rate(args.N, gaps).exponent:.3f}")


if __name__ == "__main__":
    main()
