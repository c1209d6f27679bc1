"""Interaction gaps of a fixed profile versus N, with log-log fits.

Compares the measured gaps against the small-width expansion
N^(-2 alpha) int rho'^2 / 2 (two-body) and N^(-2 beta) int rho rho'^2
(three-body) for the unit Gaussian kernels.
"""
import argparse

import numpy as np

from bose3body.collapse import fit_rate
from bose3body.functionals import ModelParams, interaction_gaps
from bose3body.gns import q0_field
from bose3body.grid import Grid, quadrature


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=float, default=0.5)
    ap.add_argument("--beta", type=float, default=0.5)
    ap.add_argument("--N", type=float, nargs="+", default=[1e2, 1e3, 1e4, 1e5])
    ap.add_argument("--L", type=float, default=20.0)
    ap.add_argument("--M", type=int, default=65536)
    args = ap.parse_args()

    g = Grid(args.L, args.M)
    u = q0_field(g)
    rho = u.density
    drho = np.fft.ifft(1j * g.k * np.fft.fft(rho)).real
    c2 = 0.5 * quadrature(drho**2, g)
    c3 = quadrature(rho * drho**2, g)
    p = ModelParams(alpha=args.alpha, beta=args.beta)
    gaps = []
    print(f"{'N':>8} {'gap2':>12} {'expansion':>12} {'gap3':>12} {'expansion':>12}")
    for N in args.N:
        g2, g3 = interaction_gaps(u, p, N)
        gaps.append((g2, g3))
        print(f"{N:8.0e} {g2:12.4e} {c2 * N**(-2 * args.alpha):12.4e} {g3:12.4e} {c3 * N**(-2 * args.beta):12.4e}")
    gaps = np.array(gaps)
    f2, f3 = fit_rate(args.N, gaps[:, 0]), fit_rate(args.N, gaps[:, 1])
    print(f"two-body decay exponent {-f2.exponent:.4f} (alpha = {args.alpha}, 2 alpha = {2 * args.alpha})")
    print(f"three-body decay exponent {-f3.exponent:.4f} (beta = {args.beta}, 2 beta = {2 * args.beta})")


if __name__ == "__main__":
    main()
