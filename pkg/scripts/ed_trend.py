"""Small-N exact diagonalization trends: energies, condensate fraction, trace distances.

With --ell0 the one-body density matrix is also compared with Q0 after
rescaling by ell_N = ell0 N^-eta (reported as a trend only).
"""
import argparse

from bose3body.functionals import B_CRIT, ModelParams
from bose3body.manybody import rescaled_condensation, run_ed, single_particle_basis


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--a", type=float, default=1.0)
    ap.add_argument("--b", type=float, default=0.5, help="in units of the critical strength")
    ap.add_argument("--alpha", type=float, default=0.4)
    ap.add_argument("--beta", type=float, default=0.4)
    ap.add_argument("--N", type=int, nargs="+", default=[3, 4, 5, 6])
    ap.add_argument("--K", type=int, default=8)
    ap.add_argument("--ell0", type=float, default=None)
    ap.add_argument("--eta", type=float, default=0.05)
    args = ap.parse_args()

    p = ModelParams(a=args.a, b=args.b * B_CRIT, alpha=args.alpha, beta=args.beta)
    print(f"{'N':>3} {'E_Q':>14} {'E_H':>14} {'fraction':>10} {'distance':>10}" + ("  rescaled" if args.ell0 else ""))
    for N in args.N:
        r = run_ed(p, N, K=args.K)
        line = f"{N:3d} {r.E_Q:14.10f} {r.E_H_restricted:14.10f} {r.condensate_fraction:10.6f} {r.trace_distance:10.6f}"
        if args.ell0:
            ell = args.ell0 * N ** (-args.eta)
            basis = single_particle_basis(args.K, p.s, None)
            line += f"  {rescaled_condensation(r.state, ell, basis):.6f}"
        print(line)


if __name__ == "__main__":
    main()
