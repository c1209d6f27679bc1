"""Regenerate the high-precision trap-moment table frozen in tests/test_gns.py.

Q_s = s * int |x|^s sech(pi x) dx, once by mpmath quadrature and once by the
Dirichlet beta closed form 4 s Gamma(s+1) beta(s+1) / pi^(s+1).
"""
import argparse

import mpmath as mp


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dps", type=int, default=30)
    ap.add_argument("--s", type=float, nargs="+", default=[0.5, 1, 1.5, 2, 3, 4])
    args = ap.parse_args()
    mp.mp.dps = args.dps
    for s in args.s:
        quad = 2 * s * mp.quad(lambda x: x**s / mp.cosh(mp.pi * x), [0, 1, 5, mp.inf])
        closed = 4 * s * mp.gamma(s + 1) * mp.dirichlet(s + 1, [0, 1, 0, -1]) / mp.pi ** (s + 1)
        print(f"{s}: {mp.nstr(closed, 20)},  # quad diff {mp.nstr(abs(quad - closed), 3)}")


if __name__ == "__main__":
    main()
