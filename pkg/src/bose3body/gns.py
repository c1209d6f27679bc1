"""Closed-form GNS optimizer Q0 = (cosh pi x)^(-1/2) and checks of its sharp constants."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .grid import Field, Grid, kinetic_energy, laplacian, quadrature
from .functionals import B_CRIT


def q0(x):
    """(cosh pi x)^(-1/2), evaluated without overflow."""
    t = np.exp(-np.pi * np.abs(np.asarray(x, dtype=float)))
    return np.sqrt(2.0 * t / (1.0 + t * t))


def q0_field(grid: Grid, ell: float = 1.0, shift: float = 0.0) -> Field:
    """ell^(1/2) Q0(ell (x - shift)); unit mass for every ell."""
    return Field(grid, np.sqrt(ell) * q0(ell * (grid.x - shift)))


def gns_quotient(u: Field) -> float:
    """6 ||u'||^2 ||u||^4 / int |u|^6: the largest b for which the GNS bound holds at u."""
    g = u.grid
    six = float(quadrature(np.abs(u.values) ** 6, g))
    if not six > 0:
        raise ValueError("gns_quotient undefined for a field with int |u|^6 = 0")
    return 6.0 * kinetic_energy(u.values, g) * u.mass**2 / six


def _sech_moment_tail(s: float, X: float, terms: int = 40) -> float:
    """int_X^inf x^s sech(pi x) dx from sech = 2 sum (-1)^n e^{-(2n+1) pi x}."""
    total = 0.0
    for n in range(terms):
        c = (2 * n + 1) * np.pi
        term = 2.0 * special.gamma(s + 1) * special.gammaincc(s + 1, c * X) / c ** (s + 1)
        total += (-1) ** n * term
        if abs(term) < 1e-30:
            break
    return total


def trap_moment(s: float, cutoff: float = 12.0) -> float:
    """Q_s = s int |x|^s Q0(x)^2 dx, quadrature on [0, cutoff] plus the exponential tail in closed form."""
    if not s > 0:
        raise ValueError(f"trap exponent must be positive, got {s}")
    body, _ = integrate.quad(lambda x: x**s / np.cosh(np.pi * x), 0.0, cutoff,
                             limit=500, epsabs=0.0, epsrel=2e-14)
    return float(2.0 * s * (body + _sech_moment_tail(s, cutoff)))


def quintic_residual(grid: Grid, linear_coeff: float = np.pi**2 / 4) -> float:
    """Discrete L^2 norm of -Q0'' + c Q0 - (3/4) pi^2 Q0^5 (c = pi^2/4 solves it)."""
    if grid.L < 15:
        raise ValueError(f"box half-width {grid.L} too small to hold Q0 (need L >= 15)")
    u = q0(grid.x)
    r = -laplacian(u, grid).real + linear_coeff * u - 0.75 * np.pi**2 * u**5
    return float(np.sqrt(quadrature(r * r, grid)))


def _power_shift_integral(s: float, y: float) -> float:
    def f(x):
        return np.abs(x - y) ** s / np.cosh(np.pi * x)

    pts = sorted({0.0, float(y)})
    lo, hi = -40.0 + min(pts), 40.0 + max(pts)
    total = 0.0
    edges = [lo, *pts, hi]
    for a, b in zip(edges[:-1], edges[1:]):
        if b > a:
            val, _ = integrate.quad(f, a, b, limit=500, epsabs=1e-15, epsrel=2e-14)
            total += val
    return total


@dataclass
class TranslationReport:
    s: float
    base: float
    offsets: list
    margins: list
    ok: list

    @property
    def passed(self) -> bool:
        return all(self.ok)


def translation_inequality_check(s: float, offsets) -> TranslationReport:
    """Margins int |x-y|^s Q0^2 - int |x|^s Q0^2, which must be > 0 for y != 0."""
    base = _power_shift_integral(s, 0.0)
    margins, ok = [], []
    for y in offsets:
        m = _power_shift_integral(s, float(y)) - base
        margins.append(m)
        ok.append(m > 0 if y != 0 else abs(m) < 1e-12)
    return TranslationReport(s, base, list(offsets), margins, ok)


@dataclass
class GnsReference:
    """Q0 and its norms measured on a grid, next to their exact values."""

    grid: Grid = field(default_factory=Grid)

    b_crit: float = B_CRIT

    def q0(self) -> Field:
        return q0_field(self.grid)

    def measured(self) -> dict:
        u = self.q0()
        g = self.grid
        rho = u.density
        return {
            "mass": u.mass,
            "kinetic": kinetic_energy(u.values, g),
            "L4": float(quadrature(rho**2, g)),
            "L6": float(quadrature(rho**3, g)),
            "gns_quotient": gns_quotient(u),
        }

    @staticmethod
    def exact() -> dict:
        return {
            "mass": 1.0,
            "kinetic": np.pi**2 / 8,
            "L4": 2.0 / np.pi,
            "L6": 0.5,
            "gns_quotient": B_CRIT,
        }

    def certification_rows(self, s_values=(1.0, 2.0)):
        """(name, computed, reference, abs error, tolerance, passed) rows."""
        meas = self.measured()
        ref = self.exact()
        tol = {"mass": 1e-10, "kinetic": 1e-8, "L4": 1e-8, "L6": 1e-8,
               "gns_quotient": 1e-7 * B_CRIT}
        rows = []
        for key in ("mass", "kinetic", "L4", "L6", "gns_quotient"):
            err = abs(meas[key] - ref[key])
            rows.append((key, meas[key], ref[key], err, tol[key], err <= tol[key]))
        res = quintic_residual(self.grid)
        rows.append(("quintic_residual", res, 0.0, res, 1e-6, res < 1e-6))
        q2 = trap_moment(2.0)
        rows.append(("trap_moment_s2", q2, 0.5, abs(q2 - 0.5), 1e-8, abs(q2 - 0.5) <= 1e-8))
        for s in s_values:
            rep = translation_inequality_check(s, [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0])
            worst = min(rep.margins)
            rows.append((f"translation_margin_min_s{s:g}", worst, 0.0, 0.0, 0.0, rep.passed))
        return rows
