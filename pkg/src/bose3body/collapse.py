"""Collapse regimes (a_n, b_n) -> (0, b*) and the blow-up diagnostics along them.

A regime is parameterized by zeta >= 0, the relative speed of a_n -> 0 and
B_n = b* - b_n -> 0. One of the two sequences is driven by a power-law
schedule c n^-p; the other is derived from the limiting ratio

    a_n B_n^{-(s+1)/(s+2)} -> pi (6 - zeta)/6 zeta^{-(s+1)/(s+2)} Q_s^{1/(s+2)},

optionally perturbed by a vanishing relative correction ``kappa * ell``.
The concentration scale ell_n then comes from

    ell_n = (6 a_n / ((6 - zeta) pi Q_s))^{1/(s+1)}     (zeta != 6, a-branch)
    ell_n = (B_n / (zeta Q_s))^{1/(s+2)}               (zeta != 0, B-branch)

and the minimizer energy behaves like ((s+1)/s - zeta/12) Q_s ell_n^s.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .functionals import B_CRIT, ModelParams
from .gns import q0, trap_moment
from .grid import Field, Grid, h1_distance, kinetic_energy, quadrature
from .solver import SolverConfig, gauge_fix, minimize

log = logging.getLogger(__name__)


class RegimeError(ValueError):
    """Inadmissible collapse regime (bad zeta, branch or exponent)."""


@dataclass(frozen=True)
class CollapseRegime:
    zeta: float = 6.0
    s: float = 2.0
    driver: str = "b"  # which sequence follows c n^-p: "b" (B_n) or "a" (a_n)
    c: float = 1.0
    p: float = 1.0
    kappa: float = 0.0  # relative correction of the companion, kappa * ell_n

    def __post_init__(self):
        if not np.isfinite(self.zeta):
            raise RegimeError("zeta = inf (two-body faster than three-body) is not supported")
        if self.zeta < 0:
            raise RegimeError(f"zeta must be >= 0, got {self.zeta}")
        if self.driver not in ("a", "b"):
            raise RegimeError(f"driver must be 'a' or 'b', got {self.driver!r}")
        if self.zeta == 0 and self.driver == "b":
            raise RegimeError("zeta = 0 needs the a-driven branch (B_n cannot drive when zeta = 0)")
        if self.zeta == 6 and self.driver == "a":
            raise RegimeError("zeta = 6 needs the b-driven branch (a_n -> 0 faster than any power of B_n)")
        if not (self.c > 0 and self.p > 0):
            raise RegimeError("schedule needs c > 0 and p > 0")
        if not self.s > 0:
            raise RegimeError("trap exponent s must be positive")

    @property
    def Qs(self) -> float:
        return trap_moment(self.s)

    @property
    def ratio_limit(self) -> float:
        """Limit of a_n B_n^{-(s+1)/(s+2)}; +inf at zeta = 0."""
        z, s = self.zeta, self.s
        if z == 0:
            return math.inf
        return math.pi * (6 - z) / 6 * z ** (-(s + 1) / (s + 2)) * self.Qs ** (1 / (s + 2))

    @property
    def energy_coefficient(self) -> float:
        """(s+1)/s - zeta/12; vanishes at zeta = 12(s+1)/s."""
        return (self.s + 1) / self.s - self.zeta / 12

    @property
    def degenerate(self) -> bool:
        return abs(self.energy_coefficient) < 1e-12

    def ell_a(self, a: float) -> float:
        return (6 * a / ((6 - self.zeta) * math.pi * self.Qs)) ** (1 / (self.s + 1))

    def ell_b(self, B: float) -> float:
        return (B / (self.zeta * self.Qs)) ** (1 / (self.s + 2))

    def couplings(self, ell: float) -> tuple[float, float]:
        """(a, b) whose uncorrected concentration scale is ``ell``."""
        z, s, Q = self.zeta, self.s, self.Qs
        a = (6 - z) * math.pi * Q * ell ** (s + 1) / 6
        B = z * Q * ell ** (s + 2)
        return a, B_CRIT - B

    def point(self, n: float) -> "RegimePoint":
        z, s = self.zeta, self.s
        x = self.c * float(n) ** (-self.p)
        if self.driver == "b":
            B = x
            ell_b = self.ell_b(B)
            a = self.ratio_limit * B ** ((s + 1) / (s + 2)) * (1 + self.kappa * ell_b)
        else:
            R = self.ratio_limit
            a = math.copysign(x, 1.0 if z <= 6 else -1.0)
            B = 0.0 if z == 0 else (a / R) ** ((s + 2) / (s + 1)) * (1 + self.kappa * self.ell_a(a))
        if not max(0.0, a) + B > 0:
            raise RegimeError(f"n={n}: max(0, a) + (b* - b) must be positive, got a={a}, B={B}")
        ell_a = self.ell_a(a) if z != 6 else math.nan
        ell_b = self.ell_b(B) if z != 0 else math.nan
        ell = ell_b if self.driver == "b" else ell_a
        if z == 0:
            ratio = math.inf
            residual = math.nan
        else:
            ratio = a * B ** (-(s + 1) / (s + 2))
            R = self.ratio_limit
            residual = abs(ratio - R) / abs(R) if R != 0 else abs(ratio)
        diff = abs(ell_a - ell_b) / ell if 0 < z != 6 else math.nan
        vals = (a, B_CRIT - B, B, ell, ell_a, ell_b, diff, ratio, residual)
        return RegimePoint(n, *(float(v) for v in vals))


@dataclass(frozen=True)
class RegimePoint:
    n: float
    a: float
    b: float
    B: float
    ell: float
    ell_a: float
    ell_b: float
    branch_diff: float  # relative difference of the two ell formulas (0 < zeta != 6)
    ratio: float
    ratio_residual: float


def regime_sequences(regime: CollapseRegime, n_values) -> list[RegimePoint]:
    return [regime.point(n) for n in n_values]


# ---------------------------------------------------------------- diagnostics


@dataclass
class BlowupDiagnostics:
    n: float
    a: float
    b: float
    ell: float
    energy: float
    energy_ratio: float  # E / (coefficient Q_s ell^s); nan when the coefficient vanishes
    h1_to_q0: float
    F: float  # ||u'||^2 - (b_n/6) int |u|^6 of the rescaled field
    rescaled: Field | None = field(default=None, repr=False)
    N: float | None = None
    energy_nls: float | None = None
    grid_M: int = 0
    iterations: int = 0
    status: str = "converged"

    @property
    def ok(self) -> bool:
        return self.status == "converged"


def grid_for_scale(ell: float, L: float = 10.0, points_per_scale: float = 20.0, M_min: int = 1024) -> Grid:
    """Smallest power-of-two grid on [-L, L) with dx <= ell / points_per_scale."""
    M = M_min
    while 2 * L / M > ell / points_per_scale:
        M *= 2
    return Grid(L, M)


def rescale(u: Field, ell: float, target: Grid | None = None, chunk: int = 256,
            clip: bool = False) -> Field:
    """ell^(1/2) u(ell x) sampled on ``target`` by exact trigonometric interpolation.

    With ``clip`` the field is taken to vanish outside its box; otherwise a
    window leaving the box is an error.
    """
    g = u.grid
    if target is None:
        target = Grid(min(20.0, 0.95 * g.L / ell), 2048)
    y = ell * target.x
    inside = np.abs(y) <= g.L
    if not clip and not inside.all():
        raise ValueError("rescaled window leaves the computational box")
    uh = np.fft.fft(u.values) / g.M
    k = g.k
    out = np.zeros(target.M, dtype=complex)
    idx = np.flatnonzero(inside)
    for i in range(0, idx.size, chunk):
        j = idx[i:i + chunk]
        out[j] = np.exp(1j * np.outer(y[j] + g.L, k)) @ uh
    return Field(target, np.sqrt(ell) * out)


def _diagnose(u: Field, ell: float, regime: CollapseRegime, a: float, b: float, energy: float):
    v = gauge_fix(rescale(u, ell))
    ref = Field(v.grid, q0(v.grid.x))
    F = kinetic_energy(v.values, v.grid) - b / 6 * float(quadrature(v.density**3, v.grid))
    coef = regime.energy_coefficient
    ratio = math.nan if regime.degenerate else energy / (coef * regime.Qs * ell**regime.s)
    return v, h1_distance(v, ref), F, ratio


def nls_collapse_sweep(regime: CollapseRegime, n_values, config: SolverConfig | None = None,
                       L: float = 10.0, points_per_scale: float = 20.0,
                       keep_fields: bool = False) -> list[BlowupDiagnostics]:
    """Solve the NLS ground state at each regime point, warm-starting along the sweep."""
    config = config or SolverConfig()
    out = []
    prev = prev_ell = None
    for pt in regime_sequences(regime, n_values):
        grid = grid_for_scale(pt.ell, L, points_per_scale)
        params = ModelParams(a=pt.a, b=pt.b, s=regime.s)
        cfg = SolverConfig(**{**config.__dict__, "init": "previous" if prev is not None else config.init})
        # continuation: the previous minimizer dilated to the new concentration scale
        start = None if prev is None else rescale(prev, prev_ell / pt.ell, grid, clip=True)
        try:
            rep = minimize("nls", params, cfg, grid, previous=start)
        except Exception as exc:  # keep the partial table
            log.warning("sweep point n=%s failed: %s", pt.n, exc)
            out.append(BlowupDiagnostics(pt.n, pt.a, pt.b, pt.ell, math.nan, math.nan, math.nan, math.nan,
                                         grid_M=grid.M, status=f"failed: {type(exc).__name__}"))
            continue
        prev, prev_ell = rep.field, pt.ell
        v, dist, F, ratio = _diagnose(rep.field, pt.ell, regime, pt.a, pt.b, rep.energy)
        out.append(BlowupDiagnostics(pt.n, pt.a, pt.b, pt.ell, rep.energy, ratio, dist, F,
                                     v if keep_fields else None, grid_M=grid.M,
                                     iterations=rep.iterations, status=rep.status))
    return out


# ---------------------------------------------------------------- Hartree


def check_eta(eta: float, alpha: float, beta: float, s: float, zeta: float) -> None:
    """Reject concentration speeds outside eta < min(beta/(s+3), alpha)."""
    if not eta > 0:
        raise RegimeError(f"eta must be positive, got {eta}")
    if eta >= beta / (s + 3):
        raise RegimeError(f"eta = {eta} violates eta < beta/(s+3) = {beta / (s + 3):.6g}")
    if eta >= alpha:
        raise RegimeError(f"eta = {eta} violates eta < alpha = {alpha}")
    if zeta == 0 and not alpha > beta:
        raise RegimeError(f"zeta = 0 requires alpha > beta, got alpha={alpha}, beta={beta}")


def hartree_collapse_sweep(regime: CollapseRegime, N_values, eta: float, alpha: float = 0.6,
                           beta: float = 0.5, ell0: float = 1.0, config: SolverConfig | None = None,
                           base: ModelParams | None = None, L: float = 10.0,
                           points_per_scale: float = 20.0) -> list[BlowupDiagnostics]:
    """Hartree minimizers along ell_N = ell0 N^-eta, compared with the NLS minimizers at the same (a, b)."""
    check_eta(eta, alpha, beta, regime.s, regime.zeta)
    config = config or SolverConfig()
    base = base or ModelParams()
    out = []
    prev_h = prev_n = None
    for N in N_values:
        ell = ell0 * float(N) ** (-eta)
        a, b = regime.couplings(ell)
        if regime.zeta == 0:
            b = B_CRIT
        params = base.with_(a=a, b=b, s=regime.s, alpha=alpha, beta=beta, N=float(N))
        kernel_width = min(float(N) ** (-alpha) * params.two_body.width,
                           float(N) ** (-beta) * params.three_body.width)
        grid = grid_for_scale(min(ell, 5 * kernel_width), L, points_per_scale)
        try:
            cfg = SolverConfig(**{**config.__dict__, "init": "previous" if prev_n is not None else config.init})
            rn = minimize("nls", params, cfg, grid, previous=prev_n)
            cfg = SolverConfig(**{**config.__dict__, "init": "previous"})
            rh = minimize("hartree", params, cfg, grid, N=N, previous=prev_h if prev_h is not None else rn.field)
        except Exception as exc:
            log.warning("Hartree sweep point N=%s failed: %s", N, exc)
            out.append(BlowupDiagnostics(N, a, b, ell, math.nan, math.nan, math.nan, math.nan, N=N,
                                         grid_M=grid.M, status=f"failed: {type(exc).__name__}"))
            continue
        prev_n, prev_h = rn.field, rh.field
        _, dist, F, ratio = _diagnose(rh.field, ell, regime, a, b, rh.energy)
        status = "converged" if (rn.converged and rh.converged) else f"{rn.status}/{rh.status}"
        out.append(BlowupDiagnostics(N, a, b, ell, rh.energy, ratio, dist, F, N=N, energy_nls=rn.energy,
                                     grid_M=grid.M, iterations=rh.iterations, status=status))
    return out


# ---------------------------------------------------------------- fits and output


@dataclass(frozen=True)
class RateFit:
    exponent: float
    prefactor: float
    r2: float


def fit_rate(xs, ys) -> RateFit:
    """Least-squares fit of log y = log C + p log x."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1D sequences of equal length")
    if xs.size < 3:
        raise ValueError(f"need at least 3 points for a rate fit, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise ValueError("rate fit needs strictly positive finite data")
    lx, ly = np.log(xs), np.log(ys)
    A = np.vstack([lx, np.ones_like(lx)]).T
    (p, logc), *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ np.array([p, logc])
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(p), float(np.exp(logc)), r2)


SWEEP_COLUMNS = [
    ("n", "sweep index"),
    ("a_n", "two-body coupling a_n"),
    ("b_n", "three-body coupling b_n"),
    ("ell_n", "concentration length ell_n"),
    ("E", "ground-state energy"),
    ("ratio", "E / (((s+1)/s - zeta/12) Q_s ell_n^s)"),
    ("h1_dist", "H1 distance of the gauge-fixed rescaled minimizer to Q0"),
    ("F", "||u'||^2 - (b_n/6)||u||_6^6 of the rescaled minimizer"),
    ("M", "grid points"),
    ("status", "solver status"),
]


def sweep_csv(rows: list[BlowupDiagnostics]) -> str:
    """Deterministic CSV text (fixed column order, repr-exact floats)."""
    buf = io.StringIO()
    for name, desc in SWEEP_COLUMNS:
        buf.write(f"# {name}: {desc}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([name for name, _ in SWEEP_COLUMNS])
    for r in rows:
        w.writerow([repr(float(v)) for v in (r.n, r.a, r.b, r.ell, r.energy, r.energy_ratio, r.h1_to_q0, r.F)]
                   + [int(r.grid_M), r.status])
    return buf.getvalue()
