"""Constrained ground-state search on the unit-mass sphere.

The descent is a normalized gradient flow: each step moves along the
preconditioned, mass-projected gradient (optionally with a
Polak-Ribiere conjugate correction), retracts to unit mass, and backtracks
until the discrete energy decreases. Stopping is on the Euler-Lagrange
residual ||grad E - mu u||, never on energy stall.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .functionals import B_CRIT, EnergyBreakdown, Functional, ModelParams, NLSFunctional, make_functional
from .gns import q0
from .grid import Field, Grid, kinetic_energy, normalize, quadrature, resample

log = logging.getLogger(__name__)


class CollapseDetected(RuntimeError):
    """Kinetic energy passed the ceiling while the energy was still decreasing."""

    def __init__(self, msg, report):
        super().__init__(msg)
        self.report = report


class UnstableParameters(ValueError):
    """NLS parameters outside the existence region without the probe flag."""


@dataclass
class SolverConfig:
    tau0: float = 0.5
    backtrack: float = 0.5
    grow: float = 1.6
    max_iter: int = 4000
    tol: float = 1e-8
    init: str = "scaled_Q0"  # gaussian | scaled_Q0 | file | previous
    init_file: str | None = None
    method: str = "cg"  # cg | gradient
    kinetic_ceiling: float | None = None  # default (k_max / 30)^2
    instability_probe: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("solver.tol must be positive")
        if self.max_iter < 1:
            raise ValueError("solver.max_iter must be >= 1")
        if not 0 < self.backtrack < 1:
            raise ValueError("solver.backtrack must lie in (0, 1)")
        if not self.tau0 > 0:
            raise ValueError("solver.tau0 must be positive")
        if self.init not in ("gaussian", "scaled_Q0", "file", "previous"):
            raise ValueError(f"solver.init must be gaussian|scaled_Q0|file|previous, got {self.init!r}")
        if self.method not in ("cg", "gradient"):
            raise ValueError(f"solver.method must be cg|gradient, got {self.method!r}")


@dataclass
class SolverReport:
    field: Field
    energies: list
    residual: float
    iterations: int
    converged: bool
    breakdown: EnergyBreakdown
    status: str = "converged"
    mu: float = float("nan")
    kinetics: list = field(default_factory=list)

    @property
    def energy(self) -> float:
        return self.breakdown.total


def nls_stable(a: float, b: float) -> bool:
    """Existence region of NLS ground states: b < b* or (b = b* and a > 0)."""
    return b < B_CRIT or (b == B_CRIT and a > 0)


def is_marginal(a: float, b: float) -> bool:
    return b == B_CRIT and a == 0


def upper_bound_energy(ell, a, b, s, Qs):
    """Closed-form energy of the trial state ell^(1/2) Q0(ell x)."""
    ell = np.asarray(ell, dtype=float)
    return ell**2 * (B_CRIT - b) / 12.0 + ell * a / np.pi + ell ** (-s) * Qs / s


def best_trial_scale(params: ModelParams, grid: Grid) -> float:
    """Minimize the trial-state bound over a log grid of resolvable scales."""
    from .gns import trap_moment

    lo = 24.0 / grid.L  # Q0(ell x) below 1e-16 at the box edge
    hi = 1.0 / (8.0 * grid.dx)
    lo = min(lo, hi)
    ells = np.geomspace(lo, hi, 600) if hi > lo else np.array([lo])
    vals = upper_bound_energy(ells, params.a, params.b, params.s, trap_moment(params.s))
    return float(ells[np.argmin(vals)])


def initial_field(config: SolverConfig, params: ModelParams, grid: Grid, previous: Field | None = None) -> Field:
    if config.init == "previous":
        if previous is None:
            raise ValueError("init='previous' needs a previous solution")
        return normalize(resample(previous, grid))
    if config.init == "file":
        if not config.init_file:
            raise ValueError("init='file' needs solver.init_file")
        data = np.loadtxt(config.init_file, comments="#", ndmin=2)
        x, re = data[:, 0], data[:, 1]
        im = data[:, 2] if data.shape[1] > 2 else np.zeros_like(re)
        vals = np.interp(grid.x, x, re, left=0, right=0) + 1j * np.interp(grid.x, x, im, left=0, right=0)
        return normalize(Field(grid, vals))
    if config.init == "gaussian":
        return normalize(Field(grid, np.exp(-0.5 * grid.x**2)))
    ell = best_trial_scale(params, grid)
    return Field(grid, np.sqrt(ell) * q0(ell * grid.x))


def gauge_fix(u: Field) -> Field:
    """Real positive at the maximum of |u|, mass centroid moved to 0."""
    g = u.grid
    vals = u.values
    j = int(np.argmax(np.abs(vals)))
    vals = vals * np.exp(-1j * np.angle(vals[j]))
    rho = np.abs(vals) ** 2
    x0 = float(quadrature(g.x * rho, g) / quadrature(rho, g))
    if abs(x0) > 1e-14:
        vals = np.fft.ifft(np.fft.fft(vals) * np.exp(1j * g.k * x0))
    return Field(g, vals)


ROUNDOFF = 1e-13


def _magnitude(bd: EnergyBreakdown) -> float:
    return abs(bd.kinetic) + abs(bd.trap) + abs(bd.two_body) + abs(bd.three_body)


def _inner(a, b, dx):
    return float(np.real(np.vdot(a, b))) * dx


def retract(u, d, tau, dx):
    """Step along d and pull back to unit mass; returns the point and the pre-normalization norm."""
    w = u + tau * d
    n = np.sqrt(_inner(w, w, dx))
    return w / n, n


def descend(functional: Functional, u0: Field, config: SolverConfig, marginal: bool = False) -> SolverReport:
    """Run the constrained descent from ``u0`` on ``functional``."""
    g = functional.grid
    dx = g.dx
    ceiling = config.kinetic_ceiling or (g.k_max / 30.0) ** 2
    u = normalize(u0).values.copy()

    def energy(v):
        return functional.breakdown(v).total

    E = energy(u)
    energies = [E]
    kinetics = [kinetic_energy(u, g)]
    tau = config.tau0
    d_prev = r_prev = z_prev = None
    status = "max_iter"
    it = 0
    res = np.inf
    mu = np.nan
    G_next = None
    for it in range(config.max_iter + 1):
        G = functional.gradient_values(u) if G_next is None else G_next
        G_next = None
        mu = _inner(u, G, dx)
        r = G - mu * u
        res = np.sqrt(_inner(r, r, dx))
        if res <= config.tol and not marginal:
            status = "converged"
            break
        if it == config.max_iter:
            break
        c = max(1.0, kinetics[-1])
        P = 1.0 / (c + g.k2)
        S = np.sqrt(c / (c + np.abs(functional.V)))

        def precondition(w):
            return S * np.fft.ifft(P * np.fft.fft(S * w))

        z = precondition(r)
        Pu = precondition(u)
        z = z - (_inner(u, z, dx) / _inner(u, Pu, dx)) * Pu
        d = -z
        if config.method == "cg" and d_prev is not None:
            beta = max(0.0, _inner(r, z - z_prev, dx) / _inner(r_prev, z_prev, dx))
            dp = d_prev - _inner(u, d_prev, dx) * u
            d = d + beta * dp
        slope = 2.0 * _inner(G, d, dx)
        if slope >= 0:
            d = -z
            slope = 2.0 * _inner(G, d, dx)
        accepted = False
        while tau > 1e-14:
            v, nv = retract(u, d, tau, dx)
            bd = functional.breakdown(v)
            Ev = bd.total
            if not np.isfinite(Ev):
                tau *= config.backtrack
                continue
            # secant step on the directional derivative (exact for a quadratic profile)
            Gv = functional.gradient_values(v)
            sv = 2.0 * _inner(Gv, d - _inner(v, d, dx) * v, dx) / nv
            cands = [(tau, v, Ev, bd, Gv)]
            if sv > slope:
                t_s = min(tau * slope / (slope - sv), 10.0 * tau)
                if abs(t_s - tau) > 1e-6 * tau:
                    w, _ = retract(u, d, t_s, dx)
                    bw = functional.breakdown(w)
                    if np.isfinite(bw.total):
                        cands.insert(0, (t_s, w, bw.total, bw, None))
            cands.sort(key=lambda c: c[2])
            band = ROUNDOFF * _magnitude(bd)
            if cands[-1][2] - cands[0][2] <= band:
                # indistinguishable energies: prefer the secant point
                cands.sort(key=lambda c: c[4] is not None)
            for t_c, w, Ew, bw, Gw in cands:
                if Ew <= E + 1e-4 * t_c * slope:
                    accepted = True
                elif abs(Ew - E) <= band:
                    # energy differences below double precision: accept on residual decrease
                    Gw = functional.gradient_values(w) if Gw is None else Gw
                    rw = Gw - _inner(w, Gw, dx) * w
                    accepted = np.sqrt(_inner(rw, rw, dx)) < res
                if accepted:
                    tau, v, Ev, G_next = t_c, w, Ew, Gw
                    break
            if accepted:
                break
            tau *= config.backtrack
        if not accepted:
            status = "stalled"
            break
        u_prev_E = E
        u, E = v, Ev
        energies.append(E)
        kin = kinetic_energy(u, g)
        kinetics.append(kin)
        d_prev, r_prev, z_prev = d, r, z
        tau = min(tau * config.grow, 1e3)
        if not np.isfinite(E):
            status = "collapse"
            break
        if kin > ceiling and E < u_prev_E:
            # negative energy at a resolved concentration scale means the energy is unbounded
            # below; nonnegative energy means concentration without a gain (marginal case)
            status = "collapse" if E < 0 else "concentrating"
            break

    field_out = Field(g, u)
    if status in ("converged",):
        field_out = gauge_fix(field_out)
    if marginal and status != "collapse":
        status = "marginal"
    report = SolverReport(field=field_out, energies=energies, residual=float(res), iterations=it,
                          converged=status == "converged", breakdown=functional.breakdown(field_out.values),
                          status=status, mu=float(mu), kinetics=kinetics)
    log.debug("descent %s after %d iterations, residual %.3e, energy %.12g", status, it, res, E)
    return report


def minimize(kind: str, params: ModelParams, config: SolverConfig | None = None, grid: Grid | None = None,
             N=None, previous: Field | None = None) -> SolverReport:
    """Ground state of the NLS (``kind='nls'``) or Hartree (``kind='hartree'``) functional."""
    config = config or SolverConfig()
    grid = grid or Grid()
    if kind == "nls" and not nls_stable(params.a, params.b) and not config.instability_probe:
        raise UnstableParameters(
            f"(a, b) = ({params.a}, {params.b}) is outside the NLS existence region; "
            "set instability_probe to run anyway")
    functional = make_functional(kind, params, grid, N=N)
    u0 = initial_field(config, params, grid, previous)
    marginal = kind == "nls" and is_marginal(params.a, params.b)
    report = descend(functional, u0, config, marginal=marginal)
    if report.status == "collapse":
        raise CollapseDetected(
            f"collapse detected: kinetic energy {report.kinetics[-1]:.3g} above ceiling "
            f"with energy {report.energies[-1]:.3g} still decreasing", report)
    return report


# ---------------------------------------------------------------- phase diagram


@dataclass
class PhasePoint:
    a: float
    b: float
    label: str  # minimizer | collapse | marginal
    energy: float
    kinetic: float
    iterations: int
    status: str


def classify(report: SolverReport, collapsed: bool) -> str:
    """Map solver behaviour to a phase label."""
    if collapsed:
        return "collapse"
    if report.converged:
        return "minimizer"
    if report.status == "concentrating":
        return "marginal"
    E = np.asarray(report.energies)
    K = np.asarray(report.kinetics)
    tail = max(2, len(E) // 4)
    decreasing = E[-1] <= E[-tail]
    concentrating = K[-1] > K[-tail]
    if decreasing and concentrating and E[-1] > -1e-6:
        return "marginal"
    if E[-1] < -1.0 and concentrating:
        return "collapse"
    return "unresolved"


@dataclass
class ProbeResult:
    scales: np.ndarray
    energies: np.ndarray
    unbounded: bool


def concentration_probe(params: ModelParams, reference: float, scales=None, points: int = 2048) -> ProbeResult:
    """NLS energies of lam^(1/2) Q0(lam x) for growing lam, each on a grid scaled to lam.

    ``unbounded`` is set when the energies fall below ``reference`` and keep
    decreasing over the last three scales, which certifies that ``reference``
    is not the infimum and that concentration lowers the energy without bound.
    """
    scales = np.geomspace(1.0, 1e6, 61) if scales is None else np.asarray(scales, dtype=float)
    energies = []
    for lam in scales:
        g = Grid(20.0 / lam if lam > 1 else 20.0, points)
        u = Field(g, np.sqrt(lam) * q0(lam * g.x))
        energies.append(NLSFunctional(params, g).breakdown(u.values).total)
    energies = np.array(energies)
    tail = energies[-3:]
    unbounded = bool(tail[-1] < reference - 1.0 and np.all(np.diff(tail) < 0))
    return ProbeResult(scales, energies, unbounded)


def _refining_minimize(params, config, grid, max_refine):
    """NLS descent that doubles the grid while the state concentrates at nonnegative energy."""
    rep = minimize("nls", params, config, grid)
    for _ in range(max_refine):
        if rep.status not in ("concentrating", "marginal"):
            break
        grid = grid.refined()
        cfg = SolverConfig(**{**config.__dict__, "init": "previous"})
        rep = minimize("nls", params, cfg, grid, previous=rep.field)
    return rep


def phase_diagram(a_values, b_values, s: float = 2.0, grid: Grid | None = None,
                  config: SolverConfig | None = None, base: ModelParams | None = None,
                  max_refine: int = 2) -> list[PhasePoint]:
    """Classify each (a, b) by running the NLS descent from a Gaussian with the probe enabled.

    Points that keep concentrating at nonnegative energy are re-solved on
    successively doubled grids (at most ``max_refine`` times); converged
    points are checked against the concentration probe for metastability.
    """
    grid = grid or Grid()
    config = config or SolverConfig(init="gaussian", max_iter=3000, tol=1e-8)
    config = SolverConfig(**{**config.__dict__, "instability_probe": True, "init": "gaussian"})
    base = base or ModelParams()
    table = []
    for b in b_values:
        for a in a_values:
            params = base.with_(a=float(a), b=float(b), s=s)
            try:
                rep = _refining_minimize(params, config, grid, max_refine)
                collapsed = False
                energy, kinetic, status = rep.energies[-1], rep.kinetics[-1], rep.status
                if rep.converged:
                    # a local minimizer may sit behind an energy barrier at scales the grid cannot hold
                    probe = concentration_probe(params, rep.energy)
                    if probe.unbounded:
                        collapsed = True
                        lam = probe.scales[-1]
                        energy, kinetic, status = probe.energies[-1], lam**2 * np.pi**2 / 8, "metastable"
            except CollapseDetected as exc:
                rep = exc.report
                collapsed = True
                energy, kinetic, status = rep.energies[-1], rep.kinetics[-1], rep.status
            table.append(PhasePoint(float(a), float(b), classify(rep, collapsed), float(energy),
                                    float(kinetic), rep.iterations, status))
    return table
