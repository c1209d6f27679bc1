"""Trap, two- and three-body kernels and their N-dependent rescalings.

Kernels are stored as continuous, unit-mass profiles. Sampling on a grid
(``scaled_two_body`` / ``scaled_three_body``) rescales by N and renormalizes
the discrete mass to one so that the contact limit is reproduced exactly on
the grid.

Kernel text format (``load_kernel`` / ``save_kernel``)::

    # bose3body-kernel two-body [free-form metadata]
    x_0  U(x_0)
    x_1  U(x_1)
    ...

or, for three-body kernels tabulated on a tensor grid,::

    # bose3body-kernel three-body [free-form metadata]
    x_0  y_0  W(x_0, y_0)
    x_0  y_1  W(x_0, y_1)
    ...

Lines starting with ``#`` after the header are comments. Values are linearly
(bilinearly) interpolated and taken to be zero outside the table.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import RegularGridInterpolator

from .grid import Grid

FILE_MAGIC = "# bose3body-kernel"

# a kernel narrower than this many grid spacings is rejected
MIN_POINTS_PER_WIDTH = 4.0


class ResolutionError(ValueError):
    """Scaled kernel is narrower than the grid can represent."""


@dataclass(frozen=True)
class Trap:
    s: float = 2.0

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"trap exponent must be positive, got {self.s}")

    def __call__(self, x):
        return np.abs(x) ** self.s


# ---------------------------------------------------------------- two-body


@dataclass(frozen=True, eq=False)
class TwoBodyKernel:
    """Even, nonnegative profile U with unit integral.

    ``profile`` may have any positive mass; it is divided by ``raw_mass`` on
    evaluation. ``width`` is the length scale used by the resolution guard and
    ``radius`` the distance beyond which the profile is negligible.
    """

    profile: Callable[[np.ndarray], np.ndarray]
    width: float = 1.0
    radius: float = 9.0
    name: str = "custom"
    raw_mass: float = field(default=np.nan)

    def __post_init__(self):
        if np.isnan(self.raw_mass):
            m = _integrate_1d(self.profile, self.radius)
            if not (np.isfinite(m) and m > 0):
                raise ValueError(f"two-body profile {self.name!r} has non-positive or infinite mass")
            object.__setattr__(self, "raw_mass", m)

    @property
    def renormalized(self) -> bool:
        return abs(self.raw_mass - 1.0) > 1e-10

    def __call__(self, x):
        return np.asarray(self.profile(np.asarray(x, dtype=float)), dtype=float) / self.raw_mass

    def scaled(self, N: float, alpha: float) -> Callable[[np.ndarray], np.ndarray]:
        lam = float(N) ** alpha
        return lambda x: lam * self(lam * np.asarray(x))

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "TwoBodyKernel":
        def U(x):
            return np.exp(-0.5 * (x / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))

        return cls(U, width=sigma, radius=8.6 * sigma, name=f"gaussian(sigma={sigma})", raw_mass=1.0)


def _integrate_1d(fn, radius):
    val, _ = integrate.quad(lambda t: float(fn(np.array([t]))[0]), -radius, radius,
                            limit=400, points=[0.0], epsabs=1e-14, epsrel=1e-13)
    return val


def first_moment_two_body(kernel: TwoBodyKernel, N: float = 1.0, alpha: float = 1.0) -> float:
    """Continuum integral of |x| U_N(x), by adaptive quadrature."""
    fn = kernel.scaled(N, alpha)
    r = kernel.radius / float(N) ** alpha
    val, _ = integrate.quad(lambda t: t * float(fn(np.array([t]))[0]), 0.0, r,
                            limit=400, epsabs=0.0, epsrel=1e-13)
    val2, _ = integrate.quad(lambda t: -t * float(fn(np.array([t]))[0]), -r, 0.0,
                             limit=400, epsabs=0.0, epsrel=1e-13)
    return val + val2


def _check_resolution(width, grid: Grid, label: str, allow_delta: bool) -> bool:
    """True when the kernel must be replaced by the discrete delta."""
    if width >= MIN_POINTS_PER_WIDTH * grid.dx:
        return False
    if allow_delta:
        warnings.warn(f"{label} kernel width {width:.3g} < {MIN_POINTS_PER_WIDTH} dx; "
                      "substituting the discrete delta", stacklevel=3)
        return True
    raise ResolutionError(
        f"{label} kernel width {width:.3g} is below {MIN_POINTS_PER_WIDTH} grid spacings "
        f"(dx={grid.dx:.3g}); refine the grid or pass allow_delta=True")


def scaled_two_body(kernel: TwoBodyKernel, N: float, alpha: float, grid: Grid,
                    allow_delta: bool = False) -> np.ndarray:
    """U_N sampled on ``grid.offsets`` (FFT ordering) with discrete mass one."""
    lam = float(N) ** alpha
    out = np.zeros(grid.M)
    if _check_resolution(kernel.width / lam, grid, "two-body", allow_delta):
        out[0] = 1.0 / grid.dx
        return out
    if kernel.radius / lam > grid.L:
        raise ValueError(f"two-body kernel support {kernel.radius / lam:.3g} exceeds the box half-width {grid.L}")
    out = lam * kernel(lam * grid.offsets)
    return out / (out.sum() * grid.dx)


# ---------------------------------------------------------------- three-body


@dataclass(frozen=True, eq=False)
class ThreeBodyKernel:
    """Nonnegative bounded profile W(u, v) on R^2 with unit integral.

    The three-body potential between particles at x, y, z is W(x-y, x-z).
    """

    profile: Callable[[np.ndarray, np.ndarray], np.ndarray]
    width: float = 1.0
    radius: float = 7.5
    name: str = "custom"
    raw_mass: float = field(default=np.nan)

    def __post_init__(self):
        if np.isnan(self.raw_mass):
            m = _integrate_2d(self.profile, self.radius)
            if not (np.isfinite(m) and m > 0):
                raise ValueError(f"three-body profile {self.name!r} has non-positive or infinite mass")
            object.__setattr__(self, "raw_mass", m)

    @property
    def renormalized(self) -> bool:
        return abs(self.raw_mass - 1.0) > 1e-8

    def __call__(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return np.asarray(self.profile(u, v), dtype=float) / self.raw_mass

    def scaled(self, N: float, beta: float):
        lam = float(N) ** beta
        return lambda u, v: lam**2 * self(lam * np.asarray(u), lam * np.asarray(v))

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "ThreeBodyKernel":
        """exp(-(u^2 + v^2 + (u-v)^2) / (2 sigma^2)), invariant under all permutations of 3 particles."""

        def W(u, v):
            # quadratic form (u^2 + v^2 - uv)/sigma^2 has determinant 3/(4 sigma^4)
            return np.exp(-(u * u + v * v + (u - v) ** 2) / (2.0 * sigma**2)) * np.sqrt(3.0) / (2.0 * np.pi * sigma**2)

        return cls(W, width=sigma, radius=7.5 * sigma, name=f"gaussian(sigma={sigma})", raw_mass=1.0)


def _integrate_2d(fn, radius, n=801):
    # tensor Gauss-Legendre on [-radius, radius]^2 split in 4 panels per axis
    nodes, weights = np.polynomial.legendre.leggauss(n // 4)
    edges = np.linspace(-radius, radius, 5)
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (hi - lo) * nodes + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * weights)
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    U, V = np.meshgrid(x, x, indexing="ij")
    return float(w @ np.asarray(fn(U, V), dtype=float) @ w)


def first_moment_three_body(kernel: ThreeBodyKernel, N: float = 1.0, beta: float = 1.0) -> float:
    """Continuum integral of |(u, v)| W_N(u, v) in polar coordinates."""
    fn = kernel.scaled(N, beta)
    r_max = kernel.radius * np.sqrt(2.0) / float(N) ** beta
    nodes, weights = np.polynomial.legendre.leggauss(400)
    th = np.pi * (nodes + 1.0)
    wth = np.pi * weights

    def radial(r):
        return r * r * float(np.dot(wth, fn(r * np.cos(th), r * np.sin(th))))

    val, _ = integrate.quad(radial, 0.0, r_max, limit=400, epsabs=0.0, epsrel=1e-12)
    return val


class SampledThreeBody:
    """W_N sampled on the offset lattice {-J..J}^2 dx with discrete mass one.

    ``matrix[p, q]`` is W_N(p dx, q dx) for p, q in -J..J. The kernel is kept
    as a small dense block and as a symmetric eigen-factorization
    W = sum_r lam_r e_r e_r^T, used for the fast diagonal convolution.
    """

    def __init__(self, grid: Grid, matrix: np.ndarray | None, J: int, delta: bool = False):
        self.grid = grid
        self.J = J
        self.delta = delta
        if delta:
            matrix = np.array([[1.0 / grid.dx**2]])
        self.matrix = matrix

    @property
    def sup(self) -> float:
        return float(self.matrix.max())

    @property
    def mass(self) -> float:
        return float(self.matrix.sum() * self.grid.dx**2)

    def full(self) -> np.ndarray:
        """Embed into an M x M array in FFT ordering (small grids only)."""
        M = self.grid.M
        out = np.zeros((M, M))
        idx = np.arange(-self.J, self.J + 1) % M
        out[np.ix_(idx, idx)] = self.matrix
        return out

    @cached_property
    def factors(self):
        """(lam, E_hat): eigenvalues and FFTs of the embedded eigenvectors."""
        M = self.grid.M
        lam, vecs = np.linalg.eigh(0.5 * (self.matrix + self.matrix.T))
        keep = np.abs(lam) > 1e-15 * np.abs(lam).max()
        lam, vecs = lam[keep], vecs[:, keep]
        emb = np.zeros((lam.size, M))
        idx = np.arange(-self.J, self.J + 1) % M
        emb[:, idx] = vecs.T
        return lam, np.fft.fft(emb, axis=1)


def scaled_three_body(kernel: ThreeBodyKernel, N: float, beta: float, grid: Grid,
                      allow_delta: bool = False) -> SampledThreeBody:
    lam = float(N) ** beta
    if _check_resolution(kernel.width / lam, grid, "three-body", allow_delta):
        return SampledThreeBody(grid, None, 0, delta=True)
    J = int(np.ceil(kernel.radius / lam / grid.dx))
    if 2 * J + 1 > grid.M // 2:
        raise ValueError(f"three-body kernel support {kernel.radius / lam:.3g} exceeds a quarter of the box")
    off = grid.dx * np.arange(-J, J + 1)
    U, V = np.meshgrid(off, off, indexing="ij")
    mat = lam**2 * kernel(lam * U, lam * V)
    mat /= mat.sum() * grid.dx**2
    return SampledThreeBody(grid, mat, J)


# ---------------------------------------------------------------- hypotheses


@dataclass
class HypothesisReport:
    kernel: str
    checks: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def lines(self):
        for name, ok in self.checks.items():
            val = self.values.get(name)
            extra = f"  ({val:.3e})" if isinstance(val, float) else ""
            yield f"{'PASS' if ok else 'FAIL'}  {name}{extra}"
        for flag in self.flags:
            yield f"NOTE  {flag}"


def validate_hypotheses(kernel, n_samples: int = 2000, seed: int = 0) -> HypothesisReport:
    """Check the kernel conditions on random sample points and by quadrature."""
    rng = np.random.default_rng(seed)
    rep = HypothesisReport(kernel=kernel.name)
    if kernel.renormalized:
        rep.flags.append(f"profile mass {kernel.raw_mass:.6g} renormalized to 1")
    R = kernel.radius
    if isinstance(kernel, TwoBodyKernel):
        x = rng.uniform(-R, R, n_samples)
        vals = kernel(x)
        scale = max(float(np.max(np.abs(vals))), 1e-300)
        rep.checks["nonnegative"] = bool(np.all(vals >= 0))
        asym = float(np.max(np.abs(vals - kernel(-x)))) / scale
        rep.values["even"] = asym
        rep.checks["even"] = asym <= 1e-12
        mass = _integrate_1d(kernel, R)
        rep.values["unit_mass"] = abs(mass - 1.0)
        rep.checks["unit_mass"] = abs(mass - 1.0) <= 1e-10
        l2 = _integrate_1d(lambda t: kernel(t) ** 2, R)
        rep.values["L1_and_L2"] = l2
        rep.checks["L1_and_L2"] = bool(np.isfinite(l2))
        m1 = first_moment_two_body(kernel)
        rep.values["xU_in_L1"] = m1
        rep.checks["xU_in_L1"] = bool(np.isfinite(m1))
        return rep

    u = rng.uniform(-R, R, n_samples)
    v = rng.uniform(-R, R, n_samples)
    w = kernel(u, v)
    scale = max(float(np.max(np.abs(w))), 1e-300)
    rep.checks["nonnegative"] = bool(np.all(w >= 0))
    grid_pts = np.linspace(-R, R, 401)
    Ug, Vg = np.meshgrid(grid_pts, grid_pts, indexing="ij")
    sup = float(np.max(kernel(Ug, Vg)))
    rep.values["bounded"] = sup
    rep.checks["bounded"] = bool(np.isfinite(sup))
    for name, (uu, vv) in {"swap_symmetric": (v, u),
                           "permutation_symmetric_1": (-u, v - u),
                           "permutation_symmetric_2": (v - u, -u)}.items():
        err = float(np.max(np.abs(w - kernel(uu, vv)))) / scale
        rep.values[name] = err
        rep.checks[name] = err <= 1e-12
    mass = _integrate_2d(kernel, R)
    rep.values["unit_mass"] = abs(mass - 1.0)
    rep.checks["unit_mass"] = abs(mass - 1.0) <= 1e-8
    m1 = first_moment_three_body(kernel)
    rep.values["xW_in_L1"] = m1
    rep.checks["xW_in_L1"] = bool(np.isfinite(m1))
    # gradient in the first slot, L^q for a few q > 1
    h = 1e-5
    gq = []
    for q in (1.5, 2.0, 4.0):
        gq.append(_integrate_2d(lambda a, b: np.abs((kernel(a + h, b) - kernel(a - h, b)) / (2 * h)) ** q, R))
    rep.values["grad1W_in_Lq"] = max(gq)
    rep.checks["grad1W_in_Lq"] = bool(np.all(np.isfinite(gq)))
    return rep


# ---------------------------------------------------------------- file format


def save_kernel(path, kernel, xs: np.ndarray, meta: str = "") -> None:
    """Tabulate a kernel on the points ``xs`` (tensor grid for three-body)."""
    path = Path(path)
    if isinstance(kernel, TwoBodyKernel):
        data = np.column_stack([xs, kernel(xs)])
        header = f"bose3body-kernel two-body {meta}".strip()
    else:
        U, V = np.meshgrid(xs, xs, indexing="ij")
        data = np.column_stack([U.ravel(), V.ravel(), kernel(U, V).ravel()])
        header = f"bose3body-kernel three-body {meta}".strip()
    np.savetxt(path, data, header=header, comments="# ", fmt="%.17g")


def load_kernel(path):
    """Read a tabulated kernel file; returns a Two- or ThreeBodyKernel (renormalized)."""
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    if not first.startswith(FILE_MAGIC):
        raise ValueError(f"{path}: missing '{FILE_MAGIC}' header line")
    kind = first[len(FILE_MAGIC):].split()
    kind = kind[0] if kind else ""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if kind == "two-body":
        if data.shape[1] != 2:
            raise ValueError(f"{path}: two-body table needs 2 columns, got {data.shape[1]}")
        order = np.argsort(data[:, 0])
        x, y = data[order, 0], data[order, 1]
        mass = float(np.trapezoid(y, x))
        radius = float(np.max(np.abs(x)))

        def U(t):
            return np.interp(t, x, y, left=0.0, right=0.0)

        width = float(np.sqrt(np.trapezoid(x * x * y, x) / mass))
        return TwoBodyKernel(U, width=width, radius=radius, name=f"file:{path.name}", raw_mass=mass)
    if kind == "three-body":
        if data.shape[1] != 3:
            raise ValueError(f"{path}: three-body table needs 3 columns, got {data.shape[1]}")
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        if xs.size * ys.size != data.shape[0]:
            raise ValueError(f"{path}: three-body table is not a full tensor grid")
        order = np.lexsort((data[:, 1], data[:, 0]))
        Z = data[order, 2].reshape(xs.size, ys.size)
        interp = RegularGridInterpolator((xs, ys), Z, bounds_error=False, fill_value=0.0)
        mass = float(np.trapezoid(np.trapezoid(Z, ys, axis=1), xs))
        radius = float(max(np.abs(xs).max(), np.abs(ys).max()))

        def W(u, v):
            u, v = np.broadcast_arrays(u, v)
            return interp(np.stack([u.ravel(), v.ravel()], axis=-1)).reshape(u.shape)

        XX, YY = np.meshgrid(xs, ys, indexing="ij")
        width = float(np.sqrt(np.trapezoid(np.trapezoid((XX**2 + YY**2) * Z / 2, ys, axis=1), xs) / mass))
        return ThreeBodyKernel(W, width=width, radius=radius, name=f"file:{path.name}", raw_mass=mass)
    raise ValueError(f"{path}: unknown kernel kind {kind!r} (expected two-body or three-body)")
