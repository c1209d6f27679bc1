"""NLS and Hartree energy functionals and their first variations."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .grid import Field, Grid, kinetic_energy, laplacian, quadrature
from .potentials import (SampledThreeBody, ThreeBodyKernel, Trap, TwoBodyKernel,
                         scaled_three_body, scaled_two_body)

B_CRIT = 1.5 * np.pi**2

MASS_TOL = 1e-10


class NotNormalizedError(ValueError):
    """Energy evaluated on a field whose mass differs from one."""


_DEFAULT_U = TwoBodyKernel.gaussian(1.0)
_DEFAULT_W = ThreeBodyKernel.gaussian(1.0)


@dataclass(frozen=True)
class ModelParams:
    """Couplings (a, b), trap exponent s, kernel scale exponents and kernels.

    ``N`` is only used by the Hartree functional; ``allow_delta`` lets
    under-resolved kernels collapse to the discrete delta instead of raising.
    """

    a: float = 0.0
    b: float = 0.0
    s: float = 2.0
    alpha: float = 0.5
    beta: float = 0.5
    N: float = 100.0
    two_body: TwoBodyKernel = field(default=_DEFAULT_U, compare=False, repr=False)
    three_body: ThreeBodyKernel = field(default=_DEFAULT_W, compare=False, repr=False)
    allow_delta: bool = False

    def __post_init__(self):
        if self.b < 0:
            raise ValueError(f"three-body strength b must be >= 0, got {self.b}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("scale exponents alpha and beta must be positive")
        if not self.N >= 1:
            raise ValueError(f"particle number must be >= 1, got {self.N}")
        Trap(self.s)

    @property
    def trap(self) -> Trap:
        return Trap(self.s)

    def with_(self, **kw) -> "ModelParams":
        return replace(self, **kw)


@dataclass
class EnergyBreakdown:
    kinetic: float
    trap: float
    two_body: float
    three_body: float
    total: float
    F: float | None = None  # kinetic - (b/6) int |u|^6, NLS only

    def as_dict(self):
        return {k: v for k, v in self.__dict__.items()}


# ---------------------------------------------------------------- kernels


@lru_cache(maxsize=64)
def _two_body_hat(kernel, N, alpha, grid, allow_delta):
    samples = scaled_two_body(kernel, N, alpha, grid, allow_delta=allow_delta)
    return np.fft.fft(samples)


@lru_cache(maxsize=32)
def sampled_three_body(kernel, N, beta, grid, allow_delta) -> SampledThreeBody:
    return scaled_three_body(kernel, N, beta, grid, allow_delta=allow_delta)


@lru_cache(maxsize=8)
def _three_body_full_hat(kernel, N, beta, grid, allow_delta):
    return np.fft.fft2(sampled_three_body(kernel, N, beta, grid, allow_delta).full())


def two_body_convolution(rho: np.ndarray, params: ModelParams, grid: Grid, N=None) -> np.ndarray:
    """(U_N * rho)(x) by periodic FFT."""
    N = params.N if N is None else N
    Uh = _two_body_hat(params.two_body, float(N), params.alpha, grid, params.allow_delta)
    return np.fft.ifft(Uh * np.fft.fft(rho)).real * grid.dx


def three_body_field(rho: np.ndarray, params: ModelParams, grid: Grid, N=None,
                     route: str = "lowrank", rho2: np.ndarray | None = None) -> np.ndarray:
    """g(x) = iint W_N(u, v) rho(x-u) rho2(x-v) du dv (rho2 defaults to rho).

    Routes: ``lowrank`` uses the eigen-factorization of the sampled kernel
    (O(R M log M)); ``fft2`` sums the 2D spectrum along k1 + k2 = k
    (O(M^2)); ``direct`` is the brute-force reference over the kernel support.
    """
    N = params.N if N is None else N
    W = sampled_three_body(params.three_body, float(N), params.beta, grid, params.allow_delta)
    rho = np.asarray(rho, dtype=float)
    rho2 = rho if rho2 is None else np.asarray(rho2, dtype=float)
    if W.delta:
        return rho * rho2
    dx = grid.dx
    if route == "lowrank":
        lam, Eh = W.factors
        c1 = np.fft.ifft(Eh * np.fft.fft(rho)[None, :], axis=1).real
        c2 = c1 if rho2 is rho else np.fft.ifft(Eh * np.fft.fft(rho2)[None, :], axis=1).real
        return np.einsum("r,rj,rj->j", lam, c1, c2) * dx**2
    if route == "fft2":
        M = grid.M
        Wh = _three_body_full_hat(params.three_body, float(N), params.beta, grid, params.allow_delta)
        A = Wh * np.outer(np.fft.fft(rho), np.fft.fft(rho2))
        k1 = np.arange(M)
        idx = (k1[None, :] - k1[:, None]) % M  # row k1, column k: k2 = k - k1
        gh = A[k1[:, None], idx].sum(axis=0) / M
        return np.fft.ifft(gh).real * dx**2
    if route == "direct":
        M, J = grid.M, W.J
        p = np.arange(-J, J + 1)
        idx = (np.arange(M)[:, None] - p[None, :]) % M
        R1 = rho[idx]
        R2 = rho2[idx]
        return np.einsum("jp,pq,jq->j", R1, W.matrix, R2) * dx**2
    raise ValueError(f"unknown three-body route {route!r}")


# ---------------------------------------------------------------- functionals


def _check(u: Field, check_mass: bool):
    if check_mass and abs(u.mass - 1.0) > MASS_TOL:
        raise NotNormalizedError(f"field mass {u.mass:.15g} != 1; normalize explicitly first")


def apply_h(values: np.ndarray, grid: Grid, trap: Trap) -> np.ndarray:
    """(-d^2/dx^2 + |x|^s) u."""
    return -laplacian(values, grid) + trap(grid.x) * values


class Functional:
    """Energy + gradient pair on a fixed grid; base of the NLS and Hartree functionals."""

    kind = "abstract"

    def __init__(self, params: ModelParams, grid: Grid):
        self.params = params
        self.grid = grid
        self.V = params.trap(grid.x)

    def interaction_potential(self, rho):
        """Returns (two-body potential, three-body potential) multiplying u in the gradient."""
        raise NotImplementedError

    def interaction_energies(self, rho):
        raise NotImplementedError

    def breakdown(self, values: np.ndarray) -> EnergyBreakdown:
        g = self.grid
        rho = np.abs(values) ** 2
        kin = kinetic_energy(values, g)
        trap = float(quadrature(self.V * rho, g))
        e2, e3 = self.interaction_energies(rho)
        F = kin + e3 if self.kind == "nls" else None
        return EnergyBreakdown(kin, trap, e2, e3, kin + trap + e2 + e3, F)

    def energy(self, u: Field, check_mass: bool = True) -> EnergyBreakdown:
        _check(u, check_mass)
        return self.breakdown(u.values)

    def gradient_values(self, values: np.ndarray) -> np.ndarray:
        rho = np.abs(values) ** 2
        w2, w3 = self.interaction_potential(rho)
        return -laplacian(values, self.grid) + (self.V + w2 + w3) * values

    def gradient(self, u: Field, check_mass: bool = True) -> Field:
        _check(u, check_mass)
        return Field(self.grid, self.gradient_values(u.values))


class NLSFunctional(Functional):
    kind = "nls"

    def interaction_energies(self, rho):
        p, g = self.params, self.grid
        return (0.5 * p.a * float(quadrature(rho**2, g)),
                -p.b / 6.0 * float(quadrature(rho**3, g)))

    def interaction_potential(self, rho):
        p = self.params
        return p.a * rho, -0.5 * p.b * rho**2


class HartreeFunctional(Functional):
    kind = "hartree"

    def __init__(self, params: ModelParams, grid: Grid, N=None, route: str = "lowrank"):
        super().__init__(params, grid)
        self.N = float(params.N if N is None else N)
        self.route = route
        # fail early on unresolvable kernels
        if params.a != 0.0:
            _two_body_hat(params.two_body, self.N, params.alpha, grid, params.allow_delta)
        if params.b != 0.0:
            sampled_three_body(params.three_body, self.N, params.beta, grid, params.allow_delta)

    def _conv(self, rho):
        p = self.params
        c2 = two_body_convolution(rho, p, self.grid, self.N) if p.a != 0.0 else np.zeros_like(rho)
        g3 = (three_body_field(rho, p, self.grid, self.N, route=self.route)
              if p.b != 0.0 else np.zeros_like(rho))
        return c2, g3

    def interaction_energies(self, rho):
        p, g = self.params, self.grid
        c2, g3 = self._conv(rho)
        return (0.5 * p.a * float(quadrature(rho * c2, g)),
                -p.b / 6.0 * float(quadrature(rho * g3, g)))

    def interaction_potential(self, rho):
        p = self.params
        c2, g3 = self._conv(rho)
        return p.a * c2, -0.5 * p.b * g3


def make_functional(kind: str, params: ModelParams, grid: Grid, N=None) -> Functional:
    if kind == "nls":
        return NLSFunctional(params, grid)
    if kind == "hartree":
        return HartreeFunctional(params, grid, N=N)
    raise ValueError(f"unknown functional {kind!r} (expected 'nls' or 'hartree')")


def nls_energy(u: Field, params: ModelParams, check_mass: bool = True) -> EnergyBreakdown:
    return NLSFunctional(params, u.grid).energy(u, check_mass)


def hartree_energy(u: Field, params: ModelParams, N=None, check_mass: bool = True,
                   route: str = "lowrank") -> EnergyBreakdown:
    return HartreeFunctional(params, u.grid, N=N, route=route).energy(u, check_mass)


def nls_gradient(u: Field, params: ModelParams, check_mass: bool = True) -> Field:
    """h u + a|u|^2 u - (b/2)|u|^4 u (unconstrained; d/d(conj u) of the energy)."""
    return NLSFunctional(params, u.grid).gradient(u, check_mass)


def hartree_gradient(u: Field, params: ModelParams, N=None, check_mass: bool = True,
                     route: str = "lowrank") -> Field:
    return HartreeFunctional(params, u.grid, N=N, route=route).gradient(u, check_mass)


def interaction_gaps(u: Field, params: ModelParams, N) -> tuple[float, float]:
    """(int|u|^4 - iint U_N rho rho, int|u|^6 - iiint W_N rho rho rho) on the grid."""
    g = u.grid
    rho = u.density
    gap2 = float(quadrature(rho**2, g) - quadrature(rho * two_body_convolution(rho, params, g, N), g))
    gap3 = float(quadrature(rho**3, g) - quadrature(rho * three_body_field(rho, params, g, N), g))
    return gap2, gap3
