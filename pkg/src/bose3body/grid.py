"""Uniform periodic 1D grid, sampled fields and spectral calculus."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


class DegenerateFieldError(ValueError):
    """Raised for fields that cannot be normalized (zero mass)."""


@dataclass(frozen=True)
class Grid:
    """Periodic box [-L, L) sampled at M points.

    ``k`` holds the angular wavenumbers in standard FFT ordering.
    """

    L: float = 20.0
    M: int = 2048

    def __post_init__(self):
        if self.M < 16 or (self.M & (self.M - 1)) != 0:
            raise ValueError(f"grid.M must be a power of two >= 16, got {self.M}")
        if not self.L > 0:
            raise ValueError(f"grid.L must be positive, got {self.L}")

    @cached_property
    def dx(self) -> float:
        return 2.0 * self.L / self.M

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.L + self.dx * np.arange(self.M)
        x.flags.writeable = False
        return x

    @cached_property
    def k(self) -> np.ndarray:
        k = 2.0 * np.pi * np.fft.fftfreq(self.M, d=self.dx)
        k.flags.writeable = False
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        k2 = self.k**2
        k2.flags.writeable = False
        return k2

    @property
    def k_max(self) -> float:
        return np.pi / self.dx

    @cached_property
    def offsets(self) -> np.ndarray:
        """Signed displacement of each sample from the origin cell, wrapped periodically.

        Convolution kernels are sampled on this array so that index 0 is the
        zero displacement (FFT convolution convention).
        """
        j = np.arange(self.M)
        j = np.where(j < self.M // 2, j, j - self.M)
        off = j * self.dx
        off.flags.writeable = False
        return off

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.L, self.M * factor)


def quadrature(f, grid: Grid):
    """Uniform-weight rule sum f(x_j) dx."""
    f = np.asarray(f)
    if f.shape[-1] != grid.M:
        raise ValueError(f"sample length {f.shape[-1]} does not match grid.M={grid.M}")
    return f.sum(axis=-1) * grid.dx


class Field:
    """Complex samples of a wavefunction on a grid. Immutable."""

    __slots__ = ("grid", "values", "mass")

    def __init__(self, grid: Grid, values):
        values = np.array(values, dtype=complex)
        if values.shape != (grid.M,):
            raise ValueError(f"field needs {grid.M} samples, got shape {values.shape}")
        values.flags.writeable = False
        self.grid = grid
        self.values = values
        self.mass = float(quadrature(np.abs(values) ** 2, grid))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        return cls(grid, fn(grid.x))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def spectrum(self) -> np.ndarray:
        return np.fft.fft(self.values)

    def norm(self) -> float:
        return np.sqrt(self.mass)

    def __add__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return Field(self.grid, self.values - other.values)

    def __mul__(self, c) -> "Field":
        return Field(self.grid, self.values * c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Field(M={self.grid.M}, L={self.grid.L}, mass={self.mass:.6g})"


def inner(u: Field, v: Field) -> complex:
    """<u, v> = integral of conj(u) v."""
    return complex(quadrature(np.conj(u.values) * v.values, u.grid))


def spectral_derivative(u: Field, order: int = 1) -> Field:
    grid = u.grid
    ik = 1j * grid.k
    if order % 2 == 1:
        # the Nyquist mode has no real odd derivative
        ik = ik.copy()
        ik[grid.M // 2] = 0.0
    return Field(grid, np.fft.ifft(ik**order * np.fft.fft(u.values)))


def laplacian(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral second derivative multiplier -k^2 applied to raw samples."""
    return np.fft.ifft(-grid.k2 * np.fft.fft(values))


def kinetic_energy(values: np.ndarray, grid: Grid) -> float:
    """||u'||_2^2 evaluated in Fourier space (Parseval)."""
    uh = np.fft.fft(values)
    return float(np.sum(grid.k2 * np.abs(uh) ** 2) * grid.dx / grid.M)


def spectral_mass(u: Field) -> float:
    uh = u.spectrum()
    return float(np.sum(np.abs(uh) ** 2) * u.grid.dx / u.grid.M)


def normalize(u: Field) -> Field:
    if not u.mass > 0.0 or not np.isfinite(u.mass):
        raise DegenerateFieldError("cannot normalize a field with zero or non-finite mass")
    return Field(u.grid, u.values / np.sqrt(u.mass))


def h1_distance(u: Field, v: Field) -> float:
    """H^1 norm of u - v (L^2 part plus derivative part)."""
    d = u.values - v.values
    return float(np.sqrt(quadrature(np.abs(d) ** 2, u.grid) + kinetic_energy(d, u.grid)))


def l2_distance(u: Field, v: Field) -> float:
    return float(np.sqrt(quadrature(np.abs(u.values - v.values) ** 2, u.grid)))


def resample(u: Field, grid: Grid) -> Field:
    """Move a field to another grid.

    Same box: exact Fourier interpolation (zero padding or truncation).
    Different box: cubic-spline interpolation of the real and imaginary
    parts, with zero extension outside the old box.
    """
    if grid == u.grid:
        return u
    if grid.L == u.grid.L:
        uh = np.fft.fft(u.values)
        M0, M1 = u.grid.M, grid.M
        out = np.zeros(M1, dtype=complex)
        h = min(M0, M1) // 2
        out[:h] = uh[:h]
        out[-h:] = uh[-h:]
        if M1 < M0:
            out[h] = 0.0
        return Field(grid, np.fft.ifft(out) * (M1 / M0))
    from scipy.interpolate import CubicSpline

    x0 = np.append(u.grid.x, u.grid.L)
    vals = np.append(u.values, u.values[0])
    re = CubicSpline(x0, vals.real)(grid.x)
    im = CubicSpline(x0, vals.imag)(grid.x)
    outside = np.abs(grid.x) >= u.grid.L
    re[outside] = 0.0
    im[outside] = 0.0
    return Field(grid, re + 1j * im)
