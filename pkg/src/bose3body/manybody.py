"""Exact diagonalization of the trapped N-boson Hamiltonian in a truncated mode basis.

Modes are the K lowest eigenfunctions of h = -d^2 + |x|^s on a grid. The
N-body space is the occupation-number basis over those modes. k-body
operators (k = 2, 3) act through fractional-parentage coefficients:

    |n>_N = sum_{|d| = k} sqrt(prod_j C(n_j, d_j) / C(N, k)) |d>_k (x) |n - d>_{N-k},

so that <n| sum_{i1<..<ik} V |n'> = C(N, k) sum_r amp(n, n - r) amp(n', n' - r) <n-r|V|n'-r>_k,
with <c|V|d>_k the matrix of V between normalized symmetric k-particle states.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh
from scipy.special import comb

from .functionals import ModelParams, sampled_three_body
from .grid import Field, Grid, laplacian
from .potentials import scaled_two_body

log = logging.getLogger(__name__)

MAX_DIM = 200_000
MAX_TENSOR = 3_000_000
N_RANGE = (3, 8)
MAX_MODES = 12


class CeilingError(RuntimeError):
    """Requested problem exceeds the documented cost ceiling."""


# ---------------------------------------------------------------- occupation bases


def occupations(N: int, K: int) -> np.ndarray:
    """All occupation vectors of N bosons in K modes, lexicographically decreasing."""
    rows = []

    def rec(prefix, left, slots):
        if slots == 1:
            rows.append(prefix + [left])
            return
        for m in range(left, -1, -1):
            rec(prefix + [m], left - m, slots - 1)

    rec([], N, K)
    return np.array(rows, dtype=np.int64).reshape(-1, K)


def _codes(occ: np.ndarray, base: int) -> np.ndarray:
    return occ @ (base ** np.arange(occ.shape[1], dtype=np.int64))


def dimension(N: int, K: int) -> int:
    return math.comb(N + K - 1, N)


class Parentage:
    """Index and amplitude tables splitting N-particle states into k + (N - k)."""

    def __init__(self, occ_N: np.ndarray, N: int, k: int):
        K = occ_N.shape[1]
        self.N, self.k = N, k
        self.sub = occupations(k, K)
        self.rest = occupations(N - k, K) if N > k else np.zeros((1, K), dtype=np.int64)
        base = N + 1
        codes = _codes(occ_N, base)
        order = np.argsort(codes)
        full = self.rest[:, None, :] + self.sub[None, :, :]  # (R, D, K)
        fc = _codes(full.reshape(-1, K), base)
        pos = np.searchsorted(codes[order], fc)
        pos = np.minimum(pos, len(codes) - 1)
        found = codes[order][pos] == fc
        idx = order[pos]
        amp = np.prod(comb(full, self.sub[None, :, :]), axis=2) / math.comb(N, k)
        amp = np.sqrt(amp).reshape(-1)
        amp[~found] = 0.0
        idx[~found] = 0
        self.index = idx.reshape(len(self.rest), len(self.sub))
        self.amp = amp.reshape(len(self.rest), len(self.sub))

    def gather(self, v: np.ndarray) -> np.ndarray:
        """X[r, d] = amp(r + d, d) v[r + d]."""
        return self.amp * v[self.index]

    def scatter(self, X: np.ndarray, dim: int) -> np.ndarray:
        out = np.zeros(dim, dtype=X.dtype)
        np.add.at(out, self.index.ravel(), (self.amp * X).ravel())
        return out


def symmetric_matrix(T: np.ndarray, sub: np.ndarray) -> np.ndarray:
    """Matrix of a k-body operator between normalized symmetric k-particle states.

    ``T`` has 2k indices (bra modes then ket modes); ``sub`` lists the
    k-particle occupations. <c|V|d> = (prod c! prod d!)^(-1/2) sum_sigma T[t_c, sigma(t_d)].
    """
    k = sub.shape[1] and int(sub[0].sum())
    tuples = [tuple(np.repeat(np.arange(sub.shape[1]), row)) for row in sub]
    fact = np.array([np.prod([math.factorial(int(m)) for m in row]) for row in sub], dtype=float)
    D = len(tuples)
    bra = np.array(tuples)  # (D, k)
    out = np.zeros((D, D))
    for sigma in itertools.permutations(range(k)):
        ket = bra[:, sigma]
        out += T[tuple(bra[:, i][:, None] for i in range(k)) + tuple(ket[:, i][None, :] for i in range(k))]
    out /= np.sqrt(np.outer(fact, fact))
    return out


# ---------------------------------------------------------------- single-particle basis


@dataclass
class SingleParticleBasis:
    grid: Grid
    s: float
    energies: np.ndarray
    modes: np.ndarray  # (K, M), real, orthonormal under sum dx

    @property
    def K(self) -> int:
        return len(self.energies)

    def project(self, u: Field) -> np.ndarray:
        """Coefficients of u in the mode basis, renormalized to unit length."""
        c = self.modes @ u.values * self.grid.dx
        if np.abs(c.imag).max() > 1e-12 * np.abs(c).max():
            raise ValueError("mode basis is real; field must have a constant phase")
        c = c.real
        n = np.linalg.norm(c)
        if n == 0:
            raise ValueError("field has no overlap with the mode span")
        return c / n

    def field(self, c) -> Field:
        return Field(self.grid, np.asarray(c) @ self.modes)


def single_particle_basis(K: int, s: float = 2.0, grid: Grid | None = None) -> SingleParticleBasis:
    """K lowest eigenpairs of -d^2 + |x|^s using the spectral Laplacian on ``grid``."""
    grid = grid or Grid(12.0, 256)
    if not 1 <= K <= grid.M // 4:
        raise ValueError(f"K = {K} modes is out of range for M = {grid.M}")
    M = grid.M
    D2 = np.real(laplacian(np.eye(M), grid))  # columns are -k^2 applied to unit vectors
    H = -D2 + np.diag(np.abs(grid.x) ** s)
    H = 0.5 * (H + H.T)
    w, V = np.linalg.eigh(H)
    modes = V[:, :K].T / np.sqrt(grid.dx)
    # fix signs: first nonnegligible sample positive
    for i in range(K):
        j = int(np.argmax(np.abs(modes[i]) > 1e-8 * np.abs(modes[i]).max()))
        if modes[i, j] < 0:
            modes[i] *= -1
    return SingleParticleBasis(grid, s, w[:K].copy(), modes)


# ---------------------------------------------------------------- interaction tensors


def _pair_densities(basis: SingleParticleBasis) -> np.ndarray:
    """A[i, l, x] = phi_i(x) phi_l(x)."""
    m = basis.modes
    return m[:, None, :] * m[None, :, :]


def two_body_tensor(basis: SingleParticleBasis, params: ModelParams, N: float) -> np.ndarray:
    """T[i, j, k, l] = iint phi_i(x) phi_j(y) U_N(x - y) phi_k(x) phi_l(y)."""
    g = basis.grid
    K = basis.K
    A = _pair_densities(basis).reshape(K * K, g.M)
    Uh = np.fft.fft(scaled_two_body(params.two_body, N, params.alpha, g, allow_delta=params.allow_delta))
    C = np.fft.ifft(Uh[None, :] * np.fft.fft(A, axis=1), axis=1).real * g.dx
    T = (A @ C.T) * g.dx  # (ik), (jl)
    T = T.reshape(K, K, K, K).transpose(0, 2, 1, 3)
    return 0.5 * (T + T.transpose(1, 0, 3, 2))


def three_body_tensor(basis: SingleParticleBasis, params: ModelParams, N: float) -> np.ndarray:
    """T[i, j, k, l, m, n] = iiint phi_i phi_l(x) phi_j phi_m(y) phi_k phi_n(z) W_N(x - y, x - z)."""
    g = basis.grid
    K = basis.K
    dx = g.dx
    A = _pair_densities(basis).reshape(K * K, g.M)
    W = sampled_three_body(params.three_body, float(N), params.beta, g, params.allow_delta)
    if W.delta:
        T = np.einsum("px,qx,tx->pqt", A, A, A, optimize=True) * dx
    else:
        lam, Eh = W.factors
        FA = np.fft.fft(A, axis=1)
        C = np.fft.ifft(Eh[:, None, :] * FA[None, :, :], axis=2).real  # (R, P, M)
        Ct = np.ascontiguousarray(C.transpose(2, 1, 0))  # (M, P, R)
        G = (Ct * lam) @ Ct.transpose(0, 2, 1)  # (M, P, P): sum_r lam_r C_r[q] C_r[t]
        T = (A @ G.reshape(g.M, -1)).reshape((K * K,) * 3) * dx**3
    T = T.reshape((K,) * 6).transpose(0, 2, 4, 1, 3, 5)
    # symmetrize over simultaneous permutations of the particle pairs (i,l), (j,m), (k,n)
    out = np.zeros_like(T)
    for sigma in itertools.permutations(range(3)):
        out += T.transpose(*sigma, *(3 + np.array(sigma)))
    return out / 6.0


# ---------------------------------------------------------------- Hamiltonian


@dataclass
class ManyBodyHamiltonian:
    basis: SingleParticleBasis
    params: ModelParams
    N: int
    occ: np.ndarray
    diag: np.ndarray  # one-body part sum_k n_k eps_k
    c2: float
    c3: float
    M2: np.ndarray | None
    M3: np.ndarray | None
    P2: Parentage | None
    P3: Parentage | None
    T2: np.ndarray | None = None
    T3: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return len(self.occ)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v).ravel()
        out = self.diag * v
        if self.M2 is not None:
            X = self.P2.gather(v)
            out = out + self.c2 * self.P2.scatter(X @ self.M2.T, self.dim)
        if self.M3 is not None:
            X = self.P3.gather(v)
            out = out + self.c3 * self.P3.scatter(X @ self.M3.T, self.dim)
        return out

    def as_operator(self) -> LinearOperator:
        return LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=float)

    def to_dense(self) -> np.ndarray:
        if self.dim > 5000:
            raise CeilingError(f"dense assembly of a {self.dim}-dimensional Hamiltonian refused")
        return np.column_stack([self.matvec(e) for e in np.eye(self.dim)])

    def to_sparse(self) -> sparse.csr_matrix:
        return sparse.csr_matrix(self.to_dense())

    def product_energy(self, c: np.ndarray) -> float:
        """<u^N, H u^N> / N for u = sum c_i phi_i (unit c)."""
        c = np.asarray(c, dtype=float)
        N = self.N
        e = float(np.dot(self.basis.energies, c**2))
        if self.T2 is not None:
            e += self.c2 * math.comb(N, 2) / N * float(np.einsum("ijkl,i,j,k,l->", self.T2, c, c, c, c))
        if self.T3 is not None:
            e += self.c3 * math.comb(N, 3) / N * float(
                np.einsum("ijklmn,i,j,k,l,m,n->", self.T3, c, c, c, c, c, c, optimize=True))
        return e


def check_ceiling(N: int, K: int) -> None:
    lo, hi = N_RANGE
    if not lo <= N <= hi:
        raise CeilingError(f"N = {N} outside the supported range {lo}..{hi}")
    if K > MAX_MODES:
        raise CeilingError(f"K = {K} modes exceeds the ceiling K <= {MAX_MODES}")
    dim = dimension(N, K)
    if dim > MAX_DIM:
        raise CeilingError(f"basis dimension C(N+K-1, N) = {dim} exceeds {MAX_DIM}")
    if K**6 > MAX_TENSOR:
        raise CeilingError(f"three-body tensor needs K^6 = {K**6} entries (ceiling {MAX_TENSOR})")


def build_hamiltonian(params: ModelParams, basis: SingleParticleBasis, N: int) -> ManyBodyHamiltonian:
    """H = sum h_i + a/(N-1) sum_{i<j} U_N - b/((N-1)(N-2)) sum_{i<j<k} W_N in the occupation basis."""
    N = int(N)
    K = basis.K
    check_ceiling(N, K)
    occ = occupations(N, K)
    diag = occ @ basis.energies
    c2 = params.a / (N - 1)
    c3 = -params.b / ((N - 1) * (N - 2))
    T2 = T3 = M2 = M3 = P2 = P3 = None
    if params.a != 0:
        T2 = two_body_tensor(basis, params, N)
        P2 = Parentage(occ, N, 2)
        M2 = math.comb(N, 2) * symmetric_matrix(T2, P2.sub)
        M2 = 0.5 * (M2 + M2.T)
    if params.b != 0:
        T3 = three_body_tensor(basis, params, N)
        P3 = Parentage(occ, N, 3)
        M3 = math.comb(N, 3) * symmetric_matrix(T3, P3.sub)
        M3 = 0.5 * (M3 + M3.T)
    return ManyBodyHamiltonian(basis, params, N, occ, diag, c2, c3, M2, M3, P2, P3, T2, T3)


# ---------------------------------------------------------------- ground state


@dataclass
class ManyBodyState:
    occ: np.ndarray
    coeffs: np.ndarray
    N: int
    K: int

    def __post_init__(self):
        n = np.linalg.norm(self.coeffs)
        if abs(n - 1.0) > 1e-12:
            self.coeffs = self.coeffs / n

    @property
    def dim(self) -> int:
        return len(self.coeffs)

    @classmethod
    def product(cls, c, N: int) -> "ManyBodyState":
        """Coefficients of u^{(x)N} for u = sum c_i phi_i: sqrt(N!/prod n!) prod c^n."""
        c = np.asarray(c, dtype=float)
        K = len(c)
        occ = occupations(N, K)
        logf = np.array([math.lgamma(N + 1) - sum(math.lgamma(m + 1) for m in row) for row in occ])
        coeffs = np.sqrt(np.exp(logf)) * np.prod(c[None, :] ** occ, axis=1)
        return cls(occ, coeffs, N, K)


class LanczosFailure(RuntimeError):
    pass


def ground_state(H: ManyBodyHamiltonian, tol: float = 1e-9, seed: int = 0,
                 restarts: int = 3) -> tuple[float, ManyBodyState]:
    """Lowest eigenpair; returns the energy per particle and the state."""
    if H.dim <= 64:
        w, V = np.linalg.eigh(H.to_dense())
        e, v = w[0], V[:, 0]
    else:
        op = H.as_operator()
        rng = np.random.default_rng(seed)
        last = None
        for attempt in range(restarts + 1):
            v0 = rng.standard_normal(H.dim)
            try:
                w, V = eigsh(op, k=1, which="SA", v0=v0, tol=1e-13, maxiter=20 * H.dim + 1000)
            except (ArpackNoConvergence, ArpackError) as exc:
                last = exc
                log.info("Lanczos attempt %d failed: %s", attempt, exc)
                continue
            e, v = w[0], V[:, 0]
            break
        else:
            raise LanczosFailure(f"Lanczos failed after {restarts} restarts: {last}")
    v = v / np.linalg.norm(v)
    j = int(np.argmax(np.abs(v)))
    v = v * np.sign(v[j])
    resid = np.linalg.norm(H.matvec(v) - e * v)
    if resid > tol * max(1.0, abs(e)):
        raise LanczosFailure(f"eigenpair residual {resid:.3e} above {tol:g}")
    return float(e) / H.N, ManyBodyState(H.occ, v, H.N, H.basis.K)


# ---------------------------------------------------------------- reduced densities


@dataclass
class ReducedDensityMatrix:
    order: int
    matrix: np.ndarray
    sub: np.ndarray  # occupation labels of the k-particle basis

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    @property
    def condensate_fraction(self) -> float:
        return float(self.eigenvalues[-1])


def reduced_density(state: ManyBodyState, k: int = 1) -> ReducedDensityMatrix:
    """Trace-one k-particle density matrix (k = 1 on modes, k = 2 on symmetric pair states)."""
    if k not in (1, 2):
        raise ValueError(f"reduced density of order {k} is not supported (k in 1, 2)")
    if k > state.N:
        raise ValueError("order exceeds particle number")
    P = Parentage(state.occ, state.N, k)
    X = P.gather(state.coeffs)
    g = X.T @ X
    g = 0.5 * (g + g.T)
    g /= np.trace(g)
    return ReducedDensityMatrix(k, g, P.sub)


def trace_distance_pure(gamma: np.ndarray, c: np.ndarray) -> float:
    """Trace norm of gamma - |c><c|."""
    c = np.asarray(c, dtype=float)
    D = gamma - np.outer(c, c)
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T)))))


def condensation_distance(gamma: ReducedDensityMatrix, u: Field, basis: SingleParticleBasis) -> float:
    """Trace distance of gamma^(1) to the projector on u (projected to the mode span, renormalized)."""
    if gamma.order != 1:
        raise ValueError("condensation distance uses the one-particle density matrix")
    return trace_distance_pure(gamma.matrix, basis.project(u))


def rescaled_condensation(state: ManyBodyState, ell: float, basis: SingleParticleBasis,
                          profile=None) -> float:
    """Distance of the ell-rescaled gamma^(1) to the projector on ``profile`` (default Q0).

    The rescaled density matrix lives on the modes ell^(1/2) phi_i(ell x); the
    profile is projected onto that span and renormalized.
    """
    from .gns import q0

    profile = q0 if profile is None else profile
    g = basis.grid
    if not ell >= 8 * g.dx:
        raise ValueError(f"ell = {ell} is below the grid resolution (need ell >= 8 dx = {8 * g.dx:.3g})")
    # <ell^(1/2) phi_i(ell .), Q> = ell^(-1/2) int phi_i(y) Q(y / ell) dy
    c = basis.modes @ profile(g.x / ell) * g.dx / np.sqrt(ell)
    c = c / np.linalg.norm(c)
    return trace_distance_pure(reduced_density(state, 1).matrix, c)


# ---------------------------------------------------------------- orchestration


@dataclass
class EDResult:
    N: int
    K: int
    E_Q: float
    E_H_restricted: float
    condensate_fraction: float
    trace_distance: float
    state: ManyBodyState
    gamma1: ReducedDensityMatrix
    hartree_coeffs: np.ndarray

    def summary(self) -> dict:
        return {"N": self.N, "K": self.K, "E_Q_per_particle": self.E_Q,
                "E_H_restricted": self.E_H_restricted,
                "condensate_fraction": self.condensate_fraction,
                "trace_distance": self.trace_distance}


def run_ed(params: ModelParams, N: int, K: int = 8, grid: Grid | None = None, hartree_field: Field | None = None,
           solver_config=None, seed: int = 0) -> EDResult:
    """Ground state, Hartree comparison and condensation for one (params, N, K)."""
    from .solver import SolverConfig, minimize

    basis = single_particle_basis(K, params.s, grid)
    params = params.with_(N=float(N))
    H = build_hamiltonian(params, basis, N)
    E, psi = ground_state(H, seed=seed)
    if hartree_field is None:
        rep = minimize("hartree", params, solver_config or SolverConfig(), basis.grid, N=N)
        hartree_field = rep.field
    c = basis.project(hartree_field)
    E_H = H.product_energy(c)
    gamma = reduced_density(psi, 1)
    return EDResult(N, K, E, E_H, gamma.condensate_fraction, trace_distance_pure(gamma.matrix, c), psi, gamma, c)
