import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bose3body.functionals import B_CRIT, ModelParams, sampled_three_body
from bose3body.gns import q0
from bose3body.grid import Field, Grid
from bose3body.manybody import (
    CeilingError, ManyBodyState, build_hamiltonian, check_ceiling, condensation_distance,
    dimension, ground_state, occupations, reduced_density, rescaled_condensation, run_ed,
    single_particle_basis, three_body_tensor, trace_distance_pure, two_body_tensor,
)

GRID = Grid(12.0, 256)


@pytest.fixture(scope="module")
def basis8():
    return single_particle_basis(8, 2.0, GRID)


@pytest.fixture(scope="module")
def basis4():
    return single_particle_basis(4, 2.0, GRID)


@pytest.mark.parametrize("N,K", [(3, 1), (3, 4), (5, 8), (8, 12)])
def test_occupation_count(N, K):
    occ = occupations(N, K)
    assert len(occ) == dimension(N, K) == math.comb(N + K - 1, N)
    assert np.all(occ.sum(axis=1) == N)
    assert len({tuple(r) for r in occ}) == len(occ)


def test_basis_orthonormal_harmonic(basis8):
    G = basis8.modes @ basis8.modes.T * GRID.dx
    assert np.max(np.abs(G - np.eye(8))) < 1e-10
    assert np.all(np.diff(basis8.energies) >= 0)
    assert np.allclose(basis8.energies, 2 * np.arange(8) + 1, atol=1e-8)


def test_noninteracting_diagonal(basis8):
    H = build_hamiltonian(ModelParams(a=0.0, b=0.0), basis8, 4)
    D = H.to_dense()
    assert np.allclose(D, np.diag(H.occ @ basis8.energies), atol=0, rtol=0)
    E, psi = ground_state(H)
    assert abs(E - 1.0) < 1e-6
    gamma = reduced_density(psi, 1)
    assert np.linalg.matrix_rank(gamma.matrix, tol=1e-10) == 1
    assert gamma.matrix[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_two_body_tensor_symmetry(basis8):
    T = two_body_tensor(basis8, ModelParams(), 5.0)
    assert np.max(np.abs(T - T.transpose(1, 0, 3, 2))) < 1e-12
    assert np.max(np.abs(T - T.transpose(2, 3, 0, 1))) < 1e-12


def test_hamiltonian_hermitian(basis8):
    H = build_hamiltonian(ModelParams(a=1.0, b=0.5 * B_CRIT, alpha=0.4, beta=0.4), basis8, 4)
    D = H.to_dense()
    assert np.max(np.abs(D - D.T)) <= 1e-12


def _direct_three_body(basis, params, N):
    # brute-force offset sum over the sampled kernel, no factorization
    g = basis.grid
    W = sampled_three_body(params.three_body, float(N), params.beta, g, params.allow_delta)
    K = basis.K
    A = (basis.modes[:, None, :] * basis.modes[None, :, :]).reshape(K * K, g.M)
    p = np.arange(-W.J, W.J + 1)
    idx = (np.arange(g.M)[:, None] - p[None, :]) % g.M
    B = A[:, idx]  # (P, x, offset)
    Y = np.einsum("axp,pq,bxq->abx", B, W.matrix, B, optimize=True)
    T = np.einsum("ix,abx->iab", A, Y) * g.dx**3
    return T.reshape((K,) * 6).transpose(0, 2, 4, 1, 3, 5)


def _first_quantized(basis, params, N):
    K = basis.K
    h = np.diag(basis.energies)
    I = np.eye(K)
    c2 = params.a / (N - 1)
    c3 = -params.b / ((N - 1) * (N - 2))
    H = np.kron(np.kron(h, I), I) + np.kron(np.kron(I, h), I) + np.kron(np.kron(I, I), h)
    T2 = two_body_tensor(basis, params, N).reshape(K * K, K * K)
    # pair (1,2), (1,3), (2,3) operators embedded in the 3-particle product space
    V12 = np.kron(T2, I)
    swap23 = np.eye(K**3).reshape((K,) * 6).transpose(0, 2, 1, 3, 4, 5).reshape(K**3, K**3)
    swap12 = np.eye(K**3).reshape((K,) * 6).transpose(1, 0, 2, 3, 4, 5).reshape(K**3, K**3)
    V13 = swap23 @ V12 @ swap23
    V23 = swap12 @ V13 @ swap12
    H += c2 * (V12 + V13 + V23)
    # particle 1 sits at x in W(x - y, x - z); sum the three cyclic placements
    T3 = _direct_three_body(basis, params, N).reshape(K**3, K**3)
    cyc = swap12 @ swap23
    H += c3 * (T3 + cyc @ T3 @ cyc.T + cyc.T @ T3 @ cyc) / 3
    return H


def _symmetric_basis(N, K):
    occ = occupations(N, K)
    B = np.zeros((K**N, len(occ)))
    for col, n in enumerate(occ):
        modes = np.repeat(np.arange(K), n)
        for t in set(itertools.permutations(modes)):
            B[np.ravel_multi_index(t, (K,) * N), col] = 1.0
        B[:, col] /= np.linalg.norm(B[:, col])
    return B


@pytest.mark.parametrize("a,b", [(1.0, 0.0), (0.0, 0.5 * B_CRIT), (-0.7, 0.8 * B_CRIT)])
def test_matches_first_quantized_oracle(basis4, a, b):
    p = ModelParams(a=a, b=b, alpha=0.5, beta=0.5)
    H = build_hamiltonian(p, basis4, 3).to_dense()
    Hfq = _first_quantized(basis4, p, 3)
    B = _symmetric_basis(3, 4)
    Hsym = B.T @ Hfq @ B
    assert np.max(np.abs(H - Hsym)) < 1e-10
    # the symmetric block is invariant under the full Hamiltonian
    assert np.max(np.abs(Hfq @ B - B @ Hsym)) < 1e-10


def test_lanczos_matches_dense(basis8):
    H = build_hamiltonian(ModelParams(a=1.0, b=0.5 * B_CRIT, alpha=0.4, beta=0.4), basis8, 4)
    assert H.dim > 64
    E, _ = ground_state(H)
    assert E == pytest.approx(np.linalg.eigvalsh(H.to_dense())[0] / 4, abs=1e-11)


@given(st.integers(0, 10_000))
def test_energy_below_product_states(seed):
    basis = single_particle_basis(6, 2.0, GRID)
    H = build_hamiltonian(ModelParams(a=1.0, b=0.5 * B_CRIT, alpha=0.4, beta=0.4), basis, 3)
    c = np.random.default_rng(seed).standard_normal(6)
    c /= np.linalg.norm(c)
    E, _ = ground_state(H)
    psi = ManyBodyState.product(c, 3)
    direct = psi.coeffs @ H.matvec(psi.coeffs) / 3
    assert H.product_energy(c) == pytest.approx(direct, rel=1e-10, abs=1e-12)
    assert E <= H.product_energy(c) + 1e-10


def test_energy_decreasing_in_b(basis8):
    Es = [ground_state(build_hamiltonian(ModelParams(a=0.5, b=b, alpha=0.4, beta=0.4), basis8, 4))[0]
          for b in np.linspace(0, B_CRIT, 5)]
    assert all(e2 < e1 for e1, e2 in zip(Es, Es[1:]))


def test_product_state_density_is_projector():
    c = np.array([0.6, 0.0, 0.8, 0.0, 0.0])
    g1 = reduced_density(ManyBodyState.product(c, 5), 1)
    assert np.max(np.abs(g1.matrix - np.outer(c, c))) < 1e-14
    assert g1.condensate_fraction == pytest.approx(1.0, abs=1e-14)


@given(st.integers(0, 10_000), st.sampled_from([(3, 4), (4, 5), (5, 3)]), st.sampled_from([1, 2]))
def test_random_state_density_valid(seed, NK, k):
    N, K = NK
    occ = occupations(N, K)
    v = np.random.default_rng(seed).standard_normal(len(occ))
    g = reduced_density(ManyBodyState(occ, v, N, K), k)
    w = g.eigenvalues
    assert abs(g.trace - 1) < 1e-10
    assert w.min() >= -1e-12 and w.max() <= 1 + 1e-12
    assert np.max(np.abs(g.matrix - g.matrix.T)) < 1e-14


def test_density_order_limits():
    psi = ManyBodyState.product(np.array([1.0, 0.0]), 3)
    with pytest.raises(ValueError):
        reduced_density(psi, 3)


def test_bosonic_symmetry_spot_check(basis4):
    H = build_hamiltonian(ModelParams(a=1.0, b=0.5 * B_CRIT), basis4, 3)
    _, psi = ground_state(H)
    # amplitude on ordered mode triples, then the wavefunction on a coarse subgrid
    A = np.zeros((4,) * 3)
    for coef, n in zip(psi.coeffs, psi.occ):
        modes = np.repeat(np.arange(4), n)
        perms = set(itertools.permutations(modes))
        for t in perms:
            A[t] = coef / np.sqrt(len(perms))
    phi = basis4.modes[:, ::16]
    Psi = np.einsum("ijk,ia,jb,kc->abc", A, phi, phi, phi)
    for axes in [(1, 0, 2), (0, 2, 1), (2, 1, 0), (1, 2, 0)]:
        assert np.max(np.abs(Psi - Psi.transpose(axes))) < 1e-10


def test_trace_distance_extremes():
    e0, e1 = np.eye(3)[0], np.eye(3)[1]
    assert trace_distance_pure(np.outer(e0, e0), e0) == pytest.approx(0.0, abs=1e-15)
    assert trace_distance_pure(np.outer(e0, e0), e1) == pytest.approx(2.0, abs=1e-14)


def test_rescaled_condensation_identity(basis8):
    H = build_hamiltonian(ModelParams(a=1.0, b=0.5 * B_CRIT, alpha=0.4, beta=0.4), basis8, 3)
    _, psi = ground_state(H)
    q = Field(GRID, q0(GRID.x))
    d1 = rescaled_condensation(psi, 1.0, basis8)
    d0 = condensation_distance(reduced_density(psi, 1), q, basis8)
    assert d1 == pytest.approx(d0, abs=1e-12)


def test_rescaled_condensation_noninteracting_positive(basis8):
    _, psi = ground_state(build_hamiltonian(ModelParams(), basis8, 3))
    assert rescaled_condensation(psi, 1.0, basis8) > 1e-3


def test_rescaled_condensation_resolution(basis8):
    psi = ManyBodyState.product(np.eye(8)[0], 3)
    with pytest.raises(ValueError, match="resolution"):
        rescaled_condensation(psi, 0.1, basis8)


@pytest.mark.parametrize("N,K,msg", [(2, 4, "range"), (9, 4, "range"), (4, 13, "K = 13")])
def test_ceiling(N, K, msg):
    with pytest.raises(CeilingError, match=msg):
        check_ceiling(N, K)


def test_ceiling_admits_largest_supported_case():
    check_ceiling(8, 12)


def test_run_ed_noninteracting():
    res = run_ed(ModelParams(), 3, K=6, grid=GRID)
    assert abs(res.E_Q - 1) < 1e-6 and abs(res.E_H_restricted - 1) < 1e-6
    assert res.condensate_fraction == pytest.approx(1.0, abs=1e-10)
    assert set(res.summary()) == {"N", "K", "E_Q_per_particle", "E_H_restricted",
                                  "condensate_fraction", "trace_distance"}
