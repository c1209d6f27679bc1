import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bose3body.functionals import (
    B_CRIT, ModelParams, NotNormalizedError, apply_h, hartree_energy, hartree_gradient,
    interaction_gaps, nls_energy, nls_gradient, three_body_field,
)
from bose3body.gns import q0, q0_field
from bose3body.grid import Field, Grid, inner, kinetic_energy, normalize, quadrature
from bose3body.potentials import TwoBodyKernel, first_moment_two_body

Q2 = 0.5  # trap moment at s = 2


def smooth_field(grid, seed, width=1.0, shift=0.0):
    rng = np.random.default_rng(seed)
    x = grid.x - shift
    c = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    poly = c[0] + c[1] * x + c[2] * x**2 / 2 + c[3] * np.cos(x)
    return normalize(Field(grid, poly * np.exp(-0.5 * (x / width) ** 2)))


def test_q0_saturates_gns(grid):
    bd = nls_energy(q0_field(grid), ModelParams(a=0.0, b=B_CRIT, s=2.0))
    assert abs(bd.kinetic + bd.three_body) < 1e-8
    assert abs(bd.F) < 1e-8


@pytest.mark.parametrize("ell", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("a,b", [(0.0, 0.0), (1.0, 0.5 * B_CRIT), (-0.7, 0.9 * B_CRIT)])
def test_trial_state_energy_closed_form(ell, a, b):
    g = Grid(40.0, 4096)
    bd = nls_energy(q0_field(g, ell), ModelParams(a=a, b=b, s=2.0))
    ref = ell**2 * (B_CRIT - b) / 12 + ell * a / np.pi + ell**-2 * Q2 / 2
    assert bd.total == pytest.approx(ref, rel=1e-7)


def test_harmonic_ground_energy(grid):
    u = Field(grid, np.pi**-0.25 * np.exp(-grid.x**2 / 2))
    assert abs(nls_energy(u, ModelParams()).total - 1.0) < 1e-9


def test_breakdown_sums(grid):
    bd = nls_energy(smooth_field(grid, 1), ModelParams(a=0.3, b=2.0))
    assert bd.total == pytest.approx(bd.kinetic + bd.trap + bd.two_body + bd.three_body, rel=1e-12)
    assert bd.three_body <= 0


def test_energy_requires_unit_mass(grid):
    with pytest.raises(NotNormalizedError):
        nls_energy(2 * q0_field(grid), ModelParams())
    with pytest.raises(NotNormalizedError):
        nls_gradient(2 * q0_field(grid), ModelParams())


@pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
def test_phase_invariance(grid, theta):
    u = smooth_field(grid, 2)
    p = ModelParams(a=1.0, b=3.0)
    e1 = nls_energy(u, p).total
    e2 = nls_energy(u * np.exp(1j * theta), p).total
    assert abs(e1 - e2) <= 1e-14 * max(1.0, abs(e1))
    g = Grid(20.0, 512)
    v = smooth_field(g, 2)
    h1 = hartree_energy(v, p, N=10).total
    h2 = hartree_energy(v * np.exp(1j * theta), p, N=10).total
    assert abs(h1 - h2) <= 1e-13 * max(1.0, abs(h1))


def test_gradient_solves_quintic_equation(grid):
    # -Q0'' - (3/4) pi^2 Q0^5 = -(pi^2/4) Q0, trap contribution removed
    u = q0_field(grid)
    gr = nls_gradient(u, ModelParams(a=0.0, b=B_CRIT, s=2.0)).values
    r = gr - grid.x**2 * u.values + np.pi**2 / 4 * u.values
    assert np.sqrt(quadrature(np.abs(r) ** 2, grid)) < 1e-6


def test_linear_gradient_is_h(grid):
    u = Field(grid, np.pi**-0.25 * np.exp(-grid.x**2 / 2 + 0.3j * grid.x))
    p = ModelParams(s=2.0)
    assert np.max(np.abs(nls_gradient(u, p).values - apply_h(u.values, grid, p.trap))) < 1e-11


def _fd_check(energy, gradient, u, v, eps=1e-5):
    ep = energy(Field(u.grid, u.values + eps * v.values))
    em = energy(Field(u.grid, u.values - eps * v.values))
    fd = (ep - em) / (2 * eps)
    an = 2 * inner(gradient(u), v).real
    return fd, an


@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(0, 10))
def test_nls_gradient_finite_difference(seed, a, b):
    g = Grid(20.0, 512)
    u, v = smooth_field(g, seed), smooth_field(g, seed + 1, width=1.5, shift=0.3)
    p = ModelParams(a=a, b=b)
    fd, an = _fd_check(lambda w: nls_energy(w, p, check_mass=False).total,
                       lambda w: nls_gradient(w, p, check_mass=False), u, v)
    assert abs(fd - an) <= 1e-6 * max(1.0, abs(an))


@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(0, 10))
def test_hartree_gradient_finite_difference(seed, a, b):
    g = Grid(20.0, 512)
    u, v = smooth_field(g, seed), smooth_field(g, seed + 1, width=1.5, shift=0.3)
    p = ModelParams(a=a, b=b, N=10.0)
    fd, an = _fd_check(lambda w: hartree_energy(w, p, check_mass=False).total,
                       lambda w: hartree_gradient(w, p, check_mass=False), u, v)
    assert abs(fd - an) <= 1e-6 * max(1.0, abs(an))


def test_hartree_matches_nls_without_interactions(grid):
    u = smooth_field(grid, 5)
    p = ModelParams(a=0.0, b=0.0)
    assert hartree_energy(u, p, N=100).total == pytest.approx(nls_energy(u, p).total, rel=1e-14)


def test_delta_kernels_reproduce_nls(grid):
    u = smooth_field(grid, 6)
    p = ModelParams(a=1.3, b=4.0, allow_delta=True)
    with pytest.warns(UserWarning, match="discrete delta"):
        gh = hartree_gradient(u, p, N=1e12).values
        eh = hartree_energy(u, p, N=1e12).total
    gn = nls_gradient(u, p).values
    assert np.max(np.abs(gh - gn)) < 1e-9
    assert eh == pytest.approx(nls_energy(u, p).total, rel=1e-12)


def test_gradient_independent_of_two_body_kernel_when_a_zero():
    g = Grid(20.0, 512)
    u = smooth_field(g, 7)
    p1 = ModelParams(a=0.0, b=3.0, N=10.0)
    p2 = p1.with_(two_body=TwoBodyKernel.gaussian(0.5))
    assert np.array_equal(hartree_gradient(u, p1).values, hartree_gradient(u, p2).values)


@pytest.mark.parametrize("N", [1e2, 1e3, 1e4])
def test_hartree_interactions_bounded_by_nls(N):
    g = Grid(10.0, 8192)
    u = q0_field(g)
    p = ModelParams(a=1.0, b=B_CRIT / 2, alpha=0.5, beta=0.5)
    h, n = hartree_energy(u, p, N=N), nls_energy(u, p)
    assert h.two_body <= n.two_body
    assert abs(h.three_body) <= abs(n.three_body)
    # two-body rate bound with ||x U||_1, ||u||_6^3 and ||u'||_2
    six = np.sqrt(quadrature(u.density**3, g))
    bound = 2 * N**-0.5 * first_moment_two_body(p.two_body) * six * np.sqrt(kinetic_energy(u.values, g))
    assert abs(h.two_body - n.two_body) <= bound * p.a / 2


@given(st.integers(0, 10_000), st.sampled_from([3.0, 10.0, 100.0, 1000.0]))
def test_interaction_gaps_nonnegative(seed, N):
    g = Grid(20.0, 8192)
    u = smooth_field(g, seed, width=float(np.random.default_rng(seed).uniform(0.5, 2.0)))
    gap2, gap3 = interaction_gaps(u, ModelParams(alpha=0.5, beta=0.5), N)
    assert gap2 >= -1e-13 and gap3 >= -1e-13


@given(st.integers(0, 10_000), st.floats(0.2, 4.0))
def test_gns_inequality_random_fields(seed, width):
    g = Grid(20.0, 2048)
    u = smooth_field(g, seed, width=width)
    six = quadrature(u.density**3, g)
    assert B_CRIT / 6 * six <= kinetic_energy(u.values, g) * u.mass**2 + 1e-8


def test_three_body_routes_agree():
    g = Grid(20.0, 256)
    u = smooth_field(g, 11)
    p = ModelParams(N=1.0)
    rho = u.density
    ref = three_body_field(rho, p, g, route="direct")
    for route in ("lowrank", "fft2"):
        assert np.max(np.abs(three_body_field(rho, p, g, route=route) - ref)) < 1e-9 * np.max(np.abs(ref))


def test_unknown_route():
    g = Grid(20.0, 256)
    with pytest.raises(ValueError, match="route"):
        three_body_field(np.ones(g.M), ModelParams(N=1.0), g, route="magic")


@pytest.mark.parametrize("N", [1e3, 1e4])
def test_interaction_gaps_second_moment_expansion(N):
    # small-width expansion of the unit Gaussians: U has variance 1, W has
    # covariance [[2, 1], [1, 2]] / 3, giving gaps N^-2a int rho'^2 / 2 and N^-2b int rho rho'^2
    g = Grid(10.0, 8192)
    u = q0_field(g)
    rho = u.density
    drho = np.fft.ifft(1j * g.k * np.fft.fft(rho)).real
    gap2, gap3 = interaction_gaps(u, ModelParams(alpha=0.5, beta=0.5), N)
    assert gap2 == pytest.approx(0.5 / N * quadrature(drho**2, g), rel=5e-3)
    assert gap3 == pytest.approx(1 / N * quadrature(rho * drho**2, g), rel=5e-3)
