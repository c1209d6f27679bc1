import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bose3body.functionals import B_CRIT, ModelParams
from bose3body.gns import q0, q0_field
from bose3body.grid import Field, Grid, l2_distance, quadrature
from bose3body.solver import (
    ROUNDOFF, CollapseDetected, SolverConfig, UnstableParameters, classify, concentration_probe,
    gauge_fix, minimize, upper_bound_energy,
)


def assert_monotone(rep):
    E = np.asarray(rep.energies)
    band = ROUNDOFF * (np.abs(E) + rep.breakdown.kinetic + rep.breakdown.trap) + 1e-15
    assert np.all(np.diff(E) <= band[1:])


@pytest.fixture(scope="module")
def harmonic():
    return minimize("nls", ModelParams(a=0.0, b=0.0, s=2.0), SolverConfig(), Grid())


def test_harmonic_oscillator(harmonic):
    g = harmonic.field.grid
    assert harmonic.converged
    assert abs(harmonic.energy - 1.0) < 1e-6
    ref = Field(g, np.pi**-0.25 * np.exp(-g.x**2 / 2))
    assert l2_distance(harmonic.field, ref) < 1e-6
    assert abs(harmonic.field.mass - 1) < 1e-12
    assert harmonic.residual <= 1e-8
    assert_monotone(harmonic)


def test_rerun_from_converged_is_immediate(harmonic):
    cfg = SolverConfig(init="previous")
    rep = minimize("nls", ModelParams(), cfg, harmonic.field.grid, previous=harmonic.field)
    assert rep.converged and rep.iterations <= 2


def test_near_critical_below_trial_bound():
    b = 0.99 * B_CRIT
    rep = minimize("nls", ModelParams(a=0.0, b=b, s=2.0), SolverConfig(), Grid())
    ells = np.geomspace(0.1, 100, 20001)
    bound = upper_bound_energy(ells, 0.0, b, 2.0, 0.5).min()
    assert rep.converged
    assert rep.energy <= bound
    assert_monotone(rep)


@pytest.mark.parametrize("a,b", [(0.5, 0.5 * B_CRIT), (-1.0, 0.3 * B_CRIT), (2.0, B_CRIT)])
def test_stable_points_converge_monotonically(a, b):
    rep = minimize("nls", ModelParams(a=a, b=b), SolverConfig(), Grid())
    assert rep.converged and rep.residual <= 1e-8
    assert abs(rep.field.mass - 1) < 1e-12
    assert_monotone(rep)


def test_supercritical_refused_without_probe():
    with pytest.raises(UnstableParameters):
        minimize("nls", ModelParams(b=1.05 * B_CRIT), SolverConfig(), Grid())


def test_supercritical_collapses():
    cfg = SolverConfig(instability_probe=True, init="gaussian")
    with pytest.raises(CollapseDetected) as exc:
        minimize("nls", ModelParams(b=1.05 * B_CRIT), cfg, Grid())
    rep = exc.value.report
    assert rep.status == "collapse" and rep.energies[-1] < 0
    assert classify(rep, True) == "collapse"


def test_marginal_point_never_claims_convergence():
    cfg = SolverConfig(instability_probe=True, init="gaussian", max_iter=3000)
    rep = minimize("nls", ModelParams(a=0.0, b=B_CRIT), cfg, Grid())
    assert not rep.converged
    assert rep.status == "marginal"
    assert rep.energies[-1] < rep.energies[0] and rep.energies[-1] >= -1e-6
    assert rep.kinetics[-1] > 10 * rep.kinetics[0]
    assert classify(rep, False) == "marginal"


def test_probe_finds_unbounded_energy_above_threshold():
    p = ModelParams(a=1.0, b=1.1 * B_CRIT)
    assert concentration_probe(p, reference=0.0).unbounded
    assert not concentration_probe(ModelParams(a=1.0, b=0.9 * B_CRIT), reference=0.0).unbounded


def test_nls_energy_below_hartree_for_attractive_two_body():
    p = ModelParams(a=-0.5, b=0.5 * B_CRIT, N=100.0)
    g = Grid(20.0, 2048)
    en = minimize("nls", p, SolverConfig(), g).energy
    eh = minimize("hartree", p, SolverConfig(), g).energy
    assert en <= eh


def test_file_initializer(tmp_path):
    g = Grid(20.0, 512)
    path = tmp_path / "init.txt"
    np.savetxt(path, np.column_stack([g.x, np.exp(-g.x**2), np.zeros(g.M)]))
    rep = minimize("nls", ModelParams(), SolverConfig(init="file", init_file=str(path)), g)
    assert rep.converged and abs(rep.energy - 1) < 1e-8


@pytest.mark.parametrize("kw", [dict(tol=0.0), dict(max_iter=0), dict(backtrack=1.0),
                                dict(init="random"), dict(method="newton")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


@given(st.floats(-2.0, 2.0), st.floats(0, 2 * np.pi), st.floats(1.0, 2.0))
def test_gauge_fix_recovers_q0(shift, phase, ell):
    g = Grid(20.0, 1024)
    u = Field(g, np.exp(1j * phase) * np.sqrt(ell) * q0(ell * (g.x - shift)))
    v = gauge_fix(u)
    ref = q0_field(g, ell)
    assert l2_distance(v, ref) < 1e-9
    assert abs(quadrature(g.x * v.density, g)) < 1e-10
