import math

import numpy as np
import pytest

from bose3body import collapse
from bose3body.collapse import (
    CollapseRegime, RegimeError, check_eta, fit_rate, grid_for_scale, hartree_collapse_sweep,
    nls_collapse_sweep, regime_sequences, rescale, sweep_csv,
)
from bose3body.functionals import B_CRIT
from bose3body.gns import q0, q0_field
from bose3body.grid import Field, Grid, h1_distance, l2_distance


def test_b_driven_point_at_zeta_6():
    pt = CollapseRegime(zeta=6, s=2, c=3e-4, p=1).point(1)
    assert pt.ell == pytest.approx(0.1, rel=1e-12)
    assert pt.a == 0.0
    assert pt.b == pytest.approx(B_CRIT - 3e-4, rel=1e-15)
    assert math.isnan(pt.branch_diff)


def test_a_driven_point_at_zeta_0():
    pt = CollapseRegime(zeta=0, driver="a", c=np.pi * 0.5 * 1e-3).point(1)
    assert pt.ell == pytest.approx(0.1, rel=1e-12)
    assert pt.b == B_CRIT


def test_ratio_limit_zeta_6_is_zero():
    assert CollapseRegime(zeta=6).ratio_limit == 0.0


def test_ratio_residual_and_branches_converge():
    reg = CollapseRegime(zeta=3, s=2, kappa=1.0)
    pts = regime_sequences(reg, [1, 10, 100, 1000, 10000])
    res = [p.ratio_residual for p in pts]
    diff = [p.branch_diff for p in pts]
    assert all(b < a for a, b in zip(res, res[1:]))
    assert all(b < a for a, b in zip(diff, diff[1:]))
    # the companion carries the factor (1 + kappa ell), so the residual is kappa ell exactly
    assert res == pytest.approx([p.ell for p in pts], rel=1e-12)


def test_exact_companion_has_zero_residual():
    for p in regime_sequences(CollapseRegime(zeta=3), [1, 100]):
        assert p.ratio_residual < 1e-13 and p.branch_diff < 1e-13


@pytest.mark.parametrize("kw,msg", [
    (dict(zeta=-1.0), ">= 0"),
    (dict(zeta=math.inf), "inf"),
    (dict(zeta=0.0, driver="b"), "a-driven"),
    (dict(zeta=6.0, driver="a"), "b-driven"),
    (dict(c=0.0), "c > 0"),
    (dict(driver="x"), "driver"),
])
def test_regime_rejections(kw, msg):
    with pytest.raises(RegimeError, match=msg):
        CollapseRegime(**kw)


def test_degenerate_energy_coefficient():
    reg = CollapseRegime(zeta=18.0, s=2.0, driver="a")
    assert reg.degenerate
    assert reg.energy_coefficient == pytest.approx(0.0, abs=1e-15)
    assert not CollapseRegime(zeta=6.0).degenerate


def test_couplings_invert_ell():
    reg = CollapseRegime(zeta=3.0)
    a, b = reg.couplings(0.2)
    assert reg.ell_a(a) == pytest.approx(0.2, rel=1e-12)
    assert reg.ell_b(B_CRIT - b) == pytest.approx(0.2, rel=1e-12)


def test_eta_accepted():
    check_eta(0.08, 0.6, 0.5, 2.0, 6.0)


@pytest.mark.parametrize("eta,alpha,beta,zeta,msg", [
    (0.2, 0.6, 0.5, 6.0, r"beta/\(s\+3\)"),
    (0.08, 0.05, 0.5, 6.0, "eta < alpha"),
    (0.05, 0.5, 0.5, 0.0, "alpha > beta"),
    (0.0, 0.6, 0.5, 6.0, "positive"),
])
def test_eta_rejected(eta, alpha, beta, zeta, msg):
    with pytest.raises(RegimeError, match=msg):
        check_eta(eta, alpha, beta, 2.0, zeta)


def test_fit_rate_exact():
    xs = np.array([1.0, 2.0, 5.0, 10.0])
    f = fit_rate(xs, xs**2)
    assert f.exponent == pytest.approx(2.0, abs=1e-12)
    assert f.prefactor == pytest.approx(1.0, rel=1e-12)
    assert f.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_rate_noisy():
    rng = np.random.default_rng(0)
    xs = np.geomspace(1, 1e4, 12)
    ys = 3 * xs**0.5 * (1 + 0.01 * rng.standard_normal(xs.size))
    f = fit_rate(xs, ys)
    assert abs(f.exponent - 0.5) <= 0.02
    assert f.prefactor == pytest.approx(3.0, rel=0.05)


@pytest.mark.parametrize("xs,ys", [([1.0], [1.0]), ([1, 2], [1, 2]), ([1, 2, 3], [1, -2, 3]),
                                   ([0, 1, 2], [1, 2, 3])])
def test_fit_rate_rejects(xs, ys):
    with pytest.raises(ValueError):
        fit_rate(xs, ys)


def test_grid_for_scale():
    g = grid_for_scale(0.01, L=10.0, points_per_scale=20.0)
    assert g.dx <= 0.01 / 20 and (g.M == 1024 or 2 * g.L / (g.M // 2) > 0.01 / 20)


def test_rescale_identity_and_dilation():
    g = Grid(20.0, 1024)
    u = q0_field(g)
    v = rescale(u, 1.0, target=g)
    assert l2_distance(u, v) < 1e-12
    w = q0_field(Grid(10.0, 4096), 4.0)
    back = rescale(w, 0.25, target=Grid(20.0, 1024))
    assert h1_distance(back, u) < 1e-8


def test_rescale_window_outside_box():
    g = Grid(10.0, 256)
    with pytest.raises(ValueError, match="box"):
        rescale(q0_field(g), 2.0, target=Grid(10.0, 256))


@pytest.fixture(scope="module")
def zeta0_sweep():
    return nls_collapse_sweep(CollapseRegime(zeta=0, driver="a", c=1.0, p=1), [1, 10, 100, 1000])


def test_zeta0_profile_converges(zeta0_sweep):
    d = [r.h1_to_q0 for r in zeta0_sweep]
    assert all(r.ok for r in zeta0_sweep)
    assert all(b < a for a, b in zip(d, d[1:]))
    assert d[-1] < 0.05


def test_zeta0_gns_defect_vanishes(zeta0_sweep):
    F = [abs(r.F) for r in zeta0_sweep]
    assert all(b < a for a, b in zip(F, F[1:]))
    assert F[-1] < 1e-8


def test_zeta0_energy_ratio(zeta0_sweep):
    r = [abs(x.energy_ratio - 1) for x in zeta0_sweep]
    assert all(b < a for a, b in zip(r, r[1:]))


def test_sweep_partial_table_on_failure(monkeypatch):
    calls = {"n": 0}
    real = collapse.minimize

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("boom")
        return real(*args, **kw)

    monkeypatch.setattr(collapse, "minimize", flaky)
    rows = nls_collapse_sweep(CollapseRegime(zeta=6), [10, 100, 1000])
    assert [r.ok for r in rows] == [True, False, True]
    assert rows[1].status.startswith("failed")
    assert "failed: RuntimeError" in sweep_csv(rows)


def test_sweep_csv_layout():
    rows = nls_collapse_sweep(CollapseRegime(zeta=6), [10])
    text = sweep_csv(rows)
    lines = text.splitlines()
    n_cols = len(collapse.SWEEP_COLUMNS)
    assert all(l.startswith("# ") for l in lines[:n_cols])
    assert lines[n_cols].split(",")[0] == "n"
    assert len(lines[n_cols + 1].split(",")) == n_cols
    assert text == sweep_csv(nls_collapse_sweep(CollapseRegime(zeta=6), [10]))


def test_hartree_sweep_approaches_nls():
    rows = hartree_collapse_sweep(CollapseRegime(zeta=6), [10, 100, 1000], eta=0.08)
    assert all(r.ok for r in rows)
    gaps = [abs(r.energy / r.energy_nls - 1) for r in rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert all(r.energy >= r.energy_nls for r in rows)


def test_hartree_sweep_rejects_eta():
    with pytest.raises(RegimeError):
        hartree_collapse_sweep(CollapseRegime(zeta=6), [10], eta=0.2)
