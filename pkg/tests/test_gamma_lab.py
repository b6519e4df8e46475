import csv
import json

import numpy as np
import pytest
from numpy.polynomial import Polynomial as P

from vkribbon.cross_section import section_constants
from vkribbon.fe1d import Mesh1D
from vkribbon.limit_beta2 import BoundaryData, LimitState1D, energy_beta2, minimize_beta2
from vkribbon.limit_sub2 import SubState1D
from vkribbon.gamma_lab import (ConvergenceReport, SimpleFunction, SmoothState, bending_gap_beta2, default_grid,
                                gamma_sweep, random_polynomial_state, recovery_beta2, recovery_sub2, select_m_n)
from vkribbon.vk2d import Field2D, Grid2D, ScaledParams, energy_eps, membrane_components, minimize_eps


@pytest.fixture(scope="module")
def k(parabola):
    return section_constants(parabola)


def test_zero_state_recovers_natural_configuration(parabola, k):
    p = ScaledParams(0.1, 2.0)
    g = Grid2D(4, 2)
    f = recovery_beta2(LimitState1D.zeros(Mesh1D(1.0, 4)), p, parabola, g)
    assert np.all(f.vector == 0.0)
    rec = recovery_sub2(SubState1D.zeros(Mesh1D(1.0, 4)), BoundaryData(), parabola, ScaledParams(0.1, 1.0))
    assert energy_eps(rec.field, ScaledParams(0.1, 1.0), parabola, g).total < 1e-28


def test_recovery_rejects_wrong_beta(parabola):
    s = LimitState1D.zeros(Mesh1D(1.0, 4))
    with pytest.raises(ValueError):
        recovery_beta2(s, ScaledParams(0.1, 1.0), parabola, Grid2D(4, 2))
    with pytest.raises(ValueError):
        recovery_sub2(s, BoundaryData(), parabola, ScaledParams(0.1, 2.0))


@pytest.mark.parametrize("prof_name", ["parabola", "quartic"])
def test_recovery_exactness_beta2(prof_name, request):
    prof = request.getfixturevalue(prof_name)
    kk = section_constants(prof)
    rng = np.random.default_rng(11)
    mesh = Mesh1D(1.0, 4)
    g = Grid2D(8, 2)
    for _ in range(20):
        s = random_polynomial_state(mesh, rng)
        e1 = energy_beta2(s, kk).total
        for eps in (0.1, 0.05):
            p = ScaledParams(eps, 2.0)
            an = recovery_beta2(s, p, prof, g, analytic=True)
            mc = membrane_components(an, p, prof, g, nq=6)
            assert np.max(np.abs(mc["S12"])) < 1e-12 and np.max(np.abs(mc["S22"])) < 1e-12
            gap = energy_eps(an, p, prof, g, nq=6).total - e1
            assert gap == pytest.approx(bending_gap_beta2(s, p), abs=1e-10)


def test_interpolated_recovery_boundary_values(parabola):
    """The grid interpolant of a recovery field satisfies the clamping exactly at the ends."""
    from vkribbon.vk2d import apply_bc_eps
    from vkribbon.limit_beta2 import check_admissible, infer_bc
    rng = np.random.default_rng(4)
    s = random_polynomial_state(Mesh1D(1.0, 4), rng)
    p = ScaledParams(0.1, 2.0)
    f = recovery_beta2(s, p, parabola, Grid2D(8, 4))
    check_admissible(s, infer_bc(s))
    assert np.allclose(apply_bc_eps(f, infer_bc(s), p, parabola).vector, f.vector, atol=1e-15)


def _tension_state(lam):
    t = P([0.5, 1.0])
    return LimitState1D.from_polynomials(Mesh1D(1.0, 4), lam * t, 0.1 * t * t * P([1, 0.5]),
                                         0.2 * t * t * P([1, -1]), 0.1 * t * t)


def test_tension_recovery_s11_limit(parabola):
    lam = 0.2
    s = _tension_state(lam)
    st = SmoothState.from_beta2(s)
    bc = BoundaryData(Lambda1=lam)
    errs = []
    for eps in (1e-2, 1e-4, 1e-6):
        p = ScaledParams(eps, 1.0)
        rec = recovery_sub2(s, bc, parabola, p, n=1, m=SimpleFunction.constant(0.0, -0.5, 0.5), correctors=False)
        assert rec.p2 == 0.0
        mc = membrane_components(rec.field, p, parabola, Grid2D(8, 2), nq=8)
        x1, x2 = mc["x1"], mc["x2"]
        lim = st.xi1(x1, 1) + 0.5 * st.r(x1, 1) ** 2 - x2 * st.xi2(x1, 2)
        errs.append(np.sqrt(np.sum(mc["weights"] * (mc["S11"] - lim) ** 2)))
        assert np.max(np.abs(mc["S11"] - rec.s11_formula(st, parabola, p, x1, x2))) < 1e-13
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-4


@pytest.mark.parametrize("eps", [1e-2, 1e-4])
def test_sub2_recovery_membrane_cancellation(parabola, eps):
    p = ScaledParams(eps, 1.0)
    rec = recovery_sub2(SubState1D.zeros(Mesh1D(1.0, 4)), BoundaryData(Lambda1=-0.5), parabola, p, n=1)
    mc = membrane_components(rec.field, p, parabola, Grid2D(64, 2), nq=8)
    assert np.max(np.abs(mc["S12"])) < 1e-12 and np.max(np.abs(mc["S22"])) < 1e-12


def test_compression_recovery_energy_decreases(parabola):
    s = SubState1D.zeros(Mesh1D(1.0, 4))
    bc = BoundaryData(Lambda1=-0.5)
    energies = []
    for eps in (1e-2, 1e-4, 1e-6):
        p = ScaledParams(eps, 1.0)
        rec = recovery_sub2(s, bc, parabola, p, n=1)
        assert rec.p2 == pytest.approx(0.5)
        g = Grid2D(max(64, 32 * rec.zeta.n), 2)
        energies.append(energy_eps(rec.field, p, parabola, g, nq=8).total)
    assert energies[0] > energies[1] > energies[2]
    assert energies[2] < 0.05


def test_select_m_n(parabola):
    t = P([0.5, 1.0])
    s = SmoothState.from_beta2(LimitState1D.from_polynomials(Mesh1D(1.0, 2), -0.3 * t, P([0.0]), P([0.0]), P([0.0])))
    m, C = select_m_n(s, 4)
    assert np.allclose(m.values, 0.3, atol=1e-14)
    assert abs(C) < 1e-12


def test_recovery_is_upper_bound(parabola):
    bc = BoundaryData(Phi1=0.05)
    s, _ = minimize_beta2(bc, section_constants(parabola), Mesh1D(1.0, 16))
    p = ScaledParams(0.1, 2.0)
    g = Grid2D(16, 4)
    rec = recovery_beta2(s, p, parabola, g)
    e_rec = energy_eps(rec, p, parabola).total
    e_an = energy_eps(recovery_beta2(s, p, parabola, g, analytic=True), p, parabola, g, nq=6).total
    _, rep = minimize_eps(bc, p, parabola, g, x0=rec)
    assert rep.total <= e_rec
    assert rep.total <= e_an


def test_compression_recovery_is_upper_bound(parabola):
    bc = BoundaryData(Lambda1=-0.3)
    p = ScaledParams(0.1, 1.0)
    g = Grid2D(32, 4)
    rec = recovery_sub2(SubState1D.zeros(Mesh1D(1.0, 4)), bc, parabola, p, n=1)
    x0 = Field2D.interpolate(rec.field, g)
    _, rep = minimize_eps(bc, p, parabola, g, x0=x0)
    assert rep.total <= energy_eps(x0, p, parabola).total
    assert rep.total <= energy_eps(rec.field, p, parabola, g, nq=8).total


@pytest.mark.parametrize("beta", [1.0, 2.0])
def test_zero_data_sweep(parabola, beta):
    rep = gamma_sweep(BoundaryData(), beta, parabola, [0.2, 0.1], grids=[Grid2D(8, 2), Grid2D(8, 2)], n1d=8)
    assert rep.ok
    assert np.all(np.abs(rep.column("gap")) < 1e-10)


def test_sweep_rejects_unsorted_eps(parabola):
    with pytest.raises(ValueError):
        gamma_sweep(BoundaryData(), 2.0, parabola, [0.1, 0.2])


def test_sweep_records_row_errors(parabola):
    grids = [Grid2D(8, 2), Grid2D(8, 2, ell=2.0)]
    rep = gamma_sweep(BoundaryData(Phi1=0.05), 2.0, parabola, [0.2, 0.1], grids=grids, n1d=8)
    assert not rep.ok
    assert rep.rows[0]["error"] == "" and "ValueError" in rep.rows[1]["error"]


def test_torsion_sweep_gaps_shrink(parabola, tmp_path):
    eps = [0.2, 0.1, 0.05]
    rep = gamma_sweep(BoundaryData(Phi1=0.05), 2.0, parabola, eps)
    gaps = rep.column("gap")
    assert rep.ok and np.all(gaps > 0)
    assert np.all(rep.column("gap_ratio_vs_previous")[1:] < 1)
    assert rep.rows[-1]["relative_gap"] < 0.15
    path = tmp_path / "sweep.csv"
    rep.to_csv(path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["eps"]) for r in rows] == eps
    assert float(rows[-1]["gap"]) == gaps[-1]
    rep.write_json(tmp_path / "sweep.json")
    back = json.loads((tmp_path / "sweep.json").read_text())
    assert back["rows"][1]["energy_2d"] == rep.rows[1]["energy_2d"]


def test_default_grid_rules():
    assert (default_grid(0.1, 2.0).n1, default_grid(0.1, 2.0).n2) == (51, 8)
    g = default_grid(1e-3, 1.0)
    assert g.n1 >= 32 and g.n1 % 8 == 0


def test_report_columns():
    r = ConvergenceReport([{"eps": 0.1, "gap": 1.0}])
    assert np.isnan(r.column("energy_2d"))[0] and r.column("gap")[0] == 1.0
