import math

import numpy as np
import pytest

from chainlab.errors import BlowUp
from chainlab import microsim as ms
from chainlab import observables as ob
from chainlab import pdesolver as pde


class TestFixedPoint:
    @pytest.mark.parametrize("tau", [0.0, 0.5, -0.7])
    def test_equilibrium_is_exact(self, th_kappa, tau):
        req = pde.equilibrium_stretch(th_kappa, tau)
        field = pde.MacroField(np.full(128, req), np.zeros(128), 0.0, 1e-3)
        sched = ms.TensionSchedule.constant(tau)
        out = field
        for _ in range(50):
            out = pde.macro_step(out, 1e-4, sched, th_kappa)
        # sub-ulp tension residual at the forced face can seed |p| ~ 1e-18;
        # anything above 1e-15 would indicate a real drift
        assert np.max(np.abs(out.r - req)) <= 1e-15
        assert np.max(np.abs(out.p)) <= 1e-15

    def test_equilibrium_harmonic(self, th_harmonic):
        req = pde.equilibrium_stretch(th_harmonic, 0.3)
        field = pde.MacroField(np.full(64, req), np.zeros(64), 0.0, 0.01)
        out = pde.macro_step(field, 1e-4, ms.TensionSchedule.constant(0.3), th_harmonic)
        assert np.max(np.abs(out.r - req)) <= 1e-15
        assert np.max(np.abs(out.p)) <= 1e-15


class TestManufactured:
    def test_convergence_order(self, th_harmonic):
        r_fn, p_fn = pde.standing_wave()
        errs = []
        grids = (64, 128, 256)
        for m in grids:
            traj = pde.solve(lambda x: r_fn(0.0, x), lambda x: p_fn(0.0, x),
                             ms.TensionSchedule.constant(0.0), th_harmonic,
                             eps=0.0, m_cells=m, t_end=0.5)
            x = (np.arange(m) + 0.5) / m
            errs.append(np.abs(traj.r[-1] - r_fn(0.5, x)).mean()
                        + np.abs(traj.p[-1] - p_fn(0.5, x)).mean())
        orders = [math.log2(errs[k] / errs[k + 1]) for k in range(len(errs) - 1)]
        assert min(orders) >= 1.8

    def test_zero_data_stays_zero(self, th_harmonic):
        traj = pde.solve(lambda x: np.zeros_like(x), lambda x: np.zeros_like(x),
                         ms.TensionSchedule.constant(0.0), th_harmonic,
                         eps=1e-3, m_cells=64, t_end=0.2)
        assert np.max(np.abs(traj.r)) < 1e-13
        assert np.max(np.abs(traj.p)) < 1e-13


class TestConservation:
    def test_rhs_telescopes_to_boundary_fluxes(self, th_kappa, rng):
        field = pde.MacroField(0.5 + 0.2 * rng.random(96),
                               0.2 * rng.standard_normal(96), 0.0, 0.0)
        sched = ms.TensionSchedule.constant(0.0)
        dr, dp = pde.macro_rhs(field, 0.0, th_kappa)
        fr, fp = pde.boundary_fluxes(field, sched, th_kappa)
        scale = max(1.0, np.max(np.abs(dr)), np.max(np.abs(dp)))
        assert abs(dr.sum() * field.dx - fr) < 1e-13 * scale
        assert abs(dp.sum() * field.dx - fp) < 1e-13 * scale

    def test_boundary_conditions_hold_each_step(self, th_kappa, rng):
        field = pde.MacroField(0.4 + 0.1 * rng.random(64),
                               0.1 * rng.standard_normal(64), 0.0, 2e-3)
        sched = ms.TensionSchedule.smooth_ramp(0.0, 0.5, 0.2)
        for _ in range(20):
            field = pde.macro_step(field, pde.macro_cfl_dt(field, th_kappa), sched, th_kappa)
            rep = pde.boundary_report(field, sched, th_kappa)
            assert all(abs(v) < 1e-12 for v in rep.values())


class TestViscositySweep:
    def test_vanishing_viscosity_cauchy_trend(self, th_kappa):
        r_fn, p_fn = pde.standing_wave(0.4)
        sols = {}
        m = 256
        for eps in (4e-3, 2e-3, 1e-3):
            sols[eps] = pde.solve(lambda x: r_fn(0.0, x), lambda x: p_fn(0.0, x),
                                  ms.TensionSchedule.constant(0.0), th_kappa,
                                  eps=eps, m_cells=m, t_end=0.3)
        d1 = np.abs(sols[4e-3].r[-1] - sols[2e-3].r[-1]).mean()
        d2 = np.abs(sols[2e-3].r[-1] - sols[1e-3].r[-1]).mean()
        assert d2 < d1

    def test_blowup_detected(self, th_harmonic):
        field = pde.MacroField(np.zeros(64), np.sin(np.linspace(0, 40, 64)), 0.0, 0.0)
        sched = ms.TensionSchedule.constant(0.0)
        with pytest.raises(BlowUp):
            for _ in range(3000):
                field = pde.macro_step(field, 0.3, sched, th_harmonic)  # ~20x CFL


class TestShockScenario:
    def test_bounded_variation_and_small_weak_residual(self, th_kappa):
        # fast boundary ramp on the asymmetric spring: total variation stays
        # bounded and the viscous solution nearly satisfies the weak form
        sched = ms.TensionSchedule.smooth_ramp(0.0, 0.6, 0.2)
        eps, m = 1e-3, 1024
        ell0 = pde.equilibrium_stretch(th_kappa, 0.0)
        traj = pde.solve(lambda x: np.full_like(x, ell0), lambda x: np.zeros_like(x),
                         sched, th_kappa, eps=eps, m_cells=m, t_end=0.5)
        tv = np.abs(np.diff(traj.r[-1])).sum()
        ell1 = pde.equilibrium_stretch(th_kappa, 0.6)
        assert tv < 3.0 * abs(ell1 - ell0)
        fld = ob.EmpiricalField.from_cells(traj.times, traj.r, traj.p)
        mat = ob.weak_residual_basis(fld, sched, th_kappa, k_max=8)
        assert np.abs(mat).max() < 2e-2
        assert np.abs(mat).mean() < 5e-3


def test_standing_wave_satisfies_the_system():
    r_fn, p_fn = pde.standing_wave()
    h = 1e-6
    t = np.linspace(0.05, 0.45, 9)[:, None]
    x = np.linspace(0.05, 0.95, 11)[None, :]
    r_t = (r_fn(t + h, x) - r_fn(t - h, x)) / (2 * h)
    p_x = (p_fn(t, x + h) - p_fn(t, x - h)) / (2 * h)
    p_t = (p_fn(t + h, x) - p_fn(t - h, x)) / (2 * h)
    r_x = (r_fn(t, x + h) - r_fn(t, x - h)) / (2 * h)
    assert np.max(np.abs(r_t - p_x)) < 1e-8
    assert np.max(np.abs(p_t - r_x)) < 1e-8
    tt = np.linspace(0, 1, 7)
    assert np.max(np.abs(p_fn(tt, 0.0))) == 0.0
    assert np.max(np.abs(r_fn(tt, 1.0))) < 1e-16
