import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import simpson
from scipy.optimize import brentq

from chainlab.errors import EnvelopeFailure, OutOfRange
from chainlab.potential import Potential
from chainlab.thermo import ThermoModel

LOG_2PI = math.log(2.0 * math.pi)

# frozen from the 10^6-point composite Simpson oracle on r in [-30, 30]
G_KAPPA_AT_0p5 = 1.0672496944904224
ELL_KAPPA_AT_0p5 = 0.4542262879668351


# ---------------------------------------------------------------------------
# independent oracle: fixed-grid composite Simpson rule
# ---------------------------------------------------------------------------

def simpson_gibbs(pot, beta, tau, n_pts=1_000_001, lo=-30.0, hi=30.0):
    r = np.linspace(lo, hi, n_pts)
    ex = -beta * pot.v(r) + beta * tau * r
    m = ex.max()
    f = np.exp(ex - m)
    Z = simpson(f, x=r)
    return m + math.log(Z), simpson(r * f, x=r) / Z


class TestHarmonicClosedForms:
    """G = log(2pi/beta)/2 + beta tau^2/2, ell = tau, F = ell^2/2 - log(2pi/beta)/(2beta)."""

    def test_G_at_zero(self, th_harmonic):
        assert th_harmonic.gibbs_G(0.0) == pytest.approx(0.5 * LOG_2PI, abs=1e-10)

    def test_G_at_one(self, th_harmonic):
        assert th_harmonic.gibbs_G(1.0) == pytest.approx(0.5 * LOG_2PI + 0.5, abs=1e-10)

    def test_ell_is_identity(self, th_harmonic):
        assert th_harmonic.ell_of_tau(0.7) == pytest.approx(0.7, abs=1e-9)

    def test_tau_is_identity(self, th_harmonic):
        assert th_harmonic.tau_of_ell(0.3) == pytest.approx(0.3, abs=1e-8)

    def test_F_closed_form(self, th_harmonic):
        assert th_harmonic.free_energy_F(0.0) == pytest.approx(-0.5 * LOG_2PI, abs=1e-9)
        assert th_harmonic.free_energy_F(1.0) == pytest.approx(0.5 - 0.5 * LOG_2PI, abs=1e-9)

    def test_beta_dependence(self):
        th = ThermoModel(Potential.harmonic(), beta=2.0)
        assert th.gibbs_G(0.4) == pytest.approx(0.5 * math.log(2 * math.pi / 2.0)
                                                + 2.0 * 0.4 ** 2 / 2.0, abs=1e-10)
        assert th.ell_of_tau(0.4) == pytest.approx(0.4, abs=1e-9)


class TestMollifiedOracle:
    def test_G_against_simpson_oracle(self, th_kappa):
        assert th_kappa.gibbs_G(0.5) == pytest.approx(G_KAPPA_AT_0p5, abs=1e-9)
        live, _ = simpson_gibbs(th_kappa.potential, 1.0, 0.5)
        assert th_kappa.gibbs_G(0.5) == pytest.approx(live, abs=1e-9)

    def test_ell_consistent_with_G_differences(self, th_kappa):
        h = 1e-4
        fd = (th_kappa.gibbs_G(0.5 + h) - th_kappa.gibbs_G(0.5 - h)) / (2 * h)
        assert th_kappa.ell_of_tau(0.5) == pytest.approx(fd, abs=1e-6)

    def test_ell_against_sampling_oracle(self, th_kappa, rng):
        n = 10_000_000
        r, _ = th_kappa.sample_site(0.0, 0.5, rng, size=n)
        se = r.std() / math.sqrt(n)
        assert abs(r.mean() - th_kappa.ell_of_tau(0.5)) < 4 * se

    def test_tau_of_ell_against_bisection_oracle(self, th_kappa):
        tau_star = brentq(
            lambda t: simpson_gibbs(th_kappa.potential, 1.0, t, n_pts=100_001)[1] - 1.0,
            -2.0, 4.0, xtol=1e-12)
        assert th_kappa.tau_of_ell(1.0) == pytest.approx(tau_star, abs=1e-7)

    def test_frozen_ell(self, th_kappa):
        assert th_kappa.ell_of_tau(0.5) == pytest.approx(ELL_KAPPA_AT_0p5, abs=1e-8)


class TestLegendreStructure:
    @pytest.mark.parametrize("tau", [-1.0, 0.0, 0.5, 2.0])
    def test_roundtrip(self, th_kappa, tau):
        assert th_kappa.tau_of_ell(th_kappa.ell_of_tau(tau)) == pytest.approx(tau, abs=1e-6)

    @pytest.mark.parametrize("tau", [-2.0, -0.3, 0.0, 0.8, 2.5])
    def test_duality_gap(self, th_kappa, tau):
        assert abs(th_kappa.duality_gap(tau)) < 1e-7

    def test_monotone(self, th_kappa):
        taus = np.linspace(-2.5, 2.5, 41)
        ells = np.array([th_kappa.ell_of_tau(t) for t in taus])
        assert np.all(np.diff(ells) > 0)
        back = np.array([th_kappa.tau_of_ell(e) for e in ells[::4]])
        assert np.all(np.diff(back) > 0)

    def test_F_convexity(self, th_kappa, rng):
        for _ in range(10):
            e1, e2 = rng.uniform(-1.5, 2.5, size=2)
            mid = th_kappa.free_energy_F(0.5 * (e1 + e2))
            avg = 0.5 * (th_kappa.free_energy_F(e1) + th_kappa.free_energy_F(e2))
            assert mid <= avg + 1e-9

    def test_F_prime_is_tau(self, th_kappa):
        h = 1e-4
        for ell in (-0.5, 0.4, 1.3):
            fd = (th_kappa.free_energy_F(ell + h) - th_kappa.free_energy_F(ell - h)) / (2 * h)
            assert fd == pytest.approx(th_kappa.tau_of_ell(ell), abs=1e-5)

    def test_grid_matches_contract_path(self, th_kappa):
        taus = np.linspace(-2.7, 2.7, 13)
        for t in taus:
            assert float(th_kappa.grid.G(t)) == pytest.approx(th_kappa.gibbs_G(t), abs=2e-9)
            assert float(th_kappa.grid.ell(t)) == pytest.approx(th_kappa.ell_of_tau(t), abs=2e-9)
        ells = np.linspace(-1.5, 2.0, 11)
        for e in ells:
            assert float(th_kappa.grid.tau(e)) == pytest.approx(th_kappa.tau_of_ell(e), abs=2e-8)

    def test_grid_extension(self, th_kappa):
        # outside the initial ell range; must extend rather than extrapolate
        tau = th_kappa.tau_of_ell(4.5)
        assert th_kappa.ell_of_tau(tau) == pytest.approx(4.5, abs=1e-7)
        with pytest.raises(OutOfRange):
            th_kappa.tau_of_ell(float("nan"))


class TestCurvature:
    def test_harmonic_is_linear(self, th_harmonic):
        rep = th_harmonic.tau_curvature_check(np.linspace(-2, 3, 51))
        assert rep.min_tau_prime == pytest.approx(1.0, abs=1e-6)
        assert rep.max_tau_prime == pytest.approx(1.0, abs=1e-6)
        assert abs(rep.min_tau_second) < 1e-6
        assert rep.strictly_hyperbolic
        assert not rep.genuinely_nonlinear    # symmetric spring: tau'' = 0

    def test_mollified_is_genuinely_nonlinear(self, th_kappa):
        rep = th_kappa.tau_curvature_check(np.linspace(-2, 3, 101))
        assert rep.strictly_hyperbolic
        assert rep.genuinely_nonlinear
        assert rep.min_tau_second > 0

    def test_slope_windows(self, th_kappa):
        # tau' stays in [c1, c2], equivalently ell'(tau) in [1/c2, 1/c1]
        rep = th_kappa.tau_curvature_check(np.linspace(-2, 3, 101))
        assert rep.tau_prime_within_curvature_bounds
        assert rep.ell_slope_within_bounds
        pot = th_kappa.potential
        assert rep.min_tau_prime >= pot.c1 - 1e-3
        assert rep.max_tau_prime <= pot.c2 + 1e-3

    def test_ell_slope_by_differences(self, th_kappa):
        h = 1e-3
        pot = th_kappa.potential
        for tau in (-1.0, 0.0, 0.5, 1.5):
            slope = (th_kappa.ell_of_tau(tau + h) - th_kappa.ell_of_tau(tau - h)) / (2 * h)
            assert 1.0 / pot.c2 - 1e-3 <= slope <= 1.0 / pot.c1 + 1e-3


class TestSampling:
    def test_moments(self, th_kappa, rng):
        n = 1_000_000
        r, p = th_kappa.sample_site(0.0, 0.5, rng, size=n)
        se_r = r.std() / math.sqrt(n)
        assert abs(r.mean() - th_kappa.ell_of_tau(0.5)) < 4 * se_r
        se_p = p.std() / math.sqrt(n)
        assert abs(p.mean()) < 4 * se_p
        p2 = p ** 2
        se_p2 = p2.std() / math.sqrt(n)
        assert abs(p2.mean() - 1.0) < 4 * se_p2
        vp = th_kappa.potential.dv(r)
        se_vp = vp.std() / math.sqrt(n)
        assert abs(vp.mean() - 0.5) < 4 * se_vp

    def test_harmonic_exact_gaussian(self, th_harmonic):
        rng = np.random.default_rng(7)
        r, _ = th_harmonic.sample_site(0.0, 0.7, rng, size=200_000)
        assert stats.kstest(r, "norm", args=(0.7, 1.0)).pvalue > 0.01

    def test_quadrature_matches_montecarlo_variance(self, th_kappa, rng):
        n = 2_000_000
        r, _ = th_kappa.sample_site(0.0, 0.5, rng, size=n)
        var_quad = th_kappa.var_of_tau(0.5)
        se = r.var() * math.sqrt(2.0 / n)
        assert abs(r.var() - var_quad) < 5 * se

    def test_vector_parameters(self, th_kappa, rng):
        tau = np.array([-0.5, 0.0, 1.0])
        pbar = np.array([0.1, -0.2, 0.0])
        r, p = th_kappa.sample_site(pbar, tau, rng)
        assert r.shape == (3,) and p.shape == (3,)

    def test_envelope_guard(self, th_kappa, rng):
        # lying about the lower curvature bound must trip the dominance check
        with pytest.raises(EnvelopeFailure):
            _sample_with_inflated_c1(th_kappa, rng)


class _InflatedC1:
    """Potential wrapper claiming more curvature than it has."""

    def __init__(self, pot):
        self._pot = pot

    def __getattr__(self, name):
        return getattr(self._pot, name)

    @property
    def c1(self):
        return 2.0


def _sample_with_inflated_c1(model, rng):
    fake = ThermoModel.__new__(ThermoModel)
    fake.potential = _InflatedC1(model.potential)
    fake.beta = model.beta
    fake.quad_tol = model.quad_tol
    fake.inv_tol = model.inv_tol
    fake.tau_step = model.tau_step
    fake.grid = model.grid
    fake.sample_site(0.0, 0.5, rng, size=10_000)
