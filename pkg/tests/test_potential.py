import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from chainlab.potential import Potential, PotentialKind, potential_from_config


# ---------------------------------------------------------------------------
# oracle: rebuild V from ddv alone by double quadrature, anchored on the
# asymptotic left branch V'(r) -> (1-kappa) r and on V(0) = 0.
# ---------------------------------------------------------------------------

def dv_from_curvature(pot, s, r_far=-20.0):
    val, _ = quad(lambda u: pot.ddv(u), r_far, s, limit=400,
                  epsabs=1e-13, epsrel=1e-13)
    return (1.0 - pot.kappa) * r_far + val


def v_from_curvature(pot, r):
    val, _ = quad(lambda s: dv_from_curvature(pot, s), 0.0, r, limit=200,
                  epsabs=1e-12, epsrel=1e-12)
    return val


# value computed once with the quadrature oracle above and frozen
V_KAPPA_AT_0p3 = 0.04549979656491951


class TestHarmonic:
    def test_origin(self, pot_harmonic):
        assert pot_harmonic.v(0.0) == 0.0
        assert pot_harmonic.dv(0.0) == 0.0
        assert pot_harmonic.ddv(0.0) == 1.0

    def test_quadratic(self, pot_harmonic):
        r = np.linspace(-4, 4, 17)
        assert np.allclose(pot_harmonic.v(r), 0.5 * r * r, rtol=0, atol=0)

    def test_curvature_constants(self, pot_harmonic):
        assert pot_harmonic.c1 == 1.0 == pot_harmonic.c2


class TestMollifiedKappa:
    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            Potential.mollified_kappa(kappa=0.5)
        with pytest.raises(ValueError):
            Potential.mollified_kappa(kappa=0.0)
        with pytest.raises(ValueError):
            Potential.mollified_kappa(delta=0.0)

    def test_left_branch_curvature(self, pot_kappa):
        # Phi(-50) is far below double precision
        assert pot_kappa.ddv(-5.0) == pytest.approx(0.8, abs=1e-10)

    def test_curvature_window(self, pot_kappa):
        r = np.linspace(-10, 10, 4001)
        dd = pot_kappa.ddv(r)
        assert np.all(dd >= pot_kappa.c1 - 1e-12)
        assert np.all(dd <= pot_kappa.c2 + 1e-12)

    def test_exponential_tails(self, pot_kappa):
        assert abs(pot_kappa.ddv(10.0) - 1.0) < 1e-6
        assert abs(pot_kappa.ddv(-10.0) - 0.8) < 1e-6

    def test_dv_at_zero_matches_constant(self, pot_kappa):
        expect = pot_kappa.kappa * pot_kappa.delta / math.sqrt(2 * math.pi)
        assert pot_kappa.dv(0.0) == pytest.approx(expect, rel=1e-14)

    def test_v_at_zero(self, pot_kappa):
        assert pot_kappa.v(0.0) == pytest.approx(0.0, abs=1e-15)

    def test_v_against_double_quadrature_oracle(self, pot_kappa):
        closed = pot_kappa.v(0.3)
        assert closed == pytest.approx(V_KAPPA_AT_0p3, abs=1e-12)
        assert closed == pytest.approx(v_from_curvature(pot_kappa, 0.3), abs=5e-12)

    def test_dv_against_single_quadrature_oracle(self, pot_kappa):
        for r in (-1.0, 0.05, 0.3, 2.0):
            assert pot_kappa.dv(r) == pytest.approx(
                dv_from_curvature(pot_kappa, r), abs=5e-12)

    def test_left_branch_asymptote(self, pot_kappa):
        # V'(r) -> (1-kappa) r as r -> -inf
        r = -6.0
        assert pot_kappa.dv(r) == pytest.approx(0.8 * r, abs=1e-12)


@pytest.mark.parametrize("maker", [Potential.harmonic,
                                   lambda: Potential.mollified_kappa(0.2, 0.1),
                                   lambda: Potential.mollified_kappa(0.3, 0.05)])
def test_derivative_consistency(maker):
    pot = maker()
    h = 1e-5
    r = np.linspace(-10, 10, 801)
    fd_v = (pot.v(r + h) - pot.v(r - h)) / (2 * h)
    fd_dv = (pot.dv(r + h) - pot.dv(r - h)) / (2 * h)
    assert np.max(np.abs(fd_v - pot.dv(r))) < 1e-6
    assert np.max(np.abs(fd_dv - pot.ddv(r))) < 1e-6


@settings(max_examples=200, deadline=None)
@given(a=st.floats(-8, 8), b=st.floats(-8, 8), lam=st.floats(0, 1))
def test_convexity(a, b, lam):
    pot = Potential.mollified_kappa(0.2, 0.1)
    mid = lam * a + (1 - lam) * b
    assert pot.v(mid) <= lam * pot.v(a) + (1 - lam) * pot.v(b) + 1e-12


@pytest.mark.parametrize("maker", [Potential.harmonic,
                                   lambda: Potential.mollified_kappa(0.2, 0.1)])
def test_quadratic_growth_lower_bound(maker):
    pot = maker()
    r = np.linspace(-10, 10, 2001)
    lower = 0.5 * pot.c1 * r * r + pot.dv(0.0) * r + pot.v(0.0)
    assert np.all(pot.v(r) >= lower - 1e-10)


def test_config_selection():
    p = potential_from_config("harmonic")
    assert p.kind is PotentialKind.HARMONIC
    p = potential_from_config("mollified-kappa", kappa=0.25, delta=0.2)
    assert p.kind is PotentialKind.MOLLIFIED_KAPPA
    assert p.kappa == 0.25 and p.delta == 0.2
    with pytest.raises(ValueError):
        potential_from_config("lennard_jones")


def test_dv_inverse_roundtrip(pot_kappa):
    taus = np.linspace(-3, 3, 25)
    r = pot_kappa.dv_inverse(taus)
    assert np.max(np.abs(pot_kappa.dv(r) - taus)) < 1e-12
