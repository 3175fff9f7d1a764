"""Single-spring thermodynamics at fixed inverse temperature.

For a spring with potential V under external tension tau, the log-partition
function is

    G(tau) = log \\int exp(-beta V(r) + beta tau r) dr,

the mean stretch is ell(tau) = beta^{-1} G'(tau), and the free energy
F(ell) = sup_tau { tau ell - beta^{-1} G(tau) } is its Legendre transform,
so tau(ell) = F'(ell) inverts ell(tau).

Two evaluation paths are kept deliberately separate:

* contract-grade scalars (`gibbs_G`, `ell_of_tau`, `tau_of_ell`,
  `free_energy_F`) backed by adaptive quadrature and safeguarded rootfinding,
  with absolute-error contracts;
* a precomputed grid with cubic splines (`grid`) for vectorized evaluation in
  field analysis, built once at construction on tau in [tau_lo, tau_hi].

`sample_site` draws exact samples from the single-site Gibbs measure
(momentum Gaussian, stretch by rejection under a uniform-convexity envelope).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import EnvelopeFailure, NonConvergedQuadrature, OutOfRange
from .potential import Potential

# exp(-TAIL_DECADES) is the integrand truncation level relative to its peak
TAIL_DECADES = 40.0


@dataclass
class ThermoGrid:
    """Vectorized spline tables for G, ell(tau), tau(ell), F(ell)."""

    tau_values: np.ndarray
    G_values: np.ndarray
    ell_values: np.ndarray
    F_values: np.ndarray
    _G_spline: CubicSpline = field(repr=False, default=None)
    _ell_spline: CubicSpline = field(repr=False, default=None)
    _tau_spline: CubicSpline = field(repr=False, default=None)
    _F_spline: CubicSpline = field(repr=False, default=None)

    def __post_init__(self):
        self._G_spline = CubicSpline(self.tau_values, self.G_values)
        self._ell_spline = CubicSpline(self.tau_values, self.ell_values)
        # ell_values is strictly increasing (beta * Var(r) > 0), so the
        # inverse map interpolates through the same nodes.
        self._tau_spline = CubicSpline(self.ell_values, self.tau_values)
        self._F_spline = CubicSpline(self.ell_values, self.F_values)

    @property
    def ell_lo(self):
        return self.ell_values[0]

    @property
    def ell_hi(self):
        return self.ell_values[-1]

    def G(self, tau):
        return self._G_spline(tau)

    def ell(self, tau):
        return self._ell_spline(tau)

    def tau(self, ell):
        return self._tau_spline(ell)

    def F(self, ell):
        return self._F_spline(ell)

    def tau_prime(self, ell):
        return self._tau_spline(ell, 1)


@dataclass
class CurvatureReport:
    """Divided-difference diagnostics of the tension map ell -> tau(ell)."""

    ell: np.ndarray
    tau: np.ndarray
    tau_prime: np.ndarray
    tau_second: np.ndarray
    min_tau_prime: float
    max_tau_prime: float
    min_tau_second: float
    strictly_hyperbolic: bool      # tau' > 0 on the grid
    genuinely_nonlinear: bool      # tau'' > 0 on the grid
    tau_prime_within_curvature_bounds: bool   # tau' in [c1, c2] up to tol
    ell_slope_within_bounds: bool             # ell'(tau) in [1/c2, 1/c1] up to tol


class ThermoModel:
    """Thermodynamic maps for one spring at fixed beta.

    Immutable after construction apart from on-demand grid extension, which
    atomically replaces the grid object.
    """

    def __init__(self, potential: Potential, beta: float = 1.0, *,
                 tau_lo: float = -3.0, tau_hi: float = 3.0, tau_step: float = 1e-3,
                 quad_tol: float = 1e-9, inv_tol: float = 1e-8):
        if beta <= 0:
            raise ValueError(f"beta must be positive, got {beta}")
        self.potential = potential
        self.beta = float(beta)
        self.quad_tol = float(quad_tol)
        self.inv_tol = float(inv_tol)
        self.tau_step = float(tau_step)
        self.grid = self._build_grid(tau_lo, tau_hi)

    # ---------------------------------------------------------------- grid

    def _gl_nodes(self, tau_lo: float, tau_hi: float):
        """Composite Gauss-Legendre nodes covering every integrand peak in
        [tau_lo, tau_hi] down to the truncation level."""
        pot, beta = self.potential, self.beta
        w = math.sqrt(2.0 * TAIL_DECADES / (beta * pot.c1))
        r_lo = pot.dv_inverse(tau_lo) - w
        r_hi = pot.dv_inverse(tau_hi) + w
        panel = 0.5 / math.sqrt(beta * pot.c1)
        n_panels = max(8, int(math.ceil((r_hi - r_lo) / panel)))
        x, wts = leggauss(12)
        edges = np.linspace(r_lo, r_hi, n_panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
        half = 0.5 * (edges[1] - edges[0])
        nodes = (mid + half * x[None, :]).ravel()
        weights = np.tile(half * wts, n_panels)
        return nodes, weights

    def _build_grid(self, tau_lo: float, tau_hi: float) -> ThermoGrid:
        n = int(round((tau_hi - tau_lo) / self.tau_step)) + 1
        taus = np.linspace(tau_lo, tau_hi, n)
        nodes, weights = self._gl_nodes(tau_lo, tau_hi)
        beta = self.beta
        bv = beta * self.potential.v(nodes)
        # exponent matrix handled in blocks to bound memory
        G = np.empty(n)
        ell = np.empty(n)
        block = max(1, int(4_000_000 // max(nodes.size, 1)))
        for a in range(0, n, block):
            b = min(a + block, n)
            ex = beta * np.outer(taus[a:b], nodes) - bv[None, :]
            m = ex.max(axis=1, keepdims=True)
            f = np.exp(ex - m)
            Z = f @ weights
            G[a:b] = m[:, 0] + np.log(Z)
            ell[a:b] = (f @ (weights * nodes)) / Z
        F = taus * ell - G / beta
        return ThermoGrid(taus, G, ell, F)

    # widest tension window the tables will cover; ell beyond ell(+-cap) is
    # outside any regime this laboratory works in and is refused loudly
    TAU_RANGE_CAP = 48.0

    def _extend_grid(self, ell_target: float):
        """Widen the tau range in one rebuild so ell_target is inside.

        ell(tau) >= tau/c2 - O(1), so tau = c2 (|ell| + 2) + 1 always covers it.
        """
        if not math.isfinite(ell_target):
            raise OutOfRange(f"ell={ell_target} is not finite")
        if self.grid.ell_lo <= ell_target <= self.grid.ell_hi:
            return
        need = self.potential.c2 * (abs(ell_target) + 2.0) + 1.0
        if need > self.TAU_RANGE_CAP:
            raise OutOfRange(
                f"ell={ell_target} needs tension beyond +-{self.TAU_RANGE_CAP}")
        span = max(need, self.grid.tau_values[-1], -self.grid.tau_values[0])
        self.grid = self._build_grid(-span, span)
        if not self.grid.ell_lo <= ell_target <= self.grid.ell_hi:
            raise OutOfRange(f"ell={ell_target} not bracketed after extension")

    # ------------------------------------------------- contract-grade scalars

    def _quad_moments(self, tau: float, order: int = 1):
        """Shifted-integrand moments by adaptive quadrature.

        Returns (log Z - shift bookkeeping folded in, mean[, var]).
        """
        pot, beta = self.potential, self.beta
        rstar = pot.dv_inverse(tau)
        hmax = -beta * pot.v(rstar) + beta * tau * rstar
        w = math.sqrt(2.0 * TAIL_DECADES / (beta * pot.c1))
        lo, hi = rstar - w, rstar + w

        def f(r):
            return math.exp(-beta * pot.v(r) + beta * tau * r - hmax)

        Z, errZ = quad(f, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=200)
        if errZ > self.quad_tol * Z:
            raise NonConvergedQuadrature(
                f"partition integral at tau={tau}: err {errZ:g} vs tol {self.quad_tol * Z:g}")
        G = hmax + math.log(Z)
        m1, err1 = quad(lambda r: (r - rstar) * f(r), lo, hi,
                        epsabs=1e-12, epsrel=1e-12, limit=200)
        mean = rstar + m1 / Z
        if (err1 + abs(m1 / Z) * errZ) / Z > 1e-8:
            raise NonConvergedQuadrature(f"first moment at tau={tau} did not converge")
        if order < 2:
            return G, mean
        v2, _ = quad(lambda r: (r - mean) ** 2 * f(r), lo, hi,
                     epsabs=1e-12, epsrel=1e-12, limit=200)
        return G, mean, v2 / Z

    def gibbs_G(self, tau: float) -> float:
        """log-partition function, absolute error <= quad_tol (default 1e-9)."""
        return self._quad_moments(float(tau))[0]

    def ell_of_tau(self, tau: float) -> float:
        """Mean stretch beta^{-1} dG/dtau, absolute error <= 1e-8."""
        return self._quad_moments(float(tau))[1]

    def var_of_tau(self, tau: float) -> float:
        """Stretch variance; beta * var is the slope of ell(tau)."""
        return self._quad_moments(float(tau), order=2)[2]

    def tau_of_ell(self, ell: float) -> float:
        """Invert ell(tau) by safeguarded Newton; |ell residual| <= inv_tol."""
        ell = float(ell)
        if not math.isfinite(ell):
            raise OutOfRange(f"ell must be finite, got {ell}")
        if not (self.grid.ell_lo <= ell <= self.grid.ell_hi):
            self._extend_grid(ell)
        tau = float(self.grid.tau(ell))
        lo, hi = self.grid.tau_values[0], self.grid.tau_values[-1]
        for _ in range(60):
            g, mean, var = self._quad_moments(tau, order=2)
            resid = mean - ell
            if abs(resid) <= self.inv_tol:
                return tau
            if resid > 0:
                hi = tau
            else:
                lo = tau
            tau_new = tau - resid / (self.beta * var)
            if not lo < tau_new < hi:
                tau_new = 0.5 * (lo + hi)
            tau = tau_new
        raise OutOfRange(f"tau_of_ell failed to converge at ell={ell}")

    def free_energy_F(self, ell: float) -> float:
        """Legendre transform tau* ell - beta^{-1} G(tau*)."""
        tau = self.tau_of_ell(ell)
        return tau * float(ell) - self.gibbs_G(tau) / self.beta

    # -------------------------------------------------- vectorized (spline)

    def _cover_ell(self, ell: np.ndarray):
        lo, hi = float(np.min(ell)), float(np.max(ell))
        if lo < self.grid.ell_lo:
            self._extend_grid(lo)
        if hi > self.grid.ell_hi:
            self._extend_grid(hi)

    def tau_of_ell_vec(self, ell):
        """Spline-backed tau(ell) for arrays; grid-extended on demand.
        Accuracy tracks the tabulation step (well below 1e-8 at the default)."""
        ell = np.asarray(ell, dtype=float)
        self._cover_ell(ell)
        return self.grid.tau(ell)

    def F_vec(self, ell):
        """Spline-backed F(ell) for arrays; grid-extended on demand."""
        ell = np.asarray(ell, dtype=float)
        self._cover_ell(ell)
        return self.grid.F(ell)

    def ell_of_tau_vec(self, tau):
        tau = np.asarray(tau, dtype=float)
        hi = float(np.max(np.abs(tau)))
        if hi > self.TAU_RANGE_CAP:
            raise OutOfRange(f"tau beyond +-{self.TAU_RANGE_CAP}")
        if hi > self.grid.tau_values[-1] or -hi < self.grid.tau_values[0]:
            span = max(hi + 1.0, self.grid.tau_values[-1], -self.grid.tau_values[0])
            self.grid = self._build_grid(-span, span)
        return self.grid.ell(tau)

    # ------------------------------------------------------------ diagnostics

    def tau_curvature_check(self, ell_grid, tol: float = 1e-3) -> CurvatureReport:
        """Estimate tau' and tau'' on a monotone ell grid by divided differences.

        Flags loss of strict hyperbolicity (tau' <= 0) and of genuine
        nonlinearity (tau'' <= 0), and compares tau' against the curvature
        window [c1, c2] (equivalently ell'(tau) against [1/c2, 1/c1]).
        """
        ell = np.asarray(ell_grid, dtype=float)
        if ell.ndim != 1 or ell.size < 3 or np.any(np.diff(ell) <= 0):
            raise ValueError("ell_grid must be a strictly increasing 1-D grid")
        tau = np.array([self.tau_of_ell(x) for x in ell])
        tp = np.gradient(tau, ell)
        ts = np.gradient(tp, ell)
        pot = self.potential
        min_tp, max_tp = float(tp.min()), float(tp.max())
        return CurvatureReport(
            ell=ell, tau=tau, tau_prime=tp, tau_second=ts,
            min_tau_prime=min_tp, max_tau_prime=max_tp,
            min_tau_second=float(ts.min()),
            strictly_hyperbolic=bool(tp.min() > 0.0),
            genuinely_nonlinear=bool(ts.min() > 0.0),
            tau_prime_within_curvature_bounds=bool(
                min_tp >= pot.c1 - tol and max_tp <= pot.c2 + tol),
            ell_slope_within_bounds=bool(
                1.0 / max_tp >= 1.0 / pot.c2 - tol and 1.0 / min_tp <= 1.0 / pot.c1 + tol),
        )

    # --------------------------------------------------------------- sampling

    def sample_site(self, pbar, tau, rng, size=None):
        """Exact draw from the single-site Gibbs measure.

        p ~ Normal(pbar, 1/beta); r by rejection with a Gaussian envelope of
        curvature c1 anchored at the tilted minimum, which dominates the target
        exactly by uniform convexity.  Raises EnvelopeFailure if dominance is
        violated (misconfigured curvature bounds).
        """
        beta, pot = self.beta, self.potential
        scalar_in = np.ndim(tau) == 0 and np.ndim(pbar) == 0 and size is None
        if size is not None:
            if not (np.ndim(tau) == 0 and np.ndim(pbar) == 0):
                raise ValueError("size= requires scalar pbar and tau")
            tau_b = np.full(size, float(tau))
            pbar_b = np.full(size, float(pbar))
        else:
            tau_b, pbar_b = np.broadcast_arrays(
                np.asarray(tau, dtype=float), np.asarray(pbar, dtype=float))
            tau_b = np.ascontiguousarray(tau_b, dtype=float)
            pbar_b = np.ascontiguousarray(pbar_b, dtype=float)

        rstar = np.asarray(pot.dv_inverse(tau_b), dtype=float)
        v_star = pot.v(rstar)
        dv_star = pot.dv(rstar)
        env_mean = rstar + (tau_b - dv_star) / pot.c1
        env_sd = 1.0 / math.sqrt(beta * pot.c1)

        r = np.empty_like(tau_b)
        pending = np.arange(tau_b.size)
        rs_f, vs_f, dvs_f, mu_f = (a.ravel() for a in (rstar, v_star, dv_star, env_mean))
        tau_f = tau_b.ravel()
        r_f = r.ravel()
        for _ in range(10_000):
            cand = mu_f[pending] + env_sd * rng.standard_normal(pending.size)
            d = cand - rs_f[pending]
            log_ratio = -beta * (
                pot.v(cand) - vs_f[pending] - dvs_f[pending] * d
                - 0.5 * pot.c1 * d * d)
            if np.any(log_ratio > 1e-9):
                raise EnvelopeFailure(
                    f"envelope dominance violated by {float(np.max(log_ratio)):g}")
            accept = np.log(rng.random(pending.size)) <= log_ratio
            r_f[pending[accept]] = cand[accept]
            pending = pending[~accept]
            if pending.size == 0:
                break
        else:
            raise EnvelopeFailure("rejection sampler failed to terminate")

        p = pbar_b + rng.standard_normal(tau_b.shape) / math.sqrt(beta)
        if scalar_in:
            return float(r), float(p)
        return r, p

    # ------------------------------------------------------------------ misc

    def duality_gap(self, tau: float) -> float:
        """F(ell(tau)) + beta^{-1} G(tau) - tau * ell(tau); zero in exact arithmetic."""
        ell = self.ell_of_tau(tau)
        return self.free_energy_F(ell) + self.gibbs_G(tau) / self.beta - tau * ell
