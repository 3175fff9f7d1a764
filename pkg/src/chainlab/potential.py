"""Spring potentials for the chain.

Two concrete interactions are provided:

* ``harmonic``     -- V(r) = r^2/2, the exactly solvable test case.
* ``mollified_kappa`` -- a Gaussian mollification of
  r -> (1-kappa) r^2/2 + kappa r max(r,0)/2, the uniformly convex,
  asymmetric spring whose equilibrium tension is genuinely nonlinear.

The mollification acts on the curvature: V''(r) = (1-kappa) + kappa*Phi(r/delta)
with Phi the standard normal CDF, so V', V have closed forms in terms of
Phi and the normal density.  Integration constants: V(0) = 0 and
V'(r) -> (1-kappa) r as r -> -infinity, which gives V'(0) = kappa*delta*phi(0).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

SQRT_2PI = math.sqrt(2.0 * math.pi)


def _phi(z):
    """Standard normal density."""
    return np.exp(-0.5 * np.square(z)) / SQRT_2PI


class PotentialKind(enum.Enum):
    HARMONIC = "harmonic"
    MOLLIFIED_KAPPA = "mollified_kappa"


@dataclass(frozen=True)
class Potential:
    """Immutable spring potential with exact first and second derivatives.

    ``c1 <= V''(r) <= c2`` holds everywhere; the curvature approaches its
    asymptotic values exponentially fast in ``|r|/delta``.
    """

    kind: PotentialKind
    kappa: float = 0.0
    delta: float = 0.0

    @staticmethod
    def harmonic() -> "Potential":
        return Potential(PotentialKind.HARMONIC)

    @staticmethod
    def mollified_kappa(kappa: float = 0.2, delta: float = 0.1) -> "Potential":
        if not 0.0 < kappa < 1.0 / 3.0:
            raise ValueError(f"kappa must lie in (0, 1/3), got {kappa}")
        if delta <= 0.0:
            raise ValueError(f"delta must be positive, got {delta}")
        return Potential(PotentialKind.MOLLIFIED_KAPPA, kappa=kappa, delta=delta)

    @property
    def c1(self) -> float:
        """Lower curvature bound."""
        if self.kind is PotentialKind.HARMONIC:
            return 1.0
        return 1.0 - self.kappa

    @property
    def c2(self) -> float:
        """Upper curvature bound."""
        return 1.0

    def v(self, r):
        """Potential energy V(r), with V(0) = 0."""
        if self.kind is PotentialKind.HARMONIC:
            return 0.5 * np.square(r)
        k, d = self.kappa, self.delta
        z = np.asarray(r, dtype=float) / d
        bump = 0.5 * (np.square(z) + 1.0) * ndtr(z) + 0.5 * z * _phi(z) - 0.25
        out = 0.5 * (1.0 - k) * np.square(np.asarray(r, dtype=float)) + k * d * d * bump
        return out if out.ndim else float(out)

    def dv(self, r):
        """First derivative V'(r)."""
        if self.kind is PotentialKind.HARMONIC:
            return np.asarray(r, dtype=float) if np.ndim(r) else float(r)
        k, d = self.kappa, self.delta
        rr = np.asarray(r, dtype=float)
        z = rr / d
        out = (1.0 - k) * rr + k * (rr * ndtr(z) + d * _phi(z))
        return out if out.ndim else float(out)

    def ddv(self, r):
        """Second derivative V''(r)."""
        if self.kind is PotentialKind.HARMONIC:
            out = np.ones_like(np.asarray(r, dtype=float))
            return out if out.ndim else 1.0
        k, d = self.kappa, self.delta
        out = (1.0 - k) + k * ndtr(np.asarray(r, dtype=float) / d)
        return out if out.ndim else float(out)

    def dv_inverse(self, tau, tol: float = 1e-13, max_iter: int = 200):
        """Solve V'(r) = tau for r.  V' is strictly increasing with slope >= c1,
        so damped Newton from tau/c1 converges; used by the Gibbs sampler and the
        quadrature domain selection."""
        t = np.asarray(tau, dtype=float)
        x = t / self.c1
        for _ in range(max_iter):
            f = self.dv(x) - t
            x_new = x - f / self.ddv(x)
            if np.all(np.abs(self.dv(x_new) - t) < tol):
                return x_new if np.ndim(tau) else float(x_new)
            x = x_new
        raise NonConvergedNewton(float(np.max(np.abs(self.dv(x) - t))))


class NonConvergedNewton(RuntimeError):
    pass


def potential_from_config(kind: str, kappa: float = 0.2, delta: float = 0.1) -> Potential:
    """Build a potential from the config keys ``potential.kind/kappa/delta``."""
    kind = kind.strip().lower().replace("-", "_")
    if kind == "harmonic":
        return Potential.harmonic()
    if kind == "mollified_kappa":
        return Potential.mollified_kappa(kappa=kappa, delta=delta)
    raise ValueError(f"unknown potential kind {kind!r}")
