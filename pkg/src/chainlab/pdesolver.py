"""Viscous reference solver for the stretch/momentum system on [0,1].

    r_t = p_x + eps (tau(r))_xx
    p_t = (tau(r))_x + eps p_xx

with the chain's boundary conditions: p(t,0) = 0 (pinned end),
tau(r(t,1)) = taubar(t) (forced end), and Neumann extra conditions
r_x(t,0) = 0, p_x(t,1) = 0 mirroring the conservative exchange noise.

The viscosity acts on tau(r), not on r, because that is the structure the
microscopic exchange terms induce; eps defaults to sigma(N)/N of the paired
chain run.  Explicit central differences on M uniform cells; ghost values are
chosen so the four boundary conditions hold exactly at the cell faces, which
makes the constant equilibrium state an exact fixed point of the scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .errors import BlowUp
from .microsim import TensionSchedule
from .thermo import ThermoModel

# macroscopic fields in this problem are O(1); anything past this is a
# diverged scheme, flagged before the tension tables ever see the values
ADMISSIBLE_RANGE = 20.0


@dataclass
class MacroField:
    r: np.ndarray
    p: np.ndarray
    t: float
    eps: float

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")

    @property
    def m_cells(self) -> int:
        return self.r.shape[0]

    @property
    def dx(self) -> float:
        return 1.0 / self.m_cells

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.m_cells) + 0.5) / self.m_cells


@dataclass
class MacroTrajectory:
    times: np.ndarray
    r: np.ndarray       # (F, M)
    p: np.ndarray       # (F, M)
    eps: float

    @property
    def m_cells(self) -> int:
        return self.r.shape[1]


def _padded(field: MacroField, taubar: float, thermo: ThermoModel):
    """tau and p arrays with ghost cells realizing the four conditions:
    antisymmetric p at x=0, symmetric r (hence tau) at x=0, tau forced to the
    face value taubar at x=1, symmetric p at x=1."""
    tau = np.asarray(thermo.tau_of_ell_vec(field.r), dtype=float)
    tau_pad = np.concatenate([[tau[0]], tau, [2.0 * taubar - tau[-1]]])
    p_pad = np.concatenate([[-field.p[0]], field.p, [field.p[-1]]])
    return tau_pad, p_pad


def macro_cfl_dt(field: MacroField, thermo: ThermoModel, safety: float = 0.4) -> float:
    """dt <= safety * min(dx / sqrt(max tau'), dx^2 / (2 eps max(tau', 1)));
    max tau' is bounded by the curvature ceiling c2."""
    dx = field.dx
    tp_max = thermo.potential.c2
    wave = dx / math.sqrt(tp_max)
    if field.eps > 0:
        diff = dx * dx / (2.0 * field.eps * max(tp_max, 1.0))
        return safety * min(wave, diff)
    return safety * wave


def macro_rhs(field: MacroField, taubar: float, thermo: ThermoModel):
    """Central-difference right-hand side (dr/dt, dp/dt) with ghost closure."""
    amax = max(np.max(np.abs(field.r)), np.max(np.abs(field.p)))
    if not np.isfinite(amax) or amax > ADMISSIBLE_RANGE:
        raise BlowUp(f"macro field left admissible range at t={field.t}")
    tau_pad, p_pad = _padded(field, taubar, thermo)
    dx = field.dx
    lap_tau = (tau_pad[2:] - 2.0 * tau_pad[1:-1] + tau_pad[:-2]) / (dx * dx)
    lap_p = (p_pad[2:] - 2.0 * p_pad[1:-1] + p_pad[:-2]) / (dx * dx)
    grad_tau = (tau_pad[2:] - tau_pad[:-2]) / (2.0 * dx)
    grad_p = (p_pad[2:] - p_pad[:-2]) / (2.0 * dx)
    return grad_p + field.eps * lap_tau, grad_tau + field.eps * lap_p


def macro_step(field: MacroField, dt: float, schedule: TensionSchedule,
               thermo: ThermoModel) -> MacroField:
    """One Heun (two-stage, second-order) step of the central scheme."""
    dr1, dp1 = macro_rhs(field, float(schedule.value(field.t)), thermo)
    stage = MacroField(field.r + dt * dr1, field.p + dt * dp1,
                       field.t + dt, field.eps)
    dr2, dp2 = macro_rhs(stage, float(schedule.value(field.t + dt)), thermo)
    r_new = field.r + 0.5 * dt * (dr1 + dr2)
    p_new = field.p + 0.5 * dt * (dp1 + dp2)
    return MacroField(r_new, p_new, field.t + dt, field.eps)


def boundary_report(field: MacroField, schedule: TensionSchedule,
                    thermo: ThermoModel) -> dict:
    """Face residuals of the four boundary conditions (exact to roundoff)."""
    taubar = float(schedule.value(field.t))
    tau_pad, p_pad = _padded(field, taubar, thermo)
    return {
        "p_left_face": 0.5 * (p_pad[0] + p_pad[1]),
        "r_neumann_left": (tau_pad[1] - tau_pad[0]) / field.dx,
        "tau_right_face": 0.5 * (tau_pad[-1] + tau_pad[-2]) - taubar,
        "p_neumann_right": (p_pad[-1] - p_pad[-2]) / field.dx,
    }


def totals(field: MacroField) -> tuple:
    """(sum r dx, sum p dx)."""
    dx = field.dx
    return float(field.r.sum() * dx), float(field.p.sum() * dx)


def boundary_fluxes(field: MacroField, schedule: TensionSchedule,
                    thermo: ThermoModel) -> tuple:
    """Exact telescoped boundary fluxes of the central scheme at eps = 0:
    d/dt sum r dx = p_face(1) - p_face(0), d/dt sum p dx = tau_face(1) - tau_face(0)."""
    taubar = float(schedule.value(field.t))
    tau_pad, p_pad = _padded(field, taubar, thermo)
    flux_r = 0.5 * (p_pad[-1] + p_pad[-2]) - 0.5 * (p_pad[0] + p_pad[1])
    flux_p = 0.5 * (tau_pad[-1] + tau_pad[-2]) - 0.5 * (tau_pad[0] + tau_pad[1])
    return float(flux_r), float(flux_p)


def equilibrium_stretch(thermo: ThermoModel, taubar: float) -> float:
    """Stretch r_eq with the solver's own tension map equal to taubar.

    Polished to a sub-ulp residual (exact zero where one exists in doubles),
    so the constant state is an exact fixed point: the leftover boundary flux
    times any stable dt underflows against the state itself."""
    r = float(thermo.grid.ell(taubar))
    for _ in range(60):
        resid = float(thermo.grid.tau(r)) - taubar
        if resid == 0.0:
            return r
        step = resid / float(thermo.grid.tau_prime(r))
        if r - step == r:
            break
        r -= step
    best_r, best = r, abs(float(thermo.grid.tau(r)) - taubar)
    for k in range(-4, 5):
        cand = r + k * np.spacing(r)
        resid = abs(float(thermo.grid.tau(cand)) - taubar)
        if resid < best:
            best_r, best = cand, resid
    return best_r


def solve(r0, p0, schedule: TensionSchedule, thermo: ThermoModel, eps: float,
          m_cells: int, t_end: float, frames_per_unit_time: float = 50.0,
          safety: float = 0.4) -> MacroTrajectory:
    """March to t_end recording frames on the same cadence contract as the
    chain integrator.  r0, p0 are callables on [0,1] or arrays of length M."""
    x = (np.arange(m_cells) + 0.5) / m_cells
    r = np.asarray(r0(x) if callable(r0) else r0, dtype=float).copy()
    p = np.asarray(p0(x) if callable(p0) else p0, dtype=float).copy()
    field = MacroField(r, p, 0.0, eps)

    n_frames = int(math.floor(t_end * frames_per_unit_time + 1e-9))
    times = np.arange(n_frames + 1) / frames_per_unit_time
    if times[-1] < t_end - 1e-12:
        times = np.concatenate([times, [t_end]])
    else:
        times[-1] = t_end

    dt_target = macro_cfl_dt(field, thermo, safety)
    frames_r = np.empty((len(times), m_cells))
    frames_p = np.empty((len(times), m_cells))
    frames_r[0] = field.r
    frames_p[0] = field.p
    for k in range(1, len(times)):
        seg = times[k] - times[k - 1]
        nsteps = max(1, int(math.ceil(seg / dt_target - 1e-12)))
        dt = seg / nsteps
        for _ in range(nsteps):
            field = macro_step(field, dt, schedule, thermo)
        frames_r[k] = field.r
        frames_p[k] = field.p
    return MacroTrajectory(times=times, r=frames_r, p=frames_p, eps=eps)


# --------------------------------------------------------------------------
# manufactured reference solution (harmonic tension, eps = 0)
# --------------------------------------------------------------------------

def standing_wave(amplitude: float = 1.0):
    """Closed-form standing wave of the linear system tau(r) = r with all four
    boundary conditions satisfied exactly:

        r(t,x) =  A (pi/2) cos(pi t / 2) cos(pi x / 2)
        p(t,x) = -A (pi/2) sin(pi t / 2) sin(pi x / 2)

    p(t,0) = 0, r(t,1) = 0 = taubar, r_x(t,0) = 0, p_x(t,1) = 0.
    Returns (r_fn, p_fn) accepting broadcastable (t, x)."""
    w = math.pi / 2.0

    def r_fn(t, x):
        return amplitude * w * np.cos(w * np.asarray(t)) * np.cos(w * np.asarray(x))

    def p_fn(t, x):
        return -amplitude * w * np.sin(w * np.asarray(t)) * np.sin(w * np.asarray(x))

    return r_fn, p_fn
