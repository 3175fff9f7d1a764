"""Euler-Maruyama integration of the tension-forced chain.

Sites i = 1..N carry stretch r_i and momentum p_i; particle 0 is pinned
(p_0 = 0) and a time-dependent tension acts on the right end.  Per unit
macroscopic time the drift is

    dr_1 = N p_1            + sN (V'_2 - V'_1)
    dr_i = N (p_i - p_{i-1}) + sN (V'_{i+1} - 2 V'_i + V'_{i-1})
    dr_N = N (p_N - p_{N-1}) + sN (taubar + V'_{N-1} - 2 V'_N)
    dp_1 = N (V'_2 - V'_1)   + sN (p_2 - 2 p_1)
    dp_j = N (V'_{j+1} - V'_j) + sN (p_{j+1} - 2 p_j + p_{j-1})
    dp_N = N (taubar - V'_N) - sN (p_N - p_{N-1})

with sN = sigma * N, and the noise enters through one scalar Gaussian per
exchanging pair plus one per boundary operator, scaled by
sqrt(2 sigma N dt / beta):

    r-drivers xt_1..xt_N : pair (r_i, r_{i+1}) gets -+xt_i; xt_N acts as -xt_N
                           on r_N alone,
    p-drivers xi_0..xi_{N-1}: xi_0 acts as +xi_0 on p_1 alone; pair
                           (p_j, p_{j+1}) gets -+xi_j.

Shared increments with opposite signs make the bulk exchange conservative by
construction: Sum r changes only through xt_N and the right-boundary drift,
Sum p only through xi_0 and the pinned end.

The production integrator is a numba kernel consuming noise pregenerated in
chunks from a numpy Generator; `drift`, `noise_increments` and `step` are the
pure-numpy reference implementation used for tests and small runs.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BlowUp, ConfigInvalid
from .potential import Potential, PotentialKind
from .thermo import ThermoModel

BLOWUP_LIMIT = 1e8
_NOISE_CHUNK = 2048


# --------------------------------------------------------------------------
# tension schedules
# --------------------------------------------------------------------------

class ScheduleKind(enum.Enum):
    CONSTANT = "constant"
    SMOOTH_RAMP = "smooth_ramp"
    CUSTOM = "custom"


@dataclass(frozen=True)
class TensionSchedule:
    """C^1 boundary tension taubar(t) with an exact derivative.

    SMOOTH_RAMP follows the cubic smoothstep from tau0 to tau1 over
    [0, t_ramp] and is constant outside; CUSTOM is a C^1 piecewise-cubic
    Hermite through (times, values, slopes) knots, constant outside.
    """

    kind: ScheduleKind
    tau0: float = 0.0
    tau1: float = 0.0
    t_ramp: float = 1.0
    t_start: float = 0.0
    knots_t: tuple = ()
    knots_v: tuple = ()
    knots_d: tuple = ()

    @staticmethod
    def constant(tau: float) -> "TensionSchedule":
        return TensionSchedule(ScheduleKind.CONSTANT, tau0=float(tau), tau1=float(tau))

    @staticmethod
    def smooth_ramp(tau0: float, tau1: float, t_ramp: float,
                    t_start: float = 0.0) -> "TensionSchedule":
        if t_ramp <= 0:
            raise ValueError("t_ramp must be positive")
        return TensionSchedule(ScheduleKind.SMOOTH_RAMP, float(tau0), float(tau1),
                               float(t_ramp), float(t_start))

    @staticmethod
    def custom_cubic(times: Sequence[float], values: Sequence[float],
                     slopes: Sequence[float]) -> "TensionSchedule":
        t = tuple(float(x) for x in times)
        if len(t) < 2 or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("knot times must be strictly increasing, >= 2 knots")
        v = tuple(float(x) for x in values)
        d = tuple(float(x) for x in slopes)
        if len(v) != len(t) or len(d) != len(t):
            raise ValueError("values/slopes must match knot times")
        if d[0] != 0.0 or d[-1] != 0.0:
            raise ValueError("end slopes must vanish so the schedule is C^1 on all of R")
        return TensionSchedule(ScheduleKind.CUSTOM, tau0=v[0], tau1=v[-1],
                               knots_t=t, knots_v=v, knots_d=d)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is ScheduleKind.CONSTANT:
            out = np.full_like(t, self.tau0)
        elif self.kind is ScheduleKind.SMOOTH_RAMP:
            u = np.clip((t - self.t_start) / self.t_ramp, 0.0, 1.0)
            out = self.tau0 + (self.tau1 - self.tau0) * u * u * (3.0 - 2.0 * u)
        else:
            out = self._hermite(t, derivative=False)
        return out if out.ndim else float(out)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is ScheduleKind.CONSTANT:
            out = np.zeros_like(t)
        elif self.kind is ScheduleKind.SMOOTH_RAMP:
            u = (t - self.t_start) / self.t_ramp
            inside = (u > 0.0) & (u < 1.0)
            uu = np.clip(u, 0.0, 1.0)
            out = np.where(inside,
                           (self.tau1 - self.tau0) * 6.0 * uu * (1.0 - uu) / self.t_ramp,
                           0.0)
        else:
            out = self._hermite(t, derivative=True)
        return out if out.ndim else float(out)

    def _hermite(self, t, derivative: bool):
        kt = np.asarray(self.knots_t)
        kv = np.asarray(self.knots_v)
        kd = np.asarray(self.knots_d)
        tc = np.clip(t, kt[0], kt[-1])
        j = np.clip(np.searchsorted(kt, tc, side="right") - 1, 0, len(kt) - 2)
        h = kt[j + 1] - kt[j]
        s = (tc - kt[j]) / h
        v0, v1, d0, d1 = kv[j], kv[j + 1], kd[j], kd[j + 1]
        if not derivative:
            h00 = (1 + 2 * s) * (1 - s) ** 2
            h10 = s * (1 - s) ** 2
            h01 = s * s * (3 - 2 * s)
            h11 = s * s * (s - 1)
            return h00 * v0 + h10 * h * d0 + h01 * v1 + h11 * h * d1
        g00 = 6 * s * (s - 1)
        g10 = (1 - s) * (1 - 3 * s)
        g01 = 6 * s * (1 - s)
        g11 = s * (3 * s - 2)
        return (g00 * v0 / h + g10 * d0 + g01 * v1 / h + g11 * d1)


# --------------------------------------------------------------------------
# configuration and state
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SimConfig:
    n_sites: int
    potential: Potential
    schedule: TensionSchedule
    beta: float = 1.0
    alpha_sigma: float = 0.25
    dt_safety: float = 0.25
    t_end: float = 0.5
    frames_per_unit_time: float = 50.0
    record_times: Optional[tuple] = None
    seed: int = 0
    block_l_override: Optional[int] = None
    sigma_override: Optional[float] = None
    noise_enabled: bool = True
    engine: str = "numba"

    def __post_init__(self):
        problems = []
        if self.n_sites < 3:
            problems.append(f"n_sites must be >= 3, got {self.n_sites}")
        if not 0.0 < self.alpha_sigma < 0.5:
            problems.append(f"alpha_sigma must lie in (0, 1/2), got {self.alpha_sigma}")
        if not 0.0 < self.dt_safety < 1.0:
            problems.append(f"dt_safety must lie in (0, 1), got {self.dt_safety}")
        if self.beta <= 0:
            problems.append(f"beta must be positive, got {self.beta}")
        if self.t_end <= 0:
            problems.append(f"t_end must be positive, got {self.t_end}")
        if self.engine not in ("numba", "numpy"):
            problems.append(f"engine must be 'numba' or 'numpy', got {self.engine!r}")
        if problems:
            raise ConfigInvalid(problems)

    @property
    def sigma(self) -> float:
        """Noise strength sigma(N); N^{1/2+alpha} unless overridden."""
        if self.sigma_override is not None:
            return float(self.sigma_override)
        return float(self.n_sites) ** (0.5 + self.alpha_sigma)

    @property
    def block_l(self) -> int:
        """Block half-width l = floor(N^{1/4} sigma^{1/2}) unless overridden."""
        if self.block_l_override is not None:
            return int(self.block_l_override)
        return int(math.floor(self.n_sites ** 0.25 * math.sqrt(self.sigma)))

    def frame_times(self) -> np.ndarray:
        if self.record_times is not None:
            times = np.asarray(self.record_times, dtype=float)
            if times[0] != 0.0:
                times = np.concatenate([[0.0], times])
            return times
        n = int(math.floor(self.t_end * self.frames_per_unit_time + 1e-9))
        times = np.arange(n + 1) / self.frames_per_unit_time
        if times[-1] < self.t_end - 1e-12:
            times = np.concatenate([times, [self.t_end]])
        else:
            times[-1] = self.t_end
        return times


@dataclass
class ChainState:
    r: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.r.shape != self.p.shape:
            raise ValueError("r and p must have the same shape")

    @property
    def n_sites(self) -> int:
        return self.r.shape[-1]

    def check_finite(self):
        if not (np.all(np.isfinite(self.r)) and np.all(np.isfinite(self.p))):
            raise BlowUp(f"non-finite state entry at t={self.t}")


# --------------------------------------------------------------------------
# reference (numpy) dynamics
# --------------------------------------------------------------------------

def stable_dt(cfg: SimConfig) -> float:
    """Explicit-scheme step: dt_safety * min(1/(4 sigma N max(c2,1)), 1/(N sqrt(c2)))."""
    n = cfg.n_sites
    c2 = cfg.potential.c2
    wave = 1.0 / (n * math.sqrt(c2))
    sig = cfg.sigma
    if sig > 0 and cfg.noise_enabled:
        diff = 1.0 / (4.0 * sig * n * max(c2, 1.0))
        return cfg.dt_safety * min(diff, wave)
    return cfg.dt_safety * wave


def drift(r, p, t, cfg: SimConfig, periodic: bool = False, taubar: Optional[float] = None):
    """Deterministic drift (dr, dp) per unit macroscopic time.

    Broadcasts over leading axes; the site axis is the last one.  With
    periodic=True every site uses the interior stencil with wrap-around
    neighbours and no boundary forcing (conservation tests only).  Disabling
    the noise removes the whole heat-bath contribution, drift terms included.
    """
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    n = r.shape[-1]
    nn = float(n)
    sn = cfg.sigma * nn if cfg.noise_enabled else 0.0
    vp = cfg.potential.dv(r)
    if periodic:
        vp_m = np.roll(vp, 1, axis=-1)
        vp_p = np.roll(vp, -1, axis=-1)
        p_m = np.roll(p, 1, axis=-1)
        p_p = np.roll(p, -1, axis=-1)
        dr = nn * (p - p_m) + sn * (vp_p - 2.0 * vp + vp_m)
        dp = nn * (vp_p - vp) + sn * (p_p - 2.0 * p + p_m)
        return dr, dp
    if taubar is None:
        taubar = float(cfg.schedule.value(t))
    dr = np.empty_like(r)
    dp = np.empty_like(p)
    dr[..., 0] = nn * p[..., 0] + sn * (vp[..., 1] - vp[..., 0])
    dr[..., 1:-1] = nn * (p[..., 1:-1] - p[..., :-2]) + sn * (
        vp[..., 2:] - 2.0 * vp[..., 1:-1] + vp[..., :-2])
    dr[..., -1] = nn * (p[..., -1] - p[..., -2]) + sn * (
        taubar + vp[..., -2] - 2.0 * vp[..., -1])
    dp[..., 0] = nn * (vp[..., 1] - vp[..., 0]) + sn * (p[..., 1] - 2.0 * p[..., 0])
    dp[..., 1:-1] = nn * (vp[..., 2:] - vp[..., 1:-1]) + sn * (
        p[..., 2:] - 2.0 * p[..., 1:-1] + p[..., :-2])
    dp[..., -1] = nn * (taubar - vp[..., -1]) - sn * (p[..., -1] - p[..., -2])
    return dr, dp


def noise_increments(xi, xt, periodic: bool = False):
    """Map per-driver Gaussians to per-site increments (unit variance scale).

    xi drives the momenta (xi[0] is the lone pinned-end driver), xt the
    stretches (xt[-1] is the lone forced-end driver).
    """
    xi = np.asarray(xi, dtype=float)
    xt = np.asarray(xt, dtype=float)
    if periodic:
        return (np.roll(xt, 1, axis=-1) - xt, np.roll(xi, 1, axis=-1) - xi)
    nr = -xt.copy()
    nr[..., 1:] += xt[..., :-1]
    npinc = xi.copy()
    npinc[..., :-1] -= xi[..., 1:]
    return nr, npinc


def step(state: ChainState, cfg: SimConfig, rng, dt: Optional[float] = None,
         periodic: bool = False) -> ChainState:
    """One Euler-Maruyama step (reference path)."""
    if dt is None:
        dt = stable_dt(cfg)
    dr, dp = drift(state.r, state.p, state.t, cfg, periodic=periodic)
    r = state.r + dr * dt
    p = state.p + dp * dt
    if cfg.noise_enabled:
        n = state.n_sites
        scale = math.sqrt(2.0 * cfg.sigma * n * dt / cfg.beta)
        xt = rng.standard_normal(state.r.shape)
        xi = rng.standard_normal(state.p.shape)
        nr, npinc = noise_increments(xi, xt, periodic=periodic)
        r = r + scale * nr
        p = p + scale * npinc
    out = ChainState(r, p, state.t + dt)
    if np.max(np.abs(out.r)) > BLOWUP_LIMIT or np.max(np.abs(out.p)) > BLOWUP_LIMIT \
            or not (np.all(np.isfinite(out.r)) and np.all(np.isfinite(out.p))):
        raise BlowUp(f"state left admissible range at t={out.t}")
    return out


# --------------------------------------------------------------------------
# production integrator
# --------------------------------------------------------------------------

_KERNELS = {}


def _get_kernel():
    if "em" in _KERNELS:
        return _KERNELS["em"]
    from numba import njit

    sqrt2pi = math.sqrt(2.0 * math.pi)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)

    @njit(cache=True)
    def em_chain(r, p, noise, tau_vals, dt, nn, sig, beta, kind, kappa, delta,
                 noise_on):
        n = r.shape[0]
        sn = sig * nn
        scale = math.sqrt(2.0 * sig * nn * dt / beta) if noise_on else 0.0
        vp = np.empty(n)
        dr = np.empty(n)
        dp = np.empty(n)
        nsteps = tau_vals.shape[0]
        for s in range(nsteps):
            tb = tau_vals[s]
            if kind == 0:
                for i in range(n):
                    vp[i] = r[i]
            else:
                for i in range(n):
                    z = r[i] / delta
                    # outside |z| <= 9 the mollifier tails are below one ulp
                    if z > 9.0:
                        vp[i] = r[i]
                    elif z < -9.0:
                        vp[i] = (1.0 - kappa) * r[i]
                    else:
                        cdf = 0.5 * (1.0 + math.erf(z * inv_sqrt2))
                        pdf = math.exp(-0.5 * z * z) / sqrt2pi
                        vp[i] = (1.0 - kappa) * r[i] + kappa * (r[i] * cdf + delta * pdf)
            dr[0] = nn * p[0] + sn * (vp[1] - vp[0])
            dp[0] = nn * (vp[1] - vp[0]) + sn * (p[1] - 2.0 * p[0])
            for i in range(1, n - 1):
                dr[i] = nn * (p[i] - p[i - 1]) + sn * (vp[i + 1] - 2.0 * vp[i] + vp[i - 1])
                dp[i] = nn * (vp[i + 1] - vp[i]) + sn * (p[i + 1] - 2.0 * p[i] + p[i - 1])
            dr[n - 1] = nn * (p[n - 1] - p[n - 2]) + sn * (tb + vp[n - 2] - 2.0 * vp[n - 1])
            dp[n - 1] = nn * (tb - vp[n - 1]) - sn * (p[n - 1] - p[n - 2])
            if noise_on:
                for i in range(n):
                    nr = -noise[s, 0, i]
                    if i >= 1:
                        nr += noise[s, 0, i - 1]
                    npi = noise[s, 1, i]
                    if i <= n - 2:
                        npi -= noise[s, 1, i + 1]
                    r[i] += dr[i] * dt + scale * nr
                    p[i] += dp[i] * dt + scale * npi
            else:
                for i in range(n):
                    r[i] += dr[i] * dt
                    p[i] += dp[i] * dt

    _KERNELS["em"] = em_chain
    return em_chain


def _run_segment_numpy(r, p, noise, tau_vals, dt, cfg: SimConfig):
    n = r.shape[0]
    scale = math.sqrt(2.0 * cfg.sigma * n * dt / cfg.beta) if cfg.noise_enabled else 0.0
    rr, pp = r, p
    for s in range(tau_vals.shape[0]):
        dr, dp = drift(rr, pp, 0.0, cfg, taubar=float(tau_vals[s]))
        rr = rr + dr * dt
        pp = pp + dp * dt
        if cfg.noise_enabled:
            nr, npinc = noise_increments(noise[s, 1], noise[s, 0])
            rr += scale * nr
            pp += scale * npinc
    r[:] = rr
    p[:] = pp


@dataclass
class Trajectory:
    """Frames of a single chain run at the recording cadence."""

    times: np.ndarray          # (F,)
    r: np.ndarray              # (F, N)
    p: np.ndarray              # (F, N)
    L: np.ndarray              # (F,) mean stretch (1/N) sum r_i
    config: SimConfig = None
    seed_key: tuple = ()

    @property
    def n_sites(self) -> int:
        return self.r.shape[1]

    def energy_series(self) -> np.ndarray:
        pot = self.config.potential
        return (0.5 * self.p ** 2 + pot.v(self.r)).mean(axis=1)


def rng_for_replica(seed: int, replica: int) -> np.random.Generator:
    """Deterministic per-replica stream: SeedSequence(seed).spawn-style keying."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(replica,)))


def run_trajectory(cfg: SimConfig, init: ChainState, rng=None,
                   replica: int = 0) -> Trajectory:
    """Integrate from `init` to t_end, recording frames on the cadence grid.

    Same (cfg, seed, replica) reproduces the trajectory bit for bit with the
    same engine.
    """
    if rng is None:
        rng = rng_for_replica(cfg.seed, replica)
    init.check_finite()
    n = cfg.n_sites
    if init.n_sites != n:
        raise ConfigInvalid(f"initial state has {init.n_sites} sites, config wants {n}")
    kernel = _get_kernel() if cfg.engine == "numba" else None

    times = cfg.frame_times()
    dt_target = stable_dt(cfg)
    r = init.r.astype(float).copy()
    p = init.p.astype(float).copy()
    frames_r = np.empty((len(times), n))
    frames_p = np.empty((len(times), n))
    frames_r[0] = r
    frames_p[0] = p
    kind = 0 if cfg.potential.kind is PotentialKind.HARMONIC else 1

    for k in range(1, len(times)):
        seg = times[k] - times[k - 1]
        nsteps = max(1, int(math.ceil(seg / dt_target - 1e-12)))
        dt = seg / nsteps
        done = 0
        while done < nsteps:
            m = min(_NOISE_CHUNK, nsteps - done)
            t0 = times[k - 1] + done * dt
            tau_vals = np.asarray(cfg.schedule.value(t0 + dt * np.arange(m)), dtype=float)
            if cfg.noise_enabled:
                noise = rng.standard_normal((m, 2, n))
            else:
                noise = np.zeros((1, 2, n))
            if kernel is not None:
                kernel(r, p, noise, tau_vals, dt, float(n),
                       cfg.sigma if cfg.noise_enabled else 0.0, cfg.beta,
                       kind, cfg.potential.kappa, cfg.potential.delta,
                       cfg.noise_enabled)
            else:
                _run_segment_numpy(r, p, noise, tau_vals, dt, cfg)
            done += m
            amax = max(np.max(np.abs(r)), np.max(np.abs(p)))
            if not np.isfinite(amax) or amax > BLOWUP_LIMIT:
                raise BlowUp(f"state left admissible range near t={t0 + m * dt}")
        frames_r[k] = r
        frames_p[k] = p

    return Trajectory(times=times, r=frames_r, p=frames_p,
                      L=frames_r.mean(axis=1), config=cfg,
                      seed_key=(cfg.seed, replica))


# --------------------------------------------------------------------------
# initial data, work, energy
# --------------------------------------------------------------------------

def sample_initial(cfg: SimConfig, thermo: ThermoModel, r0, p0, rng) -> ChainState:
    """Independent per-site draws from the local-equilibrium product measure:
    site i at x = i/N gets tension tau(r0(x)) and mean momentum p0(x)."""
    n = cfg.n_sites
    x = np.arange(1, n + 1) / n
    ell = np.broadcast_to(np.asarray(r0(x) if callable(r0) else r0, dtype=float), (n,))
    pbar = np.broadcast_to(np.asarray(p0(x) if callable(p0) else p0, dtype=float), (n,))
    tau = thermo.tau_of_ell_vec(ell)
    r, p = thermo.sample_site(pbar, tau, rng)
    return ChainState(r, p, 0.0)


def microscopic_work(times, L, schedule: TensionSchedule) -> np.ndarray:
    """W(t) = -int_0^t taubar'(s) L(s) ds + taubar(t) L(t) - taubar(0) L(0),
    trapezoid on the recorded cadence."""
    times = np.asarray(times, dtype=float)
    L = np.asarray(L, dtype=float)
    tb = np.asarray(schedule.value(times), dtype=float)
    td = np.asarray(schedule.derivative(times), dtype=float)
    integrand = td * L
    cum = np.concatenate([[0.0], np.cumsum(
        0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times))])
    return -cum + tb * L - tb[0] * L[0]


def energy_monitor(state: ChainState, potential: Potential) -> float:
    """Mean energy per site, (1/N) sum(p_i^2/2 + V(r_i))."""
    return float(np.mean(0.5 * state.p ** 2 + potential.v(state.r)))
