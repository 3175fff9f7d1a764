"""Field-level diagnostics built from chain trajectories.

Block averages come in two flavours for a sequence (a_i), both 1-indexed to
match the stencil identities they satisfy:

    bar_{l,i} = (1/l)   sum_{j=1..l}   a_{i-j+1}          (flat window ending at i)
    hat_{l,i} = (1/l^2) sum_{|j|<l} (l-|j|) a_{i-j}        (triangular, centred at i)

and are tied together by the exact identity

    hat_{l,i+1} - hat_{l,i} = (bar_{l,i+l} - bar_{l,i}) / l.

The empirical field places hat averages on cells of width 1/N centred at i/N
for i = l+1 .. N-l; the uncovered boundary strips carry the zero state, and
are represented here as explicit zero-valued cells so that every quadrature
(weak-form residuals, entropy production, free-energy functionals) runs over
one uniform cell partition of [0,1] with total measure exactly 1.

Weak-form residuals implement the boundary-aware integral identities for the
stretch/momentum system (test functions vanishing at x=1 for the stretch
equation and at x=0 for the momentum equation, terminal terms retained for
finite horizons); `entropy_production` evaluates the compensated flux integral
for a compatible flux pair against test functions supported inside the
space-time box.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConstraintViolation, IndexOutOfRange, PairInvalid
from .microsim import ChainState, TensionSchedule, Trajectory, microscopic_work
from .potential import Potential
from .thermo import ThermoModel


# --------------------------------------------------------------------------
# block averages (scalar, exact-summation versions)
# --------------------------------------------------------------------------

def bar_average(a, l: int, i: int) -> float:
    """Flat block average over sites i-l+1 .. i (1-based i, needs l <= i <= len)."""
    a = np.asarray(a, dtype=float)
    if l < 1 or i < l or i > a.size:
        raise IndexOutOfRange(f"bar average needs l <= i <= len, got l={l}, i={i}, len={a.size}")
    return math.fsum(a[i - l:i]) / l


def hat_average(a, l: int, i: int) -> float:
    """Triangular block average centred at site i (1-based, needs l <= i <= len-l+1)."""
    a = np.asarray(a, dtype=float)
    if l < 1 or i < l or i > a.size - l + 1:
        raise IndexOutOfRange(f"hat average needs l <= i <= len-l+1, got l={l}, i={i}, len={a.size}")
    terms = [(l - abs(j)) * a[i - 1 - j] for j in range(-(l - 1), l)]
    return math.fsum(terms) / (l * l)


def block_gradient_identity_check(a, l: int, i: int) -> float:
    """|(hat_{l,i+1} - hat_{l,i}) - (bar_{l,i+l} - bar_{l,i})/l|.

    Both sides are assembled as integer-weighted exact sums scaled once by
    1/l^2, so the residual stays within a few ulps of the data magnitude
    (see `block_identity_ulp_bound`).
    """
    a = np.asarray(a, dtype=float)
    if l < 1 or i < l or i + l > a.size:
        raise IndexOutOfRange(f"identity needs l <= i and i+l <= len, got l={l}, i={i}, len={a.size}")
    lhs = math.fsum([(l - abs(j)) * (a[i - j] - a[i - 1 - j]) for j in range(-(l - 1), l)])
    # l * (bar_{l,i+l} - bar_{l,i}) without forming the averages
    rhs = l * (math.fsum(a[i:i + l]) - math.fsum(a[i - l:i])) / l
    return abs(lhs / (l * l) - rhs / (l * l))


def block_identity_ulp_bound(a, l: int, i: int, ulps: float = 4.0) -> float:
    """Residual tolerance: `ulps` spacings of the largest magnitude involved."""
    a = np.asarray(a, dtype=float)
    window = a[max(0, i - l - 1):i + l]
    scale = float(np.max(np.abs(window))) if window.size else 0.0
    return ulps * np.spacing(max(scale, 1e-300))


def bar_series(a, l: int) -> np.ndarray:
    """bar_{l,i} for i = l..len as an array (index 0 -> i=l)."""
    a = np.asarray(a, dtype=float)
    cs = np.concatenate([[0.0], np.cumsum(a)])
    return (cs[l:] - cs[:-l]) / l


def hat_series(a, l: int) -> np.ndarray:
    """hat_{l,i} for the covered sites i = l+1 .. N-l (supports (F, N) input)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if n < 2 * l + 1:
        raise IndexOutOfRange(f"need at least 2l+1 sites, got N={n}, l={l}")
    kernel = (l - np.abs(np.arange(-(l - 1), l))) / (l * l)
    if a.ndim == 1:
        return np.convolve(a, kernel, mode="valid")[1:-1] if l > 1 else a[1:-1].copy()
    out = np.empty(a.shape[:-1] + (n - 2 * l,))
    for idx in np.ndindex(a.shape[:-1]):
        full = np.convolve(a[idx], kernel, mode="valid")
        out[idx] = full[1:-1] if l > 1 else full[1:-1]
    return out


# --------------------------------------------------------------------------
# empirical fields on the unit interval
# --------------------------------------------------------------------------

@dataclass
class EmpiricalField:
    """Piecewise-constant (r, p) field on a partition of [0,1].

    `covered` marks cells carrying data; uncovered cells hold the zero state
    by convention.  Cell measures sum to 1 exactly.
    """

    times: np.ndarray       # (F,)
    x: np.ndarray           # (C,) cell centres
    w: np.ndarray           # (C,) cell measures
    r: np.ndarray           # (F, C)
    p: np.ndarray           # (F, C)
    covered: np.ndarray     # (C,) bool
    l: int = 0
    n_sites: int = 0

    @classmethod
    def from_trajectory(cls, traj: Trajectory, l: Optional[int] = None) -> "EmpiricalField":
        if l is None:
            l = traj.config.block_l
        n = traj.n_sites
        if not 1 <= l <= (n - 1) // 2:
            raise IndexOutOfRange(f"block width l={l} invalid for N={n}")
        edges = np.concatenate([[0.0], (np.arange(1, n + 1) - 0.5) / n, [1.0]])
        x = np.concatenate([[0.25 / n], np.arange(1, n) / n, [1.0 - 0.25 / n]])
        w = np.diff(edges)
        covered = np.zeros(n + 1, dtype=bool)
        covered[l + 1:n - l + 1] = True   # cells centred at i/N, i = l+1..N-l
        F = len(traj.times)
        r = np.zeros((F, n + 1))
        p = np.zeros((F, n + 1))
        r[:, l + 1:n - l + 1] = hat_series(traj.r, l)
        p[:, l + 1:n - l + 1] = hat_series(traj.p, l)
        return cls(times=traj.times.copy(), x=x, w=w, r=r, p=p,
                   covered=covered, l=l, n_sites=n)

    @classmethod
    def from_cells(cls, times, r_vals, p_vals) -> "EmpiricalField":
        """Fully covered uniform cells (macro solutions, manufactured fields)."""
        r_vals = np.atleast_2d(np.asarray(r_vals, dtype=float))
        p_vals = np.atleast_2d(np.asarray(p_vals, dtype=float))
        m = r_vals.shape[1]
        x = (np.arange(m) + 0.5) / m
        w = np.full(m, 1.0 / m)
        return cls(times=np.asarray(times, dtype=float), x=x, w=w,
                   r=r_vals, p=p_vals, covered=np.ones(m, dtype=bool))

    @classmethod
    def from_functions(cls, times, m_cells: int, r_fn, p_fn) -> "EmpiricalField":
        """Sample smooth (t, x) functions at cell centres (midpoint-exact)."""
        times = np.asarray(times, dtype=float)
        x = (np.arange(m_cells) + 0.5) / m_cells
        tt, xx = np.meshgrid(times, x, indexing="ij")
        return cls.from_cells(times, r_fn(tt, xx), p_fn(tt, xx))

    def frame_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9:
            raise IndexOutOfRange(f"no frame recorded at t={t}")
        return k

    def l2_norm_sq(self) -> np.ndarray:
        """Per-frame int (r^2 + p^2) dx over the full partition."""
        return (self.r ** 2 + self.p ** 2) @ self.w

    def pairing(self, J: Callable, frame: int) -> tuple:
        """(int J r dx, int J p dx) over the cell partition at one frame."""
        jx = np.asarray(J(self.x), dtype=float)
        return float((jx * self.w) @ self.r[frame]), float((jx * self.w) @ self.p[frame])


def empirical_pairing(state: ChainState, J: Callable) -> tuple:
    """((1/N) sum J(i/N) r_i, (1/N) sum J(i/N) p_i) for one chain state."""
    n = state.n_sites
    jx = np.asarray(J(np.arange(1, n + 1) / n), dtype=float)
    return float(jx @ state.r / n), float(jx @ state.p / n)


# --------------------------------------------------------------------------
# closure and smoothness residuals
# --------------------------------------------------------------------------

def one_block_residual(state: ChainState, l: int, thermo: ThermoModel,
                       potential: Optional[Potential] = None) -> float:
    """(1/N) sum_{i=l+1..N-l} (hat{V'}_{l,i} - tau(hat{r}_{l,i}))^2."""
    pot = potential if potential is not None else thermo.potential
    vp_hat = hat_series(pot.dv(state.r), l)
    r_hat = hat_series(state.r, l)
    diff = vp_hat - thermo.tau_of_ell_vec(r_hat)
    return float(np.sum(diff * diff) / state.n_sites)


def two_block_residual(state: ChainState, l: int,
                       potential: Optional[Potential] = None) -> dict:
    """(1/N) sum_{i=l+1..N-l} (bar_{l,i+l} - bar_{l,i})^2 per component
    a in {p, V'(r), r}."""
    n = state.n_sites
    if n < 2 * l + 1:
        raise IndexOutOfRange(f"need at least 2l+1 sites, got N={n}, l={l}")
    out = {}
    comps = {"p": state.p, "r": state.r}
    if potential is not None:
        comps["vprime"] = potential.dv(state.r)
    for name, a in comps.items():
        bars = bar_series(a, l)          # index 0 -> i = l
        lo = bars[1:n - 2 * l + 1]       # i = l+1 .. N-l
        hi = bars[l + 1:n - l + 1]       # i+l
        d = hi - lo
        out[name] = float(np.sum(d * d) / n)
    return out


# --------------------------------------------------------------------------
# test functions
# --------------------------------------------------------------------------

class TestFunctionKind(enum.Enum):
    SEPARABLE_SMOOTH = "separable_smooth"
    TENSOR_POLY_COSINE = "tensor_poly_cosine"


@dataclass(frozen=True)
class TestFunction:
    """Smooth test function on [0,T] x [0,1] with exact partial derivatives."""

    value: Callable
    dt: Callable
    dx: Callable
    vanishes_at: str            # "x0" | "x1" | "boundary" | "none"
    kind: TestFunctionKind = TestFunctionKind.SEPARABLE_SMOOTH

    def check_constraint(self, times, tol: float = 1e-12):
        times = np.asarray(times, dtype=float)
        traces = []
        if self.vanishes_at in ("x1", "boundary"):
            traces.append(np.max(np.abs(self.value(times, np.ones_like(times)))))
        if self.vanishes_at in ("x0", "boundary"):
            traces.append(np.max(np.abs(self.value(times, np.zeros_like(times)))))
        if self.vanishes_at == "boundary":
            xs = np.linspace(0.0, 1.0, 33)
            traces.append(np.max(np.abs(self.value(np.full_like(xs, times[0]), xs))))
            traces.append(np.max(np.abs(self.value(np.full_like(xs, times[-1]), xs))))
        if traces and max(traces) > tol:
            raise ConstraintViolation(
                f"boundary trace {max(traces):g} exceeds {tol:g} for '{self.vanishes_at}'")


def stretch_test_function(k: int) -> TestFunction:
    """phi_k(t,x) = cos((k-1/2) pi x) cos(k t); vanishes at x=1."""
    a = (k - 0.5) * math.pi

    return TestFunction(
        value=lambda t, x, a=a, k=k: np.cos(a * x) * np.cos(k * t),
        dt=lambda t, x, a=a, k=k: -k * np.cos(a * x) * np.sin(k * t),
        dx=lambda t, x, a=a, k=k: -a * np.sin(a * x) * np.cos(k * t),
        vanishes_at="x1", kind=TestFunctionKind.TENSOR_POLY_COSINE)


def momentum_test_function(k: int) -> TestFunction:
    """psi_k(t,x) = sin((k-1/2) pi x) cos(k t); vanishes at x=0."""
    a = (k - 0.5) * math.pi
    return TestFunction(
        value=lambda t, x, a=a, k=k: np.sin(a * x) * np.cos(k * t),
        dt=lambda t, x, a=a, k=k: -k * np.sin(a * x) * np.sin(k * t),
        dx=lambda t, x, a=a, k=k: a * np.cos(a * x) * np.cos(k * t),
        vanishes_at="x0", kind=TestFunctionKind.TENSOR_POLY_COSINE)


def box_test_function(T: float, kx: int = 1, kt: int = 1) -> TestFunction:
    """Vanishes on the whole boundary of [0,T] x [0,1] (entropy production)."""
    ax = kx * math.pi
    at = kt * math.pi / T
    return TestFunction(
        value=lambda t, x: np.sin(ax * x) * np.sin(at * t),
        dt=lambda t, x: at * np.sin(ax * x) * np.cos(at * t),
        dx=lambda t, x: ax * np.cos(ax * x) * np.sin(at * t),
        vanishes_at="boundary")


def default_test_basis(k_max: int = 8) -> list:
    """The fixed basis used for cross-N comparisons."""
    return [(stretch_test_function(k), momentum_test_function(k))
            for k in range(1, k_max + 1)]


# --------------------------------------------------------------------------
# weak-form residuals
# --------------------------------------------------------------------------

def _trapezoid(series: np.ndarray, times: np.ndarray) -> float:
    return float(np.trapezoid(series, times))


def weak_residual(field: EmpiricalField, phi: TestFunction, psi: TestFunction,
                  schedule: TensionSchedule, thermo: ThermoModel) -> tuple:
    """Residuals of the two boundary-aware weak identities on [0,T].

    R_r = int phi(0)r(0) + iint (r dphi/dt - p dphi/dx) - int phi(T)r(T)
    R_p = int psi(0)p(0) + iint (p dpsi/dt - tau(r) dpsi/dx)
          + int_0^T psi(t,1) taubar(t) dt - int psi(T)p(T)

    Midpoint in x over the field's cells (zero-state strips included),
    trapezoid in t over its frames.
    """
    phi.check_constraint(field.times)
    psi.check_constraint(field.times)
    if phi.vanishes_at not in ("x1", "boundary"):
        raise ConstraintViolation("stretch test function must vanish at x=1")
    if psi.vanishes_at not in ("x0", "boundary"):
        raise ConstraintViolation("momentum test function must vanish at x=0")

    t, x, w = field.times, field.x, field.w
    tt = t[:, None]
    xx = x[None, :]
    tau_field = thermo.tau_of_ell_vec(field.r)

    inner_r = ((field.r * phi.dt(tt, xx) - field.p * phi.dx(tt, xx)) @ w)
    inner_p = ((field.p * psi.dt(tt, xx) - tau_field * psi.dx(tt, xx)) @ w)

    phi0 = np.asarray(phi.value(np.full_like(x, t[0]), x))
    phiT = np.asarray(phi.value(np.full_like(x, t[-1]), x))
    psi0 = np.asarray(psi.value(np.full_like(x, t[0]), x))
    psiT = np.asarray(psi.value(np.full_like(x, t[-1]), x))

    r_terms = float((phi0 * w) @ field.r[0]) + _trapezoid(inner_r, t) \
        - float((phiT * w) @ field.r[-1])
    taubar = np.asarray(schedule.value(t), dtype=float)
    psi_at_1 = np.asarray(psi.value(t, np.ones_like(t)), dtype=float)
    p_terms = float((psi0 * w) @ field.p[0]) + _trapezoid(inner_p, t) \
        + _trapezoid(psi_at_1 * taubar, t) - float((psiT * w) @ field.p[-1])
    return r_terms, p_terms


def weak_residual_basis(field: EmpiricalField, schedule: TensionSchedule,
                        thermo: ThermoModel, k_max: int = 8) -> np.ndarray:
    """(k_max, 2) array of (R_r, R_p) on the fixed basis."""
    out = np.empty((k_max, 2))
    for idx, (phi, psi) in enumerate(default_test_basis(k_max)):
        out[idx] = weak_residual(field, phi, psi, schedule, thermo)
    return out


# --------------------------------------------------------------------------
# compatible flux pairs and entropy production
# --------------------------------------------------------------------------

class EntropyPairKind(enum.Enum):
    MECHANICAL_ENERGY = "mechanical_energy"
    USER_SUPPLIED = "user_supplied"


@dataclass(frozen=True)
class EntropyPair:
    """Pair (eta, q) with eta_r + q_p = 0 and tau'(r) eta_p + q_r = 0."""

    eta: Callable
    q: Callable
    eta_r: Callable
    eta_p: Callable
    q_r: Callable
    q_p: Callable
    kind: EntropyPairKind = EntropyPairKind.USER_SUPPLIED


def mechanical_energy_pair(thermo: ThermoModel) -> EntropyPair:
    """eta = p^2/2 + Phi(r) with Phi' = tau and Phi = F (so Phi(ell) matches the
    free energy at every equilibrium length); q = -p tau(r)."""
    F = thermo.F_vec
    tau = thermo.tau_of_ell_vec
    return EntropyPair(
        eta=lambda r, p: 0.5 * np.square(p) + F(r),
        q=lambda r, p: -p * tau(r),
        eta_r=lambda r, p: tau(r),
        eta_p=lambda r, p: np.asarray(p, dtype=float),
        q_r=lambda r, p: -p * thermo.grid.tau_prime(r),
        q_p=lambda r, p: -tau(r),
        kind=EntropyPairKind.MECHANICAL_ENERGY)


def check_lax_pair(pair: EntropyPair, thermo: ThermoModel,
                   r_grid=None, p_grid=None, tol: float = 1e-7):
    """Verify the compatibility relations on a sample grid; PairInvalid on failure."""
    if r_grid is None:
        r_grid = np.linspace(-1.5, 2.5, 41)
    if p_grid is None:
        p_grid = np.linspace(-2.0, 2.0, 21)
    rr, pp = np.meshgrid(np.asarray(r_grid, float), np.asarray(p_grid, float),
                         indexing="ij")
    res1 = np.max(np.abs(pair.eta_r(rr, pp) + pair.q_p(rr, pp)))
    tau_prime = thermo.grid.tau_prime(rr)
    res2 = np.max(np.abs(tau_prime * pair.eta_p(rr, pp) + pair.q_r(rr, pp)))
    if max(res1, res2) > tol:
        raise PairInvalid(
            f"flux-pair relations violated: |eta_r+q_p|={res1:g}, "
            f"|tau' eta_p+q_r|={res2:g} (tol {tol:g})")


def entropy_production(field: EmpiricalField, pair: EntropyPair,
                       phi: TestFunction) -> float:
    """X = -iint (eta(u) dphi/dt + q(u) dphi/dx) dx dt for phi vanishing on
    the boundary of the space-time box."""
    phi.check_constraint(field.times)
    if phi.vanishes_at != "boundary":
        raise ConstraintViolation("entropy production needs a box-supported test function")
    t, x, w = field.times, field.x, field.w
    tt = t[:, None]
    xx = x[None, :]
    inner = ((pair.eta(field.r, field.p) * phi.dt(tt, xx)
              + pair.q(field.r, field.p) * phi.dx(tt, xx)) @ w)
    return -_trapezoid(inner, t)


# --------------------------------------------------------------------------
# Clausius bookkeeping
# --------------------------------------------------------------------------

@dataclass
class ClausiusSeries:
    """Per-replica work and free-energy-change series from a reference time."""

    times: np.ndarray          # frames >= t_start
    work: np.ndarray           # W(t) relative to the reference frame
    dF: np.ndarray             # int (F(t) - F(t_ref)) dx


@dataclass
class ClausiusReport:
    times: np.ndarray
    mean_work: np.ndarray
    mean_dF: np.ndarray
    se_work: np.ndarray
    se_dF: np.ndarray
    slack_int: float           # E int W dt - E int dF dt over the window
    slack_int_se: float
    slack_rate: float          # slack_int / window length
    slack_end: float           # E[W(end)] - E[dF(end)]
    slack_end_se: float
    dF_end: float
    dF_end_se: float
    work_end: float
    n_replicas: int
    end_window: float = 0.0    # endpoint values averaged over [T-w, T]


def free_energy_functional(field: EmpiricalField, thermo: ThermoModel) -> np.ndarray:
    """Per-frame int (p^2/2 + F(r)) dx over the cell partition."""
    return (0.5 * field.p ** 2 + thermo.F_vec(field.r)) @ field.w


def clausius_series(traj: Trajectory, thermo: ThermoModel,
                    l: Optional[int] = None, t_start: float = 0.0,
                    ref_window: float = 0.0) -> ClausiusSeries:
    """Work and free-energy-change series referenced to the first recorded
    frame at or after t_start (the end of any thermalization window).

    With ref_window > 0 the free-energy reference is the time average of the
    functional over [t_start - ref_window, t_start]; the tension is constant
    there, so this estimates the same equilibrium expectation with less
    single-frame noise.  The work reference stays at the t_start frame
    (eq-of-motion bookkeeping is exact either way).
    """
    field = EmpiricalField.from_trajectory(traj, l=l)
    k0 = int(np.searchsorted(traj.times, t_start - 1e-9))
    if k0 >= len(traj.times):
        raise IndexOutOfRange(f"t_start={t_start} is past the last frame")
    W = microscopic_work(traj.times, traj.L, traj.config.schedule)
    F_tot = free_energy_functional(field, thermo)
    if ref_window > 0.0:
        kw = int(np.searchsorted(traj.times, t_start - ref_window - 1e-9))
        F_ref = float(F_tot[kw:k0 + 1].mean())
    else:
        F_ref = float(F_tot[k0])
    return ClausiusSeries(times=traj.times[k0:].copy(),
                          work=W[k0:] - W[k0],
                          dF=F_tot[k0:] - F_ref)


def clausius_balance(series: Sequence[ClausiusSeries], n_boot: int = 1000,
                     boot_seed: int = 0, end_window: float = 0.0) -> ClausiusReport:
    """Ensemble aggregation of the work / free-energy balance with bootstrap SEs.

    With end_window > 0 the endpoint quantities are time-averaged over the
    final [T - end_window, T] stretch of each replica (variance reduction for
    runs that end in a settled state)."""
    times = series[0].times
    W = np.stack([s.work for s in series])
    D = np.stack([s.dF for s in series])
    R = W.shape[0]
    span = times[-1] - times[0]
    int_W = np.trapezoid(W, times, axis=1)
    int_D = np.trapezoid(D, times, axis=1)
    gap_int = int_W - int_D
    ke = int(np.searchsorted(times, times[-1] - end_window - 1e-9)) \
        if end_window > 0.0 else len(times) - 1
    W_end = W[:, ke:].mean(axis=1)
    D_end = D[:, ke:].mean(axis=1)
    gap_end = W_end - D_end

    rng = np.random.default_rng(boot_seed)
    idx = rng.integers(0, R, size=(n_boot, R))
    boot_int = gap_int[idx].mean(axis=1)
    boot_end = gap_end[idx].mean(axis=1)
    boot_dF = D_end[idx].mean(axis=1)

    return ClausiusReport(
        times=times,
        mean_work=W.mean(axis=0), mean_dF=D.mean(axis=0),
        se_work=W.std(axis=0, ddof=1) / math.sqrt(R),
        se_dF=D.std(axis=0, ddof=1) / math.sqrt(R),
        slack_int=float(gap_int.mean()), slack_int_se=float(boot_int.std(ddof=1)),
        slack_rate=float(gap_int.mean() / span) if span > 0 else 0.0,
        slack_end=float(gap_end.mean()), slack_end_se=float(boot_end.std(ddof=1)),
        dF_end=float(D_end.mean()), dF_end_se=float(boot_dF.std(ddof=1)),
        work_end=float(W_end.mean()), n_replicas=R, end_window=end_window)
