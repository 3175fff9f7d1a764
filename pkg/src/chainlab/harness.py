"""Experiment orchestration: scenario configs, parallel ensembles, CSV emission.

Scenarios fix the schedule and initial data:

* stationary          -- constant tension, equilibrium start
* quasi_static_ramp   -- smoothstep tau0 -> tau1 over t_ramp after a burn-in
* fast_ramp_shock     -- same shape, short ramp (dissipative regime)
* manufactured_linear -- harmonic chain, zero tension, standing-wave profiles

Replicas run in separate processes with deterministically derived RNG streams
(SeedSequence entropy = seed, spawn key = (N, replica)), so any replica can be
regenerated in isolation from the manifest.  Workers return small analysis
products; full frames are written to per-replica CSVs only when requested.

All CSVs start with '# schema=1'; frames files also carry a '# config=...'
line with the generating SimConfig so analysis can be re-run from disk alone.
"""

from __future__ import annotations

import enum
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import tomlmini
from .errors import ConfigInvalid
from .microsim import (ChainState, ScheduleKind, SimConfig, TensionSchedule,
                       Trajectory, microscopic_work, run_trajectory,
                       sample_initial, stable_dt)
from .observables import (EmpiricalField, clausius_series, one_block_residual,
                          two_block_residual, weak_residual_basis)
from .pdesolver import MacroTrajectory, solve, standing_wave
from .potential import Potential, potential_from_config
from .thermo import ThermoModel

SCHEMA_VERSION = 1
PACKAGE_VERSION = "0.1.0"


class Scenario(enum.Enum):
    STATIONARY = "stationary"
    QUASI_STATIC_RAMP = "quasi_static_ramp"
    FAST_RAMP_SHOCK = "fast_ramp_shock"
    MANUFACTURED_LINEAR = "manufactured_linear"


EMIT_CHOICES = ("frames", "residuals", "clausius", "weak", "thermo_tables")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario = Scenario.STATIONARY
    n_list: tuple = (128,)
    replicas: int = 8
    seed: int = 2024
    output_dir: str = "out"
    emit: tuple = ("residuals",)
    threads: int = 0                     # 0 -> os.cpu_count()
    # chain parameters
    beta: float = 1.0
    alpha_sigma: float = 0.25
    dt_safety: float = 0.25
    t_end: float = 0.5
    frames_per_unit_time: float = 50.0
    block_l_override: Optional[int] = None
    engine: str = "numba"
    # potential
    potential_kind: str = "mollified_kappa"
    kappa: float = 0.2
    delta: float = 0.1
    # schedule
    tau0: float = 0.5
    tau1: float = 0.5
    t_ramp: float = 1.0
    t_burn: float = 0.0
    # manufactured scenario
    amplitude: float = 0.3
    # macro reference
    macro_m: int = 512
    macro_eps: object = "sigma_over_n"
    # frames sink: "csv" is byte-reproducible; "npz" is the binary sink
    # (array-identical on replay; zip metadata is not byte-stable)
    frames_format: str = "csv"

    def potential(self) -> Potential:
        if self.scenario is Scenario.MANUFACTURED_LINEAR:
            return Potential.harmonic()
        return potential_from_config(self.potential_kind, self.kappa, self.delta)

    def schedule(self) -> TensionSchedule:
        if self.scenario is Scenario.STATIONARY:
            return TensionSchedule.constant(self.tau0)
        if self.scenario is Scenario.MANUFACTURED_LINEAR:
            return TensionSchedule.constant(0.0)
        return TensionSchedule.smooth_ramp(self.tau0, self.tau1, self.t_ramp,
                                           t_start=self.t_burn)

    def sim_config(self, n: int) -> SimConfig:
        return SimConfig(
            n_sites=n, potential=self.potential(), schedule=self.schedule(),
            beta=self.beta, alpha_sigma=self.alpha_sigma,
            dt_safety=self.dt_safety, t_end=self.t_end,
            frames_per_unit_time=self.frames_per_unit_time, seed=self.seed,
            block_l_override=self.block_l_override, engine=self.engine)

    def initial_spec(self) -> tuple:
        if self.scenario is Scenario.MANUFACTURED_LINEAR:
            return ("standing_wave", self.amplitude)
        return ("equilibrium", self.tau0)

    def macro_eps_for(self, n: int) -> float:
        if self.macro_eps == "sigma_over_n":
            return self.sim_config(n).sigma / n
        return float(self.macro_eps)


# --------------------------------------------------------------------------
# config file handling
# --------------------------------------------------------------------------

_SECTION_KEYS = {
    "experiment": ("scenario", "n_list", "replicas", "seed", "output_dir",
                   "emit", "threads", "frames_format"),
    "sim": ("beta", "alpha_sigma", "dt_safety", "t_end",
            "frames_per_unit_time", "block_l_override", "engine"),
    "potential": ("kind", "kappa", "delta"),
    "schedule": ("tau0", "tau1", "t_ramp", "t_burn"),
    "macro": ("m", "eps"),
    "manufactured": ("amplitude",),
}
_RENAMES = {("potential", "kind"): "potential_kind",
            ("macro", "m"): "macro_m", ("macro", "eps"): "macro_eps"}


def config_from_dict(raw: dict) -> ExperimentConfig:
    kwargs = {}
    problems = []
    for section, keys in _SECTION_KEYS.items():
        body = raw.get(section, {})
        if not isinstance(body, dict):
            problems.append(f"[{section}] must be a table")
            continue
        for key, value in body.items():
            if key not in keys:
                problems.append(f"unknown key {section}.{key}")
                continue
            kwargs[_RENAMES.get((section, key), key)] = value
    for section in raw:
        if section not in _SECTION_KEYS:
            problems.append(f"unknown section [{section}]")
    if problems:
        raise ConfigInvalid(problems)
    if "scenario" in kwargs:
        try:
            kwargs["scenario"] = Scenario(str(kwargs["scenario"]))
        except ValueError:
            raise ConfigInvalid(
                [f"scenario must be one of {[s.value for s in Scenario]}"])
    if "n_list" in kwargs:
        kwargs["n_list"] = tuple(int(n) for n in np.atleast_1d(kwargs["n_list"]))
    if "emit" in kwargs:
        kwargs["emit"] = tuple(str(e) for e in np.atleast_1d(kwargs["emit"]))
    return ExperimentConfig(**kwargs)


def load_config(path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    raw = tomlmini.load(path)
    for ov in overrides:
        if "=" not in ov:
            raise ConfigInvalid([f"override {ov!r} is not of the form section.key=value"])
        dotted, _, value = ov.partition("=")
        parts = dotted.strip().split(".")
        if len(parts) != 2:
            raise ConfigInvalid([f"override key {dotted!r} must be section.key"])
        raw.setdefault(parts[0], {})[parts[1]] = tomlmini._parse_value(value)
    return config_from_dict(raw)


def validate(cfg: ExperimentConfig) -> list:
    """Hard-check invariants and report the implied discretization per N."""
    problems, notes = [], []
    if cfg.replicas < 1:
        problems.append(f"replicas must be >= 1, got {cfg.replicas}")
    if not cfg.n_list:
        problems.append("n_list must be nonempty")
    if not 0.0 < cfg.alpha_sigma < 0.5:
        problems.append(f"alpha_sigma must lie in (0, 1/2), got {cfg.alpha_sigma}")
    for e in cfg.emit:
        if e not in EMIT_CHOICES:
            problems.append(f"unknown emit target {e!r}")
    if cfg.frames_format not in ("csv", "npz"):
        problems.append(f"frames_format must be 'csv' or 'npz', got {cfg.frames_format!r}")
    if cfg.scenario in (Scenario.QUASI_STATIC_RAMP, Scenario.FAST_RAMP_SHOCK) \
            and cfg.t_end < cfg.t_burn + cfg.t_ramp:
        notes.append(f"note: t_end={cfg.t_end} ends inside the ramp window")
    if problems:
        raise ConfigInvalid(problems)
    for n in cfg.n_list:
        try:
            sim = cfg.sim_config(n)
        except ConfigInvalid as exc:
            problems.extend(f"N={n}: {p}" for p in exc.problems)
            continue
        # the l(N) rule must stay viable for every N even when overridden
        rule_l = int(math.floor(n ** 0.25 * math.sqrt(sim.sigma)))
        if rule_l < 2:
            problems.append(f"N={n}: block width l={rule_l} < 2 under the l(N) rule")
        l = sim.block_l
        if l < 1:
            problems.append(f"N={n}: block width override l={l} < 1")
        if l > (n - 1) // 2:
            problems.append(f"N={n}: block width l={l} leaves no interior cells")
        dt = stable_dt(sim)
        steps = int(math.ceil(cfg.t_end / dt))
        notes.append(
            f"N={n}: sigma={sim.sigma:.4g} (sigma/N={sim.sigma / n:.4g}, "
            f"N/sigma^2={n / sim.sigma ** 2:.4g}), l={l}, dt={dt:.4g}, "
            f"steps={steps}")
    if problems:
        raise ConfigInvalid(problems)
    return notes


# --------------------------------------------------------------------------
# per-replica work (top-level for pickling)
# --------------------------------------------------------------------------

_THERMO_CACHE: dict = {}


def thermo_for(potential: Potential, beta: float) -> ThermoModel:
    key = (potential.kind, potential.kappa, potential.delta, beta)
    model = _THERMO_CACHE.get(key)
    if model is None:
        model = ThermoModel(potential, beta)
        _THERMO_CACHE[key] = model
    return model


def _initial_state(sim: SimConfig, spec: tuple, thermo: ThermoModel, rng) -> ChainState:
    kind = spec[0]
    if kind == "equilibrium":
        ell = thermo.ell_of_tau_vec(np.array([spec[1]]))[0]
        return sample_initial(sim, thermo,
                              lambda x: np.full_like(x, ell),
                              lambda x: np.zeros_like(x), rng)
    if kind == "standing_wave":
        r_fn, p_fn = standing_wave(spec[1])
        return sample_initial(sim, thermo,
                              lambda x: r_fn(0.0, x), lambda x: p_fn(0.0, x), rng)
    raise ConfigInvalid([f"unknown initial spec {kind!r}"])


def rng_for(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def _analyze(traj: Trajectory, thermo: ThermoModel, names: Sequence[str],
             params: dict) -> dict:
    out = {}
    sim = traj.config
    t_skip = params.get("t_skip", 0.0)
    keep = traj.times >= t_skip - 1e-12
    for name in names:
        if name == "moments":
            r, p = traj.r[keep], traj.p[keep]
            vp = sim.potential.dv(r)
            out[name] = np.stack([r.mean(axis=0), p.mean(axis=0),
                                  vp.mean(axis=0), (p ** 2).mean(axis=0)])
        elif name == "oneblock":
            l = sim.block_l
            vals = [one_block_residual(ChainState(traj.r[k], traj.p[k], traj.times[k]),
                                       l, thermo) for k in np.nonzero(keep)[0]]
            mean_sum = float(np.mean(vals))
            out[name] = {"l": l, "sum_over_n": mean_sum,
                         "per_site": mean_sum * sim.n_sites / (sim.n_sites - 2 * l)}
        elif name == "twoblock":
            l = sim.block_l
            ks = np.nonzero(keep)[0]
            acc = None
            for k in ks:
                d = two_block_residual(ChainState(traj.r[k], traj.p[k]), l,
                                       potential=sim.potential)
                acc = d if acc is None else {m: acc[m] + d[m] for m in d}
            out[name] = {m: v / len(ks) for m, v in acc.items()}
        elif name == "clausius":
            out[name] = clausius_series(traj, thermo, l=sim.block_l, t_start=t_skip,
                                        ref_window=params.get("ref_window", 0.0))
        elif name == "weak":
            fld = EmpiricalField.from_trajectory(traj)
            out[name] = weak_residual_basis(fld, sim.schedule, thermo,
                                            k_max=params.get("k_max", 8))
        elif name == "field_at":
            fld = EmpiricalField.from_trajectory(traj)
            k = fld.frame_index(params["field_time"])
            out[name] = {"x": fld.x, "w": fld.w, "covered": fld.covered,
                         "r": fld.r[k], "p": fld.p[k]}
        elif name == "energy":
            out[name] = traj.energy_series()
        elif name == "work":
            out[name] = microscopic_work(traj.times, traj.L, sim.schedule)
        else:
            raise ConfigInvalid([f"unknown analyzer {name!r}"])
    return out


def _replica_task(args) -> dict:
    (cfg, n, replica, analyzers, params, frames_dir) = args
    t0 = time.monotonic()
    sim = cfg.sim_config(n)
    thermo = thermo_for(sim.potential, sim.beta)
    rng = rng_for(cfg.seed, n, replica)
    init = _initial_state(sim, cfg.initial_spec(), thermo, rng)
    traj = run_trajectory(sim, init, rng=rng, replica=replica)
    result = {"replica": replica, "n": n,
              "analysis": _analyze(traj, thermo, analyzers, params)}
    if frames_dir is not None:
        if cfg.frames_format == "npz":
            path = Path(frames_dir) / f"frames_N{n}_rep{replica:04d}.npz"
            write_frames_npz(path, traj)
        else:
            path = Path(frames_dir) / f"frames_N{n}_rep{replica:04d}.csv"
            write_frames_csv(path, traj)
        result["frames_path"] = str(path)
    result["wall_s"] = time.monotonic() - t0
    return result


def run_ensemble(cfg: ExperimentConfig, n: int, analyzers: Sequence[str],
                 params: Optional[dict] = None, frames_dir=None,
                 threads: Optional[int] = None) -> list:
    """Run all replicas for one N; returns per-replica result dicts.

    Failures are collected as {'replica': k, 'error': msg} entries rather than
    aborting the ensemble.
    """
    params = dict(params or {})
    if cfg.scenario in (Scenario.QUASI_STATIC_RAMP, Scenario.FAST_RAMP_SHOCK):
        params.setdefault("t_skip", cfg.t_burn)
    workers = threads if threads is not None else cfg.threads
    if workers <= 0:
        workers = os.cpu_count() or 1
    # warm caches before forking so children inherit them
    thermo_for(cfg.potential(), cfg.beta)
    tasks = [(cfg, n, k, tuple(analyzers), params, frames_dir)
             for k in range(cfg.replicas)]
    results = []
    if workers == 1 or cfg.replicas == 1:
        for t in tasks:
            results.append(_safe_task(t))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.replicas)) as pool:
            results = list(pool.map(_safe_task, tasks))
    return results


def _safe_task(args) -> dict:
    try:
        return _replica_task(args)
    except Exception as exc:   # noqa: BLE001 -- replica failures must not kill sweeps
        return {"replica": args[2], "n": args[1], "error": f"{type(exc).__name__}: {exc}"}


def split_results(results: Sequence[dict]) -> tuple:
    good = [r for r in results if "error" not in r]
    failed = [{"replica": r["replica"], "n": r["n"], "error": r["error"]}
              for r in results if "error" in r]
    return good, failed


# --------------------------------------------------------------------------
# scaling fits
# --------------------------------------------------------------------------

def fit_loglog(x_vals, samples_per_x: Sequence[np.ndarray], n_boot: int = 2000,
               boot_seed: int = 7) -> dict:
    """Least-squares slope of log(mean) vs log(x) with a replica bootstrap CI.

    `samples_per_x[i]` holds per-replica values at x_vals[i].
    """
    x = np.log(np.asarray(x_vals, dtype=float))
    means = np.array([np.mean(s) for s in samples_per_x])
    y = np.log(means)

    def slope(yv):
        xb = x - x.mean()
        return float(np.sum(xb * (yv - yv.mean())) / np.sum(xb * xb))

    s_hat = slope(y)
    rng = np.random.default_rng(boot_seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        ym = np.array([np.mean(rng.choice(s, size=len(s), replace=True))
                       for s in samples_per_x])
        boots[b] = slope(np.log(ym))
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return {"slope": s_hat, "ci_lo": float(lo), "ci_hi": float(hi),
            "boot_sd": float(boots.std(ddof=1))}


# --------------------------------------------------------------------------
# CSV / manifest emission
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, columns: Sequence[str], rows, comments: Sequence[str] = ()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={SCHEMA_VERSION}\n")
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _sim_to_jsonable(sim: SimConfig) -> dict:
    d = {
        "n_sites": sim.n_sites, "beta": sim.beta, "alpha_sigma": sim.alpha_sigma,
        "dt_safety": sim.dt_safety, "t_end": sim.t_end,
        "frames_per_unit_time": sim.frames_per_unit_time, "seed": sim.seed,
        "block_l_override": sim.block_l_override,
        "sigma_override": sim.sigma_override, "noise_enabled": sim.noise_enabled,
        "engine": sim.engine,
        "potential": {"kind": sim.potential.kind.value, "kappa": sim.potential.kappa,
                      "delta": sim.potential.delta},
        "schedule": {"kind": sim.schedule.kind.value, "tau0": sim.schedule.tau0,
                     "tau1": sim.schedule.tau1, "t_ramp": sim.schedule.t_ramp,
                     "t_start": sim.schedule.t_start,
                     "knots_t": list(sim.schedule.knots_t),
                     "knots_v": list(sim.schedule.knots_v),
                     "knots_d": list(sim.schedule.knots_d)},
    }
    return d


def _sim_from_jsonable(d: dict) -> SimConfig:
    pot = d["potential"]
    sch = d["schedule"]
    kind = ScheduleKind(sch["kind"])
    if kind is ScheduleKind.CUSTOM:
        schedule = TensionSchedule.custom_cubic(sch["knots_t"], sch["knots_v"],
                                                sch["knots_d"])
    elif kind is ScheduleKind.CONSTANT:
        schedule = TensionSchedule.constant(sch["tau0"])
    else:
        schedule = TensionSchedule.smooth_ramp(sch["tau0"], sch["tau1"],
                                               sch["t_ramp"], sch.get("t_start", 0.0))
    potential = potential_from_config(pot["kind"], pot.get("kappa", 0.2),
                                      pot.get("delta", 0.1))
    return SimConfig(
        n_sites=d["n_sites"], potential=potential, schedule=schedule,
        beta=d["beta"], alpha_sigma=d["alpha_sigma"], dt_safety=d["dt_safety"],
        t_end=d["t_end"], frames_per_unit_time=d["frames_per_unit_time"],
        seed=d["seed"], block_l_override=d["block_l_override"],
        sigma_override=d["sigma_override"], noise_enabled=d["noise_enabled"],
        engine=d["engine"])


def write_frames_csv(path, traj: Trajectory):
    """Per-site rows (t, i, r, p); config embedded so analysis can rehydrate."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={SCHEMA_VERSION}\n")
        fh.write(f"# config={json.dumps(_sim_to_jsonable(traj.config), sort_keys=True)}\n")
        fh.write(f"# seed_key={json.dumps(list(traj.seed_key))}\n")
        fh.write("t,i,r,p\n")
        n = traj.n_sites
        for k, t in enumerate(traj.times):
            ts = _fmt(t)
            rk, pk = traj.r[k], traj.p[k]
            for i in range(n):
                fh.write(f"{ts},{i + 1},{_fmt(rk[i])},{_fmt(pk[i])}\n")


def write_frames_npz(path, traj: Trajectory):
    """Binary frames sink: arrays plus the embedded config (json string)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, times=traj.times, r=traj.r, p=traj.p,
             config=json.dumps(_sim_to_jsonable(traj.config), sort_keys=True),
             seed_key=np.asarray(traj.seed_key, dtype=np.int64))


def read_frames_npz(path) -> Trajectory:
    with np.load(path, allow_pickle=False) as data:
        config = _sim_from_jsonable(json.loads(str(data["config"])))
        r = data["r"]
        return Trajectory(times=data["times"], r=r, p=data["p"], L=r.mean(axis=1),
                          config=config, seed_key=tuple(int(k) for k in data["seed_key"]))


def read_frames(path) -> Trajectory:
    """Dispatch on the sink format by extension."""
    return read_frames_npz(path) if str(path).endswith(".npz") else read_frames_csv(path)


def read_frames_csv(path) -> Trajectory:
    config = None
    seed_key = ()
    rows_t, rows_i, rows_r, rows_p = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("config="):
                    config = _sim_from_jsonable(json.loads(body[len("config="):]))
                elif body.startswith("seed_key="):
                    seed_key = tuple(json.loads(body[len("seed_key="):]))
                continue
            if line.startswith("t,"):
                continue
            t, i, r, p = line.split(",")
            rows_t.append(float(t))
            rows_i.append(int(i))
            rows_r.append(float(r))
            rows_p.append(float(p))
    if config is None:
        raise ConfigInvalid([f"{path}: missing '# config=' header"])
    n = max(rows_i)
    times = np.array(sorted(set(rows_t)))
    idx = {t: k for k, t in enumerate(times)}
    r = np.empty((len(times), n))
    p = np.empty((len(times), n))
    for t, i, rv, pv in zip(rows_t, rows_i, rows_r, rows_p):
        k = idx[t]
        r[k, i - 1] = rv
        p[k, i - 1] = pv
    return Trajectory(times=times, r=r, p=p, L=r.mean(axis=1), config=config,
                      seed_key=seed_key)


def write_macro_frames_csv(path, traj: MacroTrajectory):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={SCHEMA_VERSION}\n")
        fh.write(f"# eps={_fmt(traj.eps)}\n")
        fh.write("t,i,r,p\n")
        for k, t in enumerate(traj.times):
            ts = _fmt(t)
            for i in range(traj.m_cells):
                fh.write(f"{ts},{i + 1},{_fmt(traj.r[k, i])},{_fmt(traj.p[k, i])}\n")


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    notes: list
    outputs: list
    seeds: dict
    failed: list
    wall_s: float
    results: dict = field(default_factory=dict)   # in-memory analysis per N
    wall_times: dict = field(default_factory=dict)


def write_manifest(path, report: ExperimentReport):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cfg = asdict(report.config)
    cfg["scenario"] = report.config.scenario.value
    doc = {
        "package_version": PACKAGE_VERSION,
        "schema": SCHEMA_VERSION,
        "config": cfg,
        "validation": report.notes,
        "outputs": report.outputs,
        "seeds": report.seeds,
        "failed_replicas": report.failed,
        "wall_s": report.wall_s,
        "replica_wall_s": report.wall_times,
        "created_unix": time.time(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------------------
# top-level experiment driver
# --------------------------------------------------------------------------

def _default_analyzers(cfg: ExperimentConfig) -> list:
    names = []
    if "residuals" in cfg.emit:
        names += ["oneblock", "twoblock"]
    if "clausius" in cfg.emit:
        names += ["clausius"]
    if "weak" in cfg.emit:
        names += ["weak"]
    if not names:
        names = ["energy"]
    return names


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute the configured scenario over n_list and emit requested artifacts."""
    t_begin = time.monotonic()
    notes = validate(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    analyzers = _default_analyzers(cfg)
    frames_dir = out_dir if "frames" in cfg.emit else None

    outputs, failed = [], []
    seeds = {}
    wall_times = {}
    per_n = {}
    for n in cfg.n_list:
        results = run_ensemble(cfg, n, analyzers, frames_dir=frames_dir)
        good, bad = split_results(results)
        failed.extend(bad)
        per_n[n] = good
        for r in good:
            key = f"N{n}/rep{r['replica']}"
            seeds[key] = {"entropy": cfg.seed, "spawn_key": [n, r["replica"]]}
            wall_times[key] = round(r["wall_s"], 4)
            if "frames_path" in r:
                outputs.append(r["frames_path"])

    if "thermo_tables" in cfg.emit:
        outputs += emit_thermo_tables(out_dir, cfg)
    if "residuals" in cfg.emit:
        outputs.append(emit_residual_table(out_dir / "oneblock_scaling.csv", cfg, per_n))
    if "clausius" in cfg.emit:
        outputs.append(emit_clausius_table(out_dir / "clausius.csv", cfg, per_n))
    if "weak" in cfg.emit:
        outputs.append(emit_weak_table(out_dir / "weak_residuals.csv", cfg, per_n))

    report = ExperimentReport(config=cfg, notes=notes, outputs=[str(o) for o in outputs],
                              seeds=seeds, failed=failed,
                              wall_s=time.monotonic() - t_begin, results=per_n,
                              wall_times=wall_times)
    write_manifest(out_dir / "manifest.json", report)
    return report


def emit_thermo_tables(out_dir, cfg: ExperimentConfig, tau_lo=-3.0, tau_hi=3.0,
                       step=0.01) -> list:
    thermo = thermo_for(cfg.potential(), cfg.beta)
    taus = np.arange(tau_lo, tau_hi + 0.5 * step, step)
    ells = thermo.ell_of_tau_vec(taus)
    Gs = thermo.grid.G(taus)
    Fs = thermo.F_vec(ells)
    p1 = Path(out_dir) / "thermo_G_of_tau.csv"
    write_csv(p1, ["tau", "G", "ell"], zip(taus, Gs, ells))
    p2 = Path(out_dir) / "thermo_F_of_ell.csv"
    write_csv(p2, ["ell", "F", "tau"], zip(ells, Fs, taus))
    return [p1, p2]


def emit_residual_table(path, cfg: ExperimentConfig, per_n: dict):
    rows = []
    samples = []
    n_vals = []
    for n in cfg.n_list:
        good = per_n.get(n, [])
        vals = np.array([r["analysis"]["oneblock"]["per_site"] for r in good])
        if vals.size == 0:
            continue
        sim = cfg.sim_config(n)
        se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
        rows.append((n, sim.block_l, sim.sigma, float(vals.mean()), float(se)))
        samples.append(vals)
        n_vals.append(n)
    comments = []
    if len(n_vals) >= 2:
        fit = fit_loglog(n_vals, samples)
        comments = [f"fit_slope={fit['slope']:.17g}",
                    f"fit_ci_lo={fit['ci_lo']:.17g}",
                    f"fit_ci_hi={fit['ci_hi']:.17g}"]
    write_csv(path, ["N", "l", "sigma", "residual", "SE"], rows, comments)
    return path


def emit_clausius_table(path, cfg: ExperimentConfig, per_n: dict):
    from .observables import clausius_balance
    rows = []
    comments = []
    for n in cfg.n_list:
        good = per_n.get(n, [])
        series = [r["analysis"]["clausius"] for r in good if "clausius" in r["analysis"]]
        if not series:
            continue
        rep = clausius_balance(series)
        gap_se = np.sqrt(rep.se_work ** 2 + rep.se_dF ** 2)
        for k, t in enumerate(rep.times):
            rows.append((n, t, rep.mean_work[k], rep.mean_dF[k],
                         rep.mean_work[k] - rep.mean_dF[k], gap_se[k]))
        comments += [
            f"N={n} slack_int={rep.slack_int:.17g} slack_int_se={rep.slack_int_se:.17g}",
            f"N={n} slack_end={rep.slack_end:.17g} slack_end_se={rep.slack_end_se:.17g}",
            f"N={n} dF_end={rep.dF_end:.17g} dF_end_se={rep.dF_end_se:.17g}",
        ]
    write_csv(path, ["N", "t", "mean_W", "mean_dF", "slack", "SE"], rows, comments)
    return path


def emit_weak_table(path, cfg: ExperimentConfig, per_n: dict):
    rows = []
    for n in cfg.n_list:
        good = per_n.get(n, [])
        mats = [r["analysis"]["weak"] for r in good if "weak" in r["analysis"]]
        if not mats:
            continue
        mean = np.mean(np.stack(mats), axis=0)
        for k in range(mean.shape[0]):
            rows.append((n, k + 1, mean[k, 0], mean[k, 1]))
    write_csv(path, ["N", "basis_k", "R_r", "R_p"], rows)
    return path


# --------------------------------------------------------------------------
# micro vs macro comparison
# --------------------------------------------------------------------------

def ensemble_mean_field(results: Sequence[dict]) -> dict:
    fields = [r["analysis"]["field_at"] for r in results]
    r_mean = np.mean(np.stack([f["r"] for f in fields]), axis=0)
    p_mean = np.mean(np.stack([f["p"] for f in fields]), axis=0)
    f0 = fields[0]
    return {"x": f0["x"], "w": f0["w"], "covered": f0["covered"],
            "r": r_mean, "p": p_mean}


def micro_macro_l1(mean_field: dict, macro: MacroTrajectory, t: float) -> float:
    """L1 distance over the hat-covered cells at one recorded time."""
    k = int(np.argmin(np.abs(macro.times - t)))
    if abs(macro.times[k] - t) > 1e-9:
        raise ConfigInvalid([f"macro trajectory has no frame at t={t}"])
    xm = (np.arange(macro.m_cells) + 0.5) / macro.m_cells
    cov = mean_field["covered"]
    x = mean_field["x"][cov]
    w = mean_field["w"][cov]
    r_mac = np.interp(x, xm, macro.r[k])
    p_mac = np.interp(x, xm, macro.p[k])
    return float(np.sum(w * np.abs(mean_field["r"][cov] - r_mac))
                 + np.sum(w * np.abs(mean_field["p"][cov] - p_mac)))


def macro_reference(cfg: ExperimentConfig, n: int, t_end: Optional[float] = None,
                    m_cells: Optional[int] = None) -> MacroTrajectory:
    """Macro solve paired to the chain run at size n (eps = sigma/N by default)."""
    thermo = thermo_for(cfg.potential(), cfg.beta)
    sched = cfg.schedule()
    spec = cfg.initial_spec()
    if spec[0] == "equilibrium":
        ell = float(thermo.ell_of_tau_vec(np.array([spec[1]]))[0])
        r0 = lambda x: np.full_like(x, ell)    # noqa: E731
        p0 = lambda x: np.zeros_like(x)        # noqa: E731
    else:
        r_fn, p_fn = standing_wave(spec[1])
        r0 = lambda x: r_fn(0.0, x)            # noqa: E731
        p0 = lambda x: p_fn(0.0, x)            # noqa: E731
    return solve(r0, p0, sched, thermo, cfg.macro_eps_for(n),
                 m_cells or cfg.macro_m, t_end if t_end is not None else cfg.t_end,
                 cfg.frames_per_unit_time)
