"""Command-line interface.

Data goes to files; progress and diagnostics go to stderr so pipelines stay
machine-parsable.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import harness
from .errors import ChainLabError
from .observables import clausius_balance, clausius_series, EmpiricalField, \
    one_block_residual, weak_residual_basis
from .microsim import ChainState
from .potential import potential_from_config


def _info(msg: str):
    click.echo(msg, err=True)


@click.group()
def main():
    """Chain-with-boundary-tension simulation laboratory."""


def _config_from_options(config, sets):
    try:
        cfg = harness.load_config(config, sets)
    except ChainLabError as exc:
        raise click.ClickException(str(exc))
    return cfg


@main.command("thermo-table")
@click.option("--potential", "kind", default="mollified_kappa", show_default=True)
@click.option("--kappa", default=0.2, show_default=True)
@click.option("--delta", default=0.1, show_default=True)
@click.option("--beta", default=1.0, show_default=True)
@click.option("--tau-min", default=-3.0, show_default=True)
@click.option("--tau-max", default=3.0, show_default=True)
@click.option("--step", default=0.01, show_default=True)
@click.option("--out", default="out", show_default=True)
def thermo_table(kind, kappa, delta, beta, tau_min, tau_max, step, out):
    """Dump (tau, G, ell) and (ell, F, tau) tables as CSV."""
    pot = potential_from_config(kind, kappa, delta)
    cfg = harness.ExperimentConfig(potential_kind=kind, kappa=kappa, delta=delta,
                                   beta=beta, output_dir=out)
    paths = harness.emit_thermo_tables(Path(out), cfg, tau_min, tau_max, step)
    _info(f"wrote {paths[0]} and {paths[1]} (potential={pot.kind.value})")


@main.command()
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--set", "sets", multiple=True, help="override section.key=value")
@click.option("--seed", type=int, default=None)
@click.option("--out", default=None)
@click.option("--threads", type=int, default=None)
def simulate(config, sets, seed, out, threads):
    """Run the configured scenario ensemble and emit its artifacts."""
    cfg = _config_from_options(config, sets)
    if seed is not None:
        cfg = harness.replace(cfg, seed=seed)
    if out is not None:
        cfg = harness.replace(cfg, output_dir=out)
    if threads is not None:
        cfg = harness.replace(cfg, threads=threads)
    try:
        for note in harness.validate(cfg):
            _info(note)
        report = harness.run(cfg)
    except ChainLabError as exc:
        raise click.ClickException(str(exc))
    _info(f"done in {report.wall_s:.1f}s; outputs: {len(report.outputs)}; "
          f"failed replicas: {len(report.failed)}")
    _info(f"manifest: {Path(cfg.output_dir) / 'manifest.json'}")


@main.command("validate")
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--set", "sets", multiple=True)
def validate_cmd(config, sets):
    """Check a config and print the implied discretization."""
    cfg = _config_from_options(config, sets)
    try:
        notes = harness.validate(cfg)
    except ChainLabError as exc:
        raise click.ClickException(str(exc))
    for note in notes:
        click.echo(note)


@main.command("macro-solve")
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--set", "sets", multiple=True)
@click.option("--n", "n_ref", type=int, default=None,
              help="chain size whose sigma/N sets eps (default: first of n_list)")
@click.option("--out", default=None)
def macro_solve(config, sets, n_ref, out):
    """Solve the viscous reference system for the configured scenario."""
    cfg = _config_from_options(config, sets)
    if out is not None:
        cfg = harness.replace(cfg, output_dir=out)
    n = n_ref if n_ref is not None else cfg.n_list[0]
    traj = harness.macro_reference(cfg, n)
    path = Path(cfg.output_dir) / f"macro_frames_N{n}.csv"
    harness.write_macro_frames_csv(path, traj)
    _info(f"wrote {path} (M={traj.m_cells}, eps={traj.eps:g})")


@main.command()
@click.argument("kind", type=click.Choice(["residuals", "weak", "clausius"]))
@click.option("--frames", "frames_glob", required=True,
              help="frames CSV path or glob (as written by simulate --set experiment.emit=['frames'])")
@click.option("--out", default="out", show_default=True)
@click.option("--t-start", default=0.0, show_default=True,
              help="reference time for the clausius balance")
def analyze(kind, frames_glob, out, t_start):
    """Recompute observables from recorded frames."""
    import glob as globmod
    paths = sorted(Path(p) for p in globmod.glob(frames_glob)) \
        if any(c in frames_glob for c in "*?[") else [Path(frames_glob)]
    if not paths:
        raise click.ClickException(f"no frames match {frames_glob!r}")
    trajs = [harness.read_frames(p) for p in paths]
    sim = trajs[0].config
    thermo = harness.thermo_for(sim.potential, sim.beta)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if kind == "residuals":
        rows = []
        for traj in trajs:
            l = traj.config.block_l
            vals = [one_block_residual(ChainState(traj.r[k], traj.p[k]), l, thermo)
                    for k in range(len(traj.times))]
            mean_sum = float(np.mean(vals))
            per_site = mean_sum * traj.n_sites / (traj.n_sites - 2 * l)
            rows.append((traj.n_sites, l, traj.config.sigma, per_site, 0.0))
        path = out_dir / "oneblock_from_frames.csv"
        harness.write_csv(path, ["N", "l", "sigma", "residual", "SE"], rows)
    elif kind == "weak":
        rows = []
        for traj in trajs:
            fld = EmpiricalField.from_trajectory(traj)
            mat = weak_residual_basis(fld, traj.config.schedule, thermo)
            for k in range(mat.shape[0]):
                rows.append((traj.n_sites, k + 1, mat[k, 0], mat[k, 1]))
        path = out_dir / "weak_from_frames.csv"
        harness.write_csv(path, ["N", "basis_k", "R_r", "R_p"], rows)
    else:
        series = [clausius_series(traj, thermo, l=traj.config.block_l,
                                  t_start=t_start) for traj in trajs]
        rep = clausius_balance(series)
        gap_se = np.sqrt(rep.se_work ** 2 + rep.se_dF ** 2)
        rows = [(trajs[0].n_sites, t, rep.mean_work[k], rep.mean_dF[k],
                 rep.mean_work[k] - rep.mean_dF[k], gap_se[k])
                for k, t in enumerate(rep.times)]
        path = out_dir / "clausius_from_frames.csv"
        harness.write_csv(path, ["N", "t", "mean_W", "mean_dF", "slack", "SE"], rows,
                          [f"slack_int={rep.slack_int:.17g}",
                           f"slack_end={rep.slack_end:.17g}"])
    _info(f"wrote {path} from {len(trajs)} trajectory file(s)")


@main.command()
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--set", "sets", multiple=True)
@click.option("--out", default=None)
@click.option("--threads", type=int, default=None)
def sweep(config, sets, out, threads):
    """N-sweep of the one-block closure residual with a log-log fit."""
    cfg = _config_from_options(config, sets)
    if out is not None:
        cfg = harness.replace(cfg, output_dir=out)
    if threads is not None:
        cfg = harness.replace(cfg, threads=threads)
    cfg = harness.replace(cfg, emit=("residuals",))
    try:
        for note in harness.validate(cfg):
            _info(note)
        report = harness.run(cfg)
    except ChainLabError as exc:
        raise click.ClickException(str(exc))
    path = Path(cfg.output_dir) / "oneblock_scaling.csv"
    _info(f"wrote {path}; failed replicas: {len(report.failed)}")


if __name__ == "__main__":
    sys.exit(main())
