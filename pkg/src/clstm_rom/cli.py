"""Command-line entry point: ``clstm-rom <command> --config CFG``.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 I/O or archive error.
"""

import functools
import json
import math
import os
import sys
import time
from dataclasses import replace

import click
import numpy as np

from . import archive, experiments, ode
from . import config as config_mod
from . import pod_pipeline as pp
from . import twostage as ts
from .ode import DivergenceError

EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 2, 3, 4


def _guard(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except config_mod.ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DivergenceError as exc:
            click.echo(f"divergence: {exc}", err=True)
            sys.exit(EXIT_DIVERGENCE)
        except (archive.ArchiveError, OSError) as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)
    return wrapper


def _load_config(path, seed, out):
    cfg = config_mod.load(path)
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if out is not None:
        changes["out"] = out
    return config_mod.override(cfg, **changes) if changes else cfg


def _write_text(path, text):
    archive.write_atomic(path, text.encode())


def _write_with(path, writer):
    """Run ``writer(tmp_path)`` then rename over ``path``."""
    tmp = f"{path}.tmp-{os.getpid()}"
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _fmt(v):
    return repr(float(v))


def _config_options(func):
    func = click.option("--out", "out", default=None, help="Output directory (overrides config).")(func)
    func = click.option("--seed", type=int, default=None, help="Seed override.")(func)
    func = click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))(func)
    return func


@click.group()
def main():
    """Two-stage C-LSTM reduced-order forecaster."""


@main.command()
@_config_options
@_guard
def generate(config_path, seed, out):
    """Write ground-truth trajectories (training and test) as CSV."""
    cfg = _load_config(config_path, seed, out)
    root = os.path.join(cfg.out, "trajectories")
    os.makedirs(root, exist_ok=True)
    for split, thetas in (("train", cfg.training_thetas()), ("test", cfg.test_thetas())):
        for i, traj in enumerate(experiments.raw_trajectories(cfg, thetas)):
            _write_with(os.path.join(root, f"{split}_{i:03d}.csv"),
                        lambda tmp, t=traj: ode.trajectory_to_csv(tmp, t))
    click.echo(root)


@main.command()
@_config_options
@_guard
def train(config_path, seed, out):
    """Train and write model.romf plus loss curves."""
    cfg = _load_config(config_path, seed, out)
    os.makedirs(cfg.out, exist_ok=True)
    t0 = time.perf_counter()
    model, curves = experiments.train(cfg)
    echo = cfg.to_dict()
    del echo["out"]  # where results land must not change the archive bytes
    digest = archive.save(os.path.join(cfg.out, "model.romf"), model, echo)
    for name, curve in _flat_curves(curves):
        _write_text(os.path.join(cfg.out, f"loss_{name}.csv"),
                    "epoch,loss\n" + "".join(f"{i + 1},{_fmt(v)}\n" for i, v in enumerate(curve)))
    click.echo(f"archive sha256 {digest} ({time.perf_counter() - t0:.1f} s)")


def _flat_curves(curves):
    for i, c in enumerate(curves.get("first_stage", [])):
        yield f"first_stage_{i}", c
    if "second_stage" in curves:
        yield "second_stage", curves["second_stage"]


def _archive_and_config(path):
    model, echo = archive.load(path)
    if "experiment" not in echo:
        raise archive.ArchiveError(f"{path}: archive carries no experiment config")
    return model, config_mod.from_dict(echo["experiment"])


def _parse_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise config_mod.ConfigError(f"not a comma-separated number list: {text!r}") from None


@main.command()
@click.option("--archive", "archive_path", required=True)
@click.option("--theta", required=True, help="New parameter value(s), comma separated.")
@click.option("--horizon", type=int, required=True)
@click.option("--window", "window_csv", default=None, help="CSV trajectory supplying the exact window.")
@click.option("--out", "out", default=".")
@_guard
def predict(archive_path, theta, horizon, window_csv, out):
    """Roll a trained model out from an exact initial window."""
    model, cfg = _archive_and_config(archive_path)
    th = np.array(_parse_floats(theta))
    if window_csv:
        traj = ode.trajectory_from_csv(window_csv)
    else:
        w = model.model_1.w if isinstance(model, pp.PipelineModel) else model.w
        traj = experiments.test_trajectories(cfg, [th], w, 1)[0]
    if isinstance(model, pp.PipelineModel):
        traj = ode.subsample(traj, cfg.stride) if not window_csv else traj
        res = pp.pipeline_rollout(model, traj.states[:, :model.model_1.w], th, horizon)
        pred, wall, iters = res.predicted, res.wall_time, None
    else:
        res = ts.rollout(model, traj.states[:, :model.w].T, th, horizon)
        pred, wall, iters = res.predicted, res.wall_time, res.iterations
    os.makedirs(out, exist_ok=True)
    dt = traj.dt
    rows = "".join(f"{_fmt((i + 1) * dt)}," + ",".join(_fmt(v) for v in pred[:, i]) + "\n"
                   for i in range(pred.shape[1]))
    _write_text(os.path.join(out, "prediction.csv"), rows)
    report = {"wall_time_s": wall, "iterations": iters, "horizon": horizon}
    _write_text(os.path.join(out, "prediction_report.json"), json.dumps(report, sort_keys=True) + "\n")
    click.echo(json.dumps(report, sort_keys=True))


@main.command()
@click.option("--archive", "archive_path", required=True)
@click.option("--theta", default=None, help="Test parameters, comma separated (default: config test set).")
@click.option("--horizon", type=int, default=None)
@click.option("--out", "out", default=".")
@_guard
def evaluate(archive_path, theta, horizon, out):
    """Score rollouts against exact trajectories; writes metrics.csv and summary.json."""
    model, cfg = _archive_and_config(archive_path)
    thetas = _parse_floats(theta) if theta else cfg.test_thetas()
    horizon = horizon or cfg.horizon
    ev = experiments.evaluate(model, cfg, thetas, horizon)
    os.makedirs(out, exist_ok=True)
    _write_with(os.path.join(out, "metrics.csv"), ev.to_csv)
    dt = (cfg.dt or ode.SYSTEMS.get(cfg.system, ode.SYSTEMS["duffing"]).dt) * cfg.stride
    summary = {
        "theta": [float(np.atleast_1d(t)[0]) for t in ev.thetas],
        "mae": ev.mean_mae.tolist(),
        "mean_rel_err": ev.rel_err.mean(axis=1).tolist(),
        "error_slope": ev.slopes(dt).tolist(),
        "wall_time_s": ev.wall_time,
    }
    _write_text(os.path.join(out, "summary.json"), json.dumps(summary, indent=2, sort_keys=True) + "\n")
    click.echo(json.dumps({"mean_mae": float(ev.mean_mae.mean())}))


SWEEPABLE = {"w": "w", "m": "m", "cap": "coeff_cap"}


def run_sweep(cfg, param, values, horizon=None):
    """Train and evaluate once per swept value.  Returns tidy rows."""
    horizon = horizon or cfg.horizon
    thetas = cfg.test_thetas()
    rows = []
    for value in values:
        if param == "cap":
            c = config_mod.override(cfg, pod=replace(cfg.pod, coeff_cap=int(value)))
        else:
            c = config_mod.override(cfg, **{param: int(value)})
        model, _ = experiments.train(c)
        ev = experiments.evaluate(model, c, thetas, horizon)
        iters = math.ceil(horizon / c.m)
        for i, th in enumerate(ev.thetas):
            rows.append({
                "param": param, "value": int(value), "theta": float(np.atleast_1d(th)[0]),
                "mae": float(ev.mean_mae[i]), "rel_err": float(ev.rel_err[i].mean()),
                "wall_time": ev.wall_time, "iterations": iters,
            })
    return rows


def rows_to_csv(rows):
    cols = ["param", "value", "theta", "mae", "rel_err", "wall_time", "iterations"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(_fmt(r[c]) if isinstance(r[c], float) else str(r[c]) for c in cols))
    return "\n".join(lines) + "\n"


@main.command()
@_config_options
@click.option("--param", type=click.Choice(sorted(SWEEPABLE)), required=True)
@click.option("--values", required=True, help="Comma-separated values, e.g. 25,50,100,200.")
@_guard
def sweep(config_path, seed, out, param, values):
    """Retrain and evaluate across w, m or POD coefficient-cap values."""
    cfg = _load_config(config_path, seed, out)
    vals = [int(v) for v in _parse_floats(values)]
    rows = run_sweep(cfg, param, vals)
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, f"sweep_{param}.csv")
    _write_text(path, rows_to_csv(rows))
    click.echo(path)


@main.command()
@click.argument("archive_path")
@_guard
def inspect(archive_path):
    """Print an archive's manifest."""
    with open(archive_path, "rb") as fh:
        raw = fh.read()
    archive.unpack(raw)  # verifies hashes
    click.echo(json.dumps(archive.read_manifest(raw), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
