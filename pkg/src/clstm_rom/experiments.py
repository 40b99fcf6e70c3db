"""Glue between an :class:`ExperimentConfig` and the numerical modules."""

import glob
import os
import time
from dataclasses import replace

import numpy as np

from . import ode
from . import pod_pipeline as pp
from . import twostage as ts
from .config import ConfigError

SURROGATE_DT = 0.05


def surrogate_spec(cfg):
    s = cfg.surrogate
    return ode.SurrogateSpec(
        n=s.n, blocks=cfg.pod.blocks, periodic_modes=s.periodic_modes,
        transient_modes=s.transient_modes, fluctuation_modes=s.fluctuation_modes,
        fluctuation_amplitude=s.fluctuation_amplitude, decay=s.decay, omega0=s.omega0,
        omega_slope=s.omega_slope, theta_ref=s.theta_ref, noise=s.noise, bank_seed=s.bank_seed,
    )


def raw_trajectories(cfg, thetas, steps=None):
    """Trajectories at the integrator resolution (before subsampling)."""
    steps = steps or cfg.steps
    if cfg.system in ode.SYSTEMS:
        system = ode.SYSTEMS[cfg.system]
        return [ode.rk4_integrate(system, th, cfg.x0, cfg.dt, steps) for th in thetas]
    if cfg.system == "surrogate":
        spec = surrogate_spec(cfg)
        dt = cfg.dt or SURROGATE_DT
        return [ode.synth_cavity_like(spec, th, dt, steps, cfg.surrogate.swing_in_steps) for th in thetas]
    if cfg.system == "external-csv":
        paths = sorted(glob.glob(os.path.join(cfg.data_dir, "*.csv")))
        if not paths:
            raise ConfigError(f"data_dir {cfg.data_dir}: no CSV trajectories found")
        return [ode.trajectory_from_csv(p) for p in paths]
    raise ConfigError(f"unknown system {cfg.system}")


def is_pipeline(cfg):
    return cfg.system in ("surrogate", "external-csv") and _high_dim(cfg)


def _high_dim(cfg):
    return cfg.system == "surrogate" or cfg.pod.n_i > 0 or cfg.pod.coeff_cap is not None


def stage_config(net):
    return ts.StageConfig(**{f: getattr(net, f) for f in ts.StageConfig.__dataclass_fields__})


def two_stage_config(cfg, **changes):
    base = ts.TwoStageConfig(
        k=cfg.k, w=cfg.w, m=cfg.m, sample_stride=cfg.window_stride, seed=cfg.seed,
        first=stage_config(cfg.first_stage), second=stage_config(cfg.second_stage),
    )
    return replace(base, **changes)


def pipeline_config(cfg):
    return pp.PipelineConfig(
        n_i=cfg.pod.n_i, energy_target=cfg.pod.energy_target, coeff_cap=cfg.pod.coeff_cap,
        stride=cfg.stride, blocks=(1,) * cfg.pod.blocks,
        model_1=two_stage_config(cfg), model_2=two_stage_config(cfg),
    )


def train(cfg, trajs=None):
    """Train the model the config describes.  Returns (model, loss curves)."""
    if trajs is None:
        thetas = cfg.training_thetas() if cfg.system != "external-csv" else None
        trajs = raw_trajectories(cfg, thetas)
    if is_pipeline(cfg):
        pipe = pp.build_pipeline(trajs, pipeline_config(cfg))
        return pipe, {}
    sub = [ode.subsample(t, cfg.stride) for t in trajs]
    return ts.train(sub, two_stage_config(cfg))


def test_trajectories(cfg, thetas, w, horizon):
    """Exact trajectories long enough for a w-window plus ``horizon`` steps."""
    if cfg.system in ode.SYSTEMS:
        steps = (w + horizon) * cfg.stride
        return [ode.subsample(t, cfg.stride) for t in raw_trajectories(cfg, thetas, steps)]
    steps = (w + horizon + cfg.pod.n_i) * cfg.stride
    return raw_trajectories(cfg, thetas, steps)


def evaluate(model, cfg, thetas, horizon):
    """Per-parameter error table for a trained model."""
    if isinstance(model, pp.PipelineModel):
        return evaluate_pipeline(model, cfg, thetas, horizon)
    trajs = test_trajectories(cfg, thetas, model.w, horizon)
    return ts.evaluate(model, trajs, horizon)


def evaluate_pipeline(pipe, cfg, thetas, horizon):
    trajs = [ode.subsample(t, cfg.stride) for t in test_trajectories(cfg, thetas, pipe.model_1.w, horizon)]
    w = pipe.model_1.w
    t0 = time.perf_counter()
    maes, rels = [], []
    for t in trajs:
        out = pp.pipeline_rollout(pipe, t.states[:, :w], t.theta, horizon)
        truth = t.states[:, w:w + horizon]
        maes.append(np.abs(out.predicted - truth).mean(axis=0))
        rels.append(ts.relative_error(out.predicted, truth))
    return ts.Evaluation(np.vstack([t.theta for t in trajs]), np.array(maes), np.array(rels),
                         time.perf_counter() - t0)
