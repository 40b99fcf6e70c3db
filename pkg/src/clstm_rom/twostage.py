"""Partitioning-averaging forecaster.

k local C-LSTM models (one per k-means cluster of training parameters)
each predict the next m states from a window of w past states plus the
parameter.  A second C-LSTM reads the k local predictions, each packed
with its centroid offset, and emits the final prediction.  Rollouts feed
predictions back into the window.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import clstm
from .clustering import kmeans
from .dataset import Normalizer, WindowSet, build_cluster_datasets
from .linalg import ContractError
from .ode import DivergenceError


@dataclass(frozen=True)
class StageConfig:
    hidden: int = 64
    channels: int = 32
    width: int = 3
    stride: int = 1
    residual: bool = False
    epochs: int = 500
    batch_size: int = 32
    lr: float = 1e-3
    lr_decay: float = 1.0
    patience: int = 50
    min_delta: float = 1e-8
    input_noise: float = 0.0  # std of Gaussian noise on normalized training windows

    def train_config(self):
        return clstm.TrainConfig(self.epochs, self.batch_size, self.lr, self.patience,
                                 self.min_delta, self.lr_decay)


@dataclass(frozen=True)
class TwoStageConfig:
    k: int
    w: int
    m: int
    sample_stride: int = 1
    seed: int = 0
    first: StageConfig = field(default_factory=StageConfig)
    second: StageConfig = field(default_factory=StageConfig)
    linear_bypass: bool = False  # identity activations in the combiner; tests only


@dataclass(frozen=True)
class TwoStageModel:
    config: TwoStageConfig
    centroids: np.ndarray  # (k, p) raw units, packing order of the experts
    first_stage: tuple
    second_stage: clstm.CLstmModel
    state_norm: Normalizer
    theta_norm: Normalizer

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def z(self):
        return self.state_norm.lo.size

    @property
    def p(self):
        return self.theta_norm.lo.size

    @property
    def w(self):
        return self.config.w

    @property
    def m(self):
        return self.config.m


@dataclass(frozen=True)
class RolloutResult:
    predicted: np.ndarray  # (z, horizon), or (batch, z, horizon) for batched rollouts
    iterations: int
    wall_time: float


# --------------------------------------------------------------------------
# input packing


def first_stage_input(windows, thetas):
    """Append the (normalized) parameter to every window row."""
    windows = np.asarray(windows, dtype=np.float64)
    thetas = np.atleast_2d(thetas)
    tiled = np.broadcast_to(thetas[:, None, :], windows.shape[:2] + (thetas.shape[1],))
    return np.concatenate([windows, tiled], axis=2)


def second_stage_input(local_preds, centroids, thetas):
    """Row i = [flatten(f_i), centroid_i - theta]; the k rows form the sequence."""
    local_preds = np.asarray(local_preds, dtype=np.float64)
    B, k = local_preds.shape[:2]
    thetas = np.atleast_2d(thetas)
    offsets = centroids[None, :, :] - thetas[:, None, :]
    return np.concatenate([local_preds.reshape(B, k, -1), offsets], axis=2)


def first_stage_forward(model, window, theta):
    """One local model on normalized inputs: (w, z) window -> (m, z)."""
    x = first_stage_input(np.asarray(window)[None], np.atleast_1d(theta)[None])
    return clstm.predict(model, x, _first_base(model, x))[0]


def second_stage_forward(model, local_preds, centroids, theta):
    """Combiner on normalized inputs: (k, m, z) local predictions -> (m, z)."""
    local_preds = np.asarray(local_preds)[None]
    x = second_stage_input(local_preds, np.atleast_2d(centroids), np.atleast_1d(theta)[None])
    return clstm.predict(model, x, _second_base(model, local_preds))[0]


def _first_base(model, x):
    if not model.config.residual:
        return None
    z = model.config.z
    return np.repeat(x[:, -1:, :z], model.config.m, axis=1)


def _second_base(model, local_preds):
    if not model.config.residual:
        return None
    return local_preds.mean(axis=1)


def _window_noise(model, std):
    """Mini-batch perturbation of the state columns of first-stage inputs."""
    if std <= 0:
        return None
    z = model.config.z

    def perturb(x, base, rng):
        x = x.copy()
        x[:, :, :z] += std * rng.standard_normal(x[:, :, :z].shape)
        return x, _first_base(model, x)

    return perturb


def _chunks(n, size=1024):
    for s in range(0, n, size):
        yield slice(s, min(n, s + size))


def local_predictions(experts, windows_n, thetas_n):
    """(B, k, m, z) predictions of every expert on normalized windows."""
    x = first_stage_input(windows_n, thetas_n)
    out = []
    for sl in _chunks(x.shape[0]):
        out.append(np.stack([clstm.predict(e, x[sl], _first_base(e, x[sl])) for e in experts], axis=1))
    return np.concatenate(out)


def predict_normalized(model, windows_n, thetas_n):
    local = local_predictions(model.first_stage, windows_n, thetas_n)
    cents = model.theta_norm.apply(model.centroids)
    x = second_stage_input(local, cents, thetas_n)
    return clstm.predict(model.second_stage, x, _second_base(model.second_stage, local))


# --------------------------------------------------------------------------
# training


def _stage_model(cfg, n_in, m, z, rng, linear=False):
    net = clstm.CLstmConfig(n_in=n_in, m=m, z=z, hidden=cfg.hidden, channels=cfg.channels,
                            width=cfg.width, stride=cfg.stride, residual=cfg.residual, linear=linear)
    return clstm.CLstmModel.init(net, rng)


def train_first_stage(datasets, config, z, p):
    """Independent Adam/MSE fits, one per cluster dataset.

    ``datasets`` hold normalized windows and parameters.  Model i draws its
    initialization and batch order from the stream ``(seed, i)``.
    """
    if not datasets:
        raise ContractError("no cluster datasets")
    models, curves = [], []
    for i, ds in enumerate(datasets):
        s = ds.samples
        if len(s) == 0:
            raise ContractError(f"cluster {i} has an empty dataset")
        x = first_stage_input(s.inputs, s.thetas)
        model = _stage_model(config.first, z + p, config.m, z, np.random.default_rng([config.seed, i]))
        model, curve = clstm.fit(model, x, s.targets, _first_base(model, x),
                                 config.first.train_config(), seed=[config.seed, i, 1],
                                 perturb=_window_noise(model, config.first.input_noise))
        models.append(model)
        curves.append(curve)
    return tuple(models), curves


def train_second_stage(first_stage, samples, centroids_n, config):
    """Fit the combiner on frozen local predictions for every training window.

    With ``input_noise`` the experts see one seeded perturbation of each
    window, so the combiner learns from the outputs it meets in rollouts.
    """
    windows = samples.inputs
    if config.second.input_noise > 0:
        rng = np.random.default_rng([config.seed, len(first_stage), 2])
        windows = windows + config.second.input_noise * rng.standard_normal(windows.shape)
    local = local_predictions(first_stage, windows, samples.thetas)
    x = second_stage_input(local, centroids_n, samples.thetas)
    k = len(first_stage)
    z = samples.targets.shape[2]
    model = _stage_model(config.second, x.shape[2], config.m, z,
                         np.random.default_rng([config.seed, k]), linear=config.linear_bypass)
    return clstm.fit(model, x, samples.targets, _second_base(model, local),
                     config.second.train_config(), seed=[config.seed, k, 1])


def _normalized(traj, state_norm):
    return replace(traj, states=state_norm.apply(traj.states.T).T)


def train(trajs, config):
    """Cluster, window, and fit both stages.  Returns (model, loss curves)."""
    if not trajs:
        raise ContractError("no training trajectories")
    thetas = np.vstack([np.atleast_1d(t.theta) for t in trajs])
    clustering = kmeans(thetas, config.k, seed=config.seed)
    state_norm = Normalizer.fit(np.hstack([t.states for t in trajs]).T)
    theta_norm = Normalizer.fit(thetas)
    ntrajs = [_normalized(t, state_norm) for t in trajs]
    datasets = build_cluster_datasets(ntrajs, clustering, config.w, config.m, config.sample_stride)
    datasets = [replace(d, samples=replace(d.samples, thetas=theta_norm.apply(d.samples.thetas)))
                for d in datasets]
    z, p = trajs[0].z, thetas.shape[1]
    experts, curves = train_first_stage(datasets, config, z, p)
    pooled = WindowSet.concat([d.samples for d in datasets])
    centroids_n = theta_norm.apply(clustering.centroids)
    combiner, g_curve = train_second_stage(experts, pooled, centroids_n, config)
    model = TwoStageModel(config, clustering.centroids, experts, combiner, state_norm, theta_norm)
    return model, {"first_stage": curves, "second_stage": g_curve}


# --------------------------------------------------------------------------
# rollout and evaluation


def rollout(model, initial_window, theta, horizon):
    """Autoregressive prediction of ``horizon`` steps after the window.

    ``initial_window`` is (w, z) in physical units, or (batch, w, z) with
    ``theta`` of shape (batch, p) for several parameters at once.
    """
    window = np.asarray(initial_window, dtype=np.float64)
    single = window.ndim == 2
    if single:
        window = window[None]
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    if window.shape[1:] != (model.w, model.z):
        raise ContractError(f"window must be ({model.w}, {model.z}), got {window.shape[1:]}")
    thetas = np.asarray(theta, dtype=np.float64).reshape(window.shape[0], model.p)
    t0 = time.perf_counter()
    win = model.state_norm.apply(window)
    thetas_n = model.theta_norm.apply(thetas)
    m = model.m
    iterations = math.ceil(horizon / m)
    out = np.empty((window.shape[0], iterations * m, model.z))
    for it in range(iterations):
        pred = predict_normalized(model, win, thetas_n)
        if not np.all(np.isfinite(pred)):
            raise DivergenceError(f"non-finite prediction at iteration {it}", it)
        out[:, it * m:(it + 1) * m] = pred
        win = np.concatenate([win[:, m:], pred], axis=1) if m < model.w else pred[:, -model.w:]
    predicted = model.state_norm.invert(out[:, :horizon]).transpose(0, 2, 1)
    wall = time.perf_counter() - t0
    return RolloutResult(predicted[0] if single else predicted, iterations, wall)


@dataclass(frozen=True)
class Evaluation:
    thetas: np.ndarray
    mae: np.ndarray  # (n_theta, horizon) normalized-state absolute error, averaged over z
    rel_err: np.ndarray  # (n_theta, horizon) relative L2 error per step
    wall_time: float

    @property
    def mean_mae(self):
        return self.mae.mean(axis=1)

    def slopes(self, dt=1.0):
        """Least-squares slope of the per-step MAE against time, per parameter."""
        t = np.arange(self.mae.shape[1]) * dt
        tc = t - t.mean()
        return (self.mae - self.mae.mean(axis=1, keepdims=True)) @ tc / (tc @ tc)

    def to_csv(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("theta,step,mae,rel_err\n")
            for i, th in enumerate(self.thetas):
                label = ";".join(repr(float(v)) for v in np.atleast_1d(th))
                for s in range(self.mae.shape[1]):
                    fh.write(f"{label},{s + 1},{float(self.mae[i, s])!r},{float(self.rel_err[i, s])!r}\n")


def relative_error(pred, true):
    """Per-step ||pred - true|| / ||true|| over the state axis (axis -2)."""
    num = np.linalg.norm(pred - true, axis=-2)
    den = np.linalg.norm(true, axis=-2)
    return num / np.where(den > 0, den, 1.0)


def evaluate(model, trajs, horizon):
    """Roll every test trajectory out from its first exact window and score it."""
    for t in trajs:
        if t.length < model.w + horizon:
            raise ContractError("test trajectory shorter than w + horizon")
    windows = np.stack([t.states[:, :model.w].T for t in trajs])
    thetas = np.vstack([np.atleast_1d(t.theta) for t in trajs])
    res = rollout(model, windows, thetas, horizon)
    truth = np.stack([t.states[:, model.w:model.w + horizon] for t in trajs])
    pn = model.state_norm.apply(res.predicted.transpose(0, 2, 1))
    tn = model.state_norm.apply(truth.transpose(0, 2, 1))
    mae = np.abs(pn - tn).mean(axis=2)
    return Evaluation(thetas, mae, relative_error(res.predicted, truth), res.wall_time)
