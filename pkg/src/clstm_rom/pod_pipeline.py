"""High-dimensional workflow: POD-reduce snapshots, forecast the
coefficients with two-stage models, and chain a swing-in model into a
periodic-regime model through a basis change."""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import twostage as ts
from .linalg import ContractError, PodBasis, basis_change, block_pod, pod_lift, pod_project
from .ode import DivergenceError, Trajectory, subsample

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReducedTrajectory:
    theta: np.ndarray
    basis_id: str
    coeffs: np.ndarray  # (n_modes, T)
    dt: float

    def as_trajectory(self):
        return Trajectory(theta=self.theta, dt=self.dt, states=self.coeffs)


def reduce(snapshots, basis, basis_id="basis_1"):
    """Project a full-order trajectory (or bare snapshot matrix) on a basis."""
    if isinstance(snapshots, Trajectory):
        return ReducedTrajectory(snapshots.theta, basis_id, pod_project(basis, snapshots.states), snapshots.dt)
    return pod_project(basis, snapshots)


@dataclass(frozen=True)
class PipelineConfig:
    n_i: int  # swing-in length, in subsampled steps
    energy_target: float = 0.9999
    coeff_cap: int = None
    stride: int = 1
    blocks: tuple = (1,)  # row-block sizes relative weights; (1,) means a single block
    model_1: ts.TwoStageConfig = None
    model_2: ts.TwoStageConfig = None


@dataclass(frozen=True)
class PipelineModel:
    basis_1: PodBasis
    basis_2: PodBasis
    model_1: ts.TwoStageModel
    model_2: ts.TwoStageModel
    M: np.ndarray
    n_i: int
    config: PipelineConfig


def block_sizes(n, blocks):
    """Split ``n`` rows into ``len(blocks)`` equal blocks."""
    count = len(blocks)
    if n % count:
        raise ContractError(f"{n} rows do not split into {count} equal blocks")
    return [n // count] * count


def exact_basis_change(src, dst):
    """Like :func:`basis_change` but returns an exact identity for equal bases."""
    if src.modes.shape == dst.modes.shape and np.array_equal(src.modes, dst.modes):
        return np.eye(src.n_modes)
    return basis_change(src, dst)


def build_pipeline(trajs, config):
    """Two PODs (all snapshots / periodic part only) and two trained forecasters."""
    if config.model_1 is None:
        raise ContractError("pipeline needs a model_1 training config")
    sub = [subsample(t, config.stride) for t in trajs]
    for t in sub:
        if t.length <= config.n_i:
            raise ContractError(f"trajectory of {t.length} steps is not longer than n_i={config.n_i}")
    sizes = block_sizes(sub[0].z, config.blocks)
    all_snap = np.hstack([t.states for t in sub])
    basis_1 = block_pod(all_snap, sizes, config.energy_target, config.coeff_cap)
    if config.n_i == 0:
        basis_2 = basis_1
    else:
        periodic = np.hstack([t.states[:, config.n_i:] for t in sub])
        basis_2 = block_pod(periodic, sizes, config.energy_target, config.coeff_cap)

    red_1 = [reduce(t, basis_1, "basis_1").as_trajectory() for t in sub]
    model_1, _ = ts.train(red_1, config.model_1)
    cfg_2 = config.model_2 or config.model_1
    if config.n_i == 0 and cfg_2 == config.model_1:
        model_2 = model_1
    else:
        red_2 = [replace(reduce(t, basis_2, "basis_2").as_trajectory(),
                         states=pod_project(basis_2, t.states[:, config.n_i:])) for t in sub]
        model_2, _ = ts.train(red_2, cfg_2)
    log.info("POD ranks: basis_1=%d basis_2=%d", basis_1.n_modes, basis_2.n_modes)
    return PipelineModel(basis_1, basis_2, model_1, model_2,
                         exact_basis_change(basis_1, basis_2), config.n_i, config)


@dataclass(frozen=True)
class PipelineRollout:
    predicted: np.ndarray  # (N, horizon) full-order states
    coeffs_1: np.ndarray  # (n1, min(horizon, n_i))
    coeffs_2: np.ndarray  # (n2, horizon - n_i)
    wall_time: float


def pipeline_rollout(pipe, initial_full_window, theta, horizon):
    """Predict ``horizon`` full-order steps after an exact (N, w) window.

    The first ``n_i`` predicted steps come from model 1 in basis 1.  The
    last w coefficient columns are then mapped through ``M`` into basis 2
    and model 2 continues to the horizon.  Each phase is lifted with its
    own basis.
    """
    window = np.asarray(initial_full_window, dtype=np.float64)
    if horizon < pipe.n_i or horizon < 1:
        raise ContractError(f"horizon {horizon} must be >= n_i={pipe.n_i} and >= 1")
    w1 = pipe.model_1.w
    c_win = pod_project(pipe.basis_1, window[:, -w1:])
    wall = 0.0
    h1 = min(pipe.n_i, horizon)
    if h1 > 0:
        try:
            r1 = ts.rollout(pipe.model_1, c_win.T, theta, h1)
        except DivergenceError as exc:
            raise DivergenceError(f"phase 1 (swing-in): {exc}", exc.step) from exc
        coeffs_1 = r1.predicted
        wall += r1.wall_time
    else:
        coeffs_1 = np.zeros((pipe.basis_1.n_modes, 0))
    h2 = horizon - h1
    if h2 > 0:
        history = np.hstack([c_win, coeffs_1])[:, -pipe.model_2.w:]
        if history.shape[1] < pipe.model_2.w:
            raise ContractError("not enough history for the second model's window")
        if pipe.M.shape[0] == pipe.M.shape[1] and np.array_equal(pipe.M, np.eye(pipe.M.shape[0])):
            win_2 = history
        else:
            win_2 = pipe.M @ history
        try:
            r2 = ts.rollout(pipe.model_2, win_2.T, theta, h2)
        except DivergenceError as exc:
            raise DivergenceError(f"phase 2 (periodic): {exc}", exc.step) from exc
        coeffs_2 = r2.predicted
        wall += r2.wall_time
    else:
        coeffs_2 = np.zeros((pipe.basis_2.n_modes, 0))
    parts = []
    if h1:
        parts.append(pod_lift(pipe.basis_1, coeffs_1))
    if h2:
        parts.append(pod_lift(pipe.basis_2, coeffs_2))
    return PipelineRollout(np.hstack(parts), coeffs_1, coeffs_2, wall)


def mean_relative_error(pred, true):
    return float(np.mean(ts.relative_error(pred, true)))


def error_decomposition(pipe, truth, predicted):
    """Projection error of the truth vs. total rollout error (relative, per step)."""
    proj = pod_lift(pipe.basis_1, pod_project(pipe.basis_1, truth))
    return {
        "projection": ts.relative_error(proj, truth),
        "total": ts.relative_error(predicted, truth),
        "model": ts.relative_error(predicted, proj),
    }


def projection_error(basis, snapshots):
    recon = pod_lift(basis, pod_project(basis, snapshots))
    return float(np.linalg.norm(snapshots - recon) / np.linalg.norm(snapshots))


# --------------------------------------------------------------------------
# spectra and swing-in diagnostics


def dominant_bins(series):
    """Index of the largest non-DC FFT magnitude for each row."""
    series = np.atleast_2d(np.asarray(series, dtype=np.float64))
    spec = np.abs(np.fft.rfft(series - series.mean(axis=1, keepdims=True), axis=1))
    spec[:, 0] = 0.0
    return np.argmax(spec, axis=1)


def spectral_compare(coeff_series_pred, coeff_series_true):
    """(predicted bin, true bin) of the dominant frequency per coefficient series."""
    pred = np.atleast_2d(coeff_series_pred)
    true = np.atleast_2d(coeff_series_true)
    if pred.shape != true.shape:
        raise ContractError("series shapes differ")
    return list(zip(dominant_bins(pred).tolist(), dominant_bins(true).tolist()))


def _refine_period(tail, guess):
    # FFT bins are coarse for short tails; pick the best-correlated lag nearby
    L = tail.shape[1]
    lo, hi = max(2, int(0.75 * guess)), min(L // 2, int(np.ceil(1.25 * guess)))
    best, best_lag = -np.inf, int(round(guess))
    for lag in range(lo, hi + 1):
        a, b = tail[:, :L - lag].ravel(), tail[:, lag:].ravel()
        if np.std(a) == 0 or np.std(b) == 0:
            continue
        r = np.corrcoef(a, b)[0, 1]
        if r > best:
            best, best_lag = r, lag
    return best_lag


def suggest_n_i(coeffs, length=None, threshold=0.99):
    """First step from which the series repeats itself one period later.

    The period is estimated from the dominant FFT bin of the second half of
    the series and refined by autocorrelation; the first start whose segment correlates above ``threshold``
    with the segment one period on is returned (None if never).
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
    T = coeffs.shape[1]
    tail = coeffs[:, T // 2:]
    spec = np.abs(np.fft.rfft(tail - tail.mean(axis=1, keepdims=True), axis=1)).sum(axis=0)
    spec[0] = 0.0
    guess = tail.shape[1] / max(int(np.argmax(spec)), 1)
    period = _refine_period(tail, guess)
    length = length or period
    for s in range(0, T - period - length + 1):
        a = coeffs[:, s:s + length].ravel()
        b = coeffs[:, s + period:s + period + length].ravel()
        if np.std(a) == 0 or np.std(b) == 0:
            continue
        if np.corrcoef(a, b)[0, 1] > threshold and math.isclose(np.std(a), np.std(b), rel_tol=0.01):
            return s
    return None
