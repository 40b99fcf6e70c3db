"""Sliding-window samples, normalization and per-cluster training sets."""

import json
from dataclasses import dataclass

import numpy as np

from .clustering import assign
from .linalg import ContractError


@dataclass(frozen=True)
class WindowSample:
    input_window: np.ndarray  # (w, z)
    target: np.ndarray  # (m, z)
    theta: np.ndarray


@dataclass(frozen=True)
class WindowSet:
    """Stacked samples; row ``i`` came from ``source[i]`` starting at ``start[i]``."""

    inputs: np.ndarray  # (N, w, z)
    targets: np.ndarray  # (N, m, z)
    thetas: np.ndarray  # (N, p)
    source: np.ndarray
    start: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield WindowSample(self.inputs[i], self.targets[i], self.thetas[i])

    @classmethod
    def concat(cls, sets):
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in
                     ("inputs", "targets", "thetas", "source", "start")))


def make_windows(traj, w, m, stride=1, source=0):
    """Every (w past, m next) pair from one trajectory, stepping ``stride``."""
    if w < 1 or m < 1:
        raise ContractError("w and m must be >= 1")
    states = traj.states.T
    T = states.shape[0]
    count = T - w - m + 1
    if count < 1:
        raise ContractError(f"trajectory of {T} steps is shorter than w + m = {w + m}")
    starts = np.arange(0, count, stride)
    view = np.lib.stride_tricks.sliding_window_view(states, w + m, axis=0)  # (count, z, w+m)
    blocks = np.ascontiguousarray(view[starts].transpose(0, 2, 1))
    return WindowSet(
        inputs=blocks[:, :w],
        targets=blocks[:, w:],
        thetas=np.repeat(np.atleast_2d(traj.theta), starts.size, axis=0),
        source=np.full(starts.size, source),
        start=starts,
    )


@dataclass(frozen=True)
class ClusterDataset:
    cluster_index: int
    samples: WindowSet


def build_cluster_datasets(trajs, clustering, w, m, stride=1):
    """Window each trajectory on its own and pool the windows per cluster."""
    per = [[] for _ in range(clustering.k)]
    for i, traj in enumerate(trajs):
        per[assign(clustering, traj.theta)].append(make_windows(traj, w, m, stride, source=i))
    out = []
    for j, sets in enumerate(per):
        if not sets:
            raise ContractError(f"cluster {j} has no trajectories")
        out.append(ClusterDataset(j, WindowSet.concat(sets)))
    return out


@dataclass(frozen=True)
class Normalizer:
    """Per-feature min-max map onto [-1, 1]; constant features map to 0."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, data):
        data = np.asarray(data, dtype=np.float64)
        flat = data.reshape(-1, data.shape[-1])
        return cls(flat.min(axis=0), flat.max(axis=0))

    @property
    def _mid(self):
        return 0.5 * (self.hi + self.lo)

    @property
    def _half(self):
        half = 0.5 * (self.hi - self.lo)
        return np.where(half > 0, half, 1.0)

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self._mid) / self._half

    def invert(self, y):
        return np.asarray(y, dtype=np.float64) * self._half + self._mid


def manifest(datasets, w, m, stride, normalizer):
    """Plain-text summary of a dataset build for experiment logs."""
    return json.dumps({
        "w": w, "m": m, "window_stride": stride,
        "counts": [len(d.samples) for d in datasets],
        "normalizer": {"lo": normalizer.lo.tolist(), "hi": normalizer.hi.tolist()},
    }, indent=2, sort_keys=True)
