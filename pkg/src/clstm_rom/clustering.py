"""k-means over sampled parameter points."""

from dataclasses import dataclass

import numpy as np

from .linalg import ContractError


@dataclass(frozen=True)
class Clustering:
    centroids: np.ndarray  # (k, p), raw parameter units
    assignment: np.ndarray  # (n,) cluster index per training point
    inertia_history: tuple = ()
    scale_lo: np.ndarray = None
    scale_hi: np.ndarray = None

    @property
    def k(self):
        return self.centroids.shape[0]

    def scaled(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.scale_lo is None:
            return points
        return _minmax(points, self.scale_lo, self.scale_hi)


def _minmax(points, lo, hi):
    span = np.where(hi > lo, hi - lo, 1.0)
    return (points - lo) / span


def _sq_dist(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def inertia(points, centroids, labels):
    return float(((points - centroids[labels]) ** 2).sum())


def _plusplus(points, k, rng):
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = _sq_dist(points, points[chosen]).min(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total == 0.0:
            break
        nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dist(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


def kmeans(points, k, seed=0, max_iters=300):
    """Lloyd's algorithm with k-means++ seeding.

    Runs until the assignment is a fixpoint or ``max_iters`` is reached.
    With more than one parameter dimension the coordinates are min-max
    scaled to [0, 1] first; centroids are reported in raw units.
    """
    raw = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if raw.shape[0] == 1 and np.ndim(points) == 1:
        raw = raw.T
    if raw.size == 0:
        raise ContractError("kmeans needs at least one point")
    if not np.all(np.isfinite(raw)):
        raise ContractError("parameter points must be finite")
    n_distinct = np.unique(raw, axis=0).shape[0]
    if not 1 <= k <= n_distinct:
        raise ContractError(f"k={k} must be between 1 and the {n_distinct} distinct points")
    lo = hi = None
    pts = raw
    if raw.shape[1] > 1:
        lo, hi = raw.min(axis=0), raw.max(axis=0)
        pts = _minmax(raw, lo, hi)

    rng = np.random.default_rng(seed)
    centroids = _plusplus(pts, k, rng)
    labels = np.argmin(_sq_dist(pts, centroids), axis=1)
    history = [inertia(pts, centroids, labels)]
    for _ in range(max_iters):
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = pts[members].mean(axis=0)
        labels_new = np.argmin(_sq_dist(pts, centroids), axis=1)
        labels_new = _repair_empty(pts, centroids, labels_new, k)
        history.append(inertia(pts, centroids, labels_new))
        if np.array_equal(labels_new, labels):
            break
        labels = labels_new

    raw_centroids = np.vstack([raw[labels == j].mean(axis=0) for j in range(k)])
    return Clustering(raw_centroids, labels, tuple(history), lo, hi)


def _repair_empty(pts, centroids, labels, k):
    for j in range(k):
        if np.any(labels == j):
            continue
        # steal the point worst served by its current centroid
        d2 = ((pts - centroids[labels]) ** 2).sum(axis=1)
        far = int(np.argmax(d2))
        centroids[j] = pts[far]
        labels = np.argmin(_sq_dist(pts, centroids), axis=1)
    return labels


def assign(clustering, theta):
    """Index of the nearest centroid; ties go to the lowest index."""
    theta = clustering.scaled(theta)
    cents = clustering.scaled(clustering.centroids)
    if theta.shape[1] != cents.shape[1]:
        raise ContractError("parameter dimension mismatch")
    return int(np.argmin(_sq_dist(theta, cents)[0]))
