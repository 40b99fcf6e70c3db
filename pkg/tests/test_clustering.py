import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clstm_rom import clustering
from clstm_rom.linalg import ContractError

from oracles import best_partition_inertia, nearest_scan


def test_singletons_for_k_equal_n():
    c = clustering.kmeans(np.arange(1.0, 11.0), 10, seed=0)
    assert sorted(c.centroids[:, 0]) == list(np.arange(1.0, 11.0))
    assert len(set(c.assignment.tolist())) == 10
    assert c.inertia_history[-1] == 0.0


def test_single_cluster_is_the_mean():
    c = clustering.kmeans([1.0, 2.0, 3.0, 4.0, 5.0], 1)
    assert c.centroids[0, 0] == 3.0


def test_blobs_match_brute_force_on_subsample():
    rng = np.random.default_rng(0)
    centers = np.array([[0.0, 0.0], [5.0, 5.0], [0.0, 8.0]])
    pts = np.vstack([c + 0.4 * rng.standard_normal((20, 2)) for c in centers])
    sub = pts[rng.choice(60, 12, replace=False)]
    c = clustering.kmeans(sub, 3, seed=1)
    got = clustering.inertia(c.scaled(sub), c.scaled(c.centroids), c.assignment)
    # brute force in the same (min-max scaled) coordinates
    scaled = c.scaled(sub)
    assert got == pytest.approx(best_partition_inertia(scaled, 3), rel=1e-10)


def test_errors():
    with pytest.raises(ContractError):
        clustering.kmeans([1.0, 1.0, 2.0], 3)
    with pytest.raises(ContractError):
        clustering.kmeans(np.zeros((0, 1)), 1)
    with pytest.raises(ContractError):
        clustering.kmeans([1.0, np.nan], 1)


def test_assign_examples():
    c = clustering.Clustering(np.array([[1.0], [2.0]]), np.array([0, 1]))
    assert clustering.assign(c, 1.5) == 0
    assert clustering.assign(c, 2.0) == 1
    assert clustering.assign(c, 1.0) == 0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 25), p=st.integers(1, 3), k=st.integers(1, 3), seed=st.integers(0, 10_000))
def test_kmeans_invariants(n, p, k, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-3, 3, (n, p))
    c = clustering.kmeans(pts, k, seed=seed)
    hist = np.array(c.inertia_history)
    assert np.all(np.diff(hist) <= 1e-12 * max(1.0, hist[0]))
    assert len(np.unique(c.assignment)) == k
    # nearest centroid (scaled coordinates), lowest-index ties
    for i, x in enumerate(pts):
        assert c.assignment[i] == clustering.assign(c, x)
    # one more Lloyd step changes nothing
    for j in range(k):
        assert np.allclose(c.centroids[j], pts[c.assignment == j].mean(axis=0))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_assign_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    c = clustering.Clustering(rng.uniform(0, 1, (5, 1)), np.arange(5))
    theta = rng.uniform(0, 1)
    assert clustering.assign(c, theta) == nearest_scan(c.centroids, theta)


def test_deterministic_given_seed():
    pts = np.random.default_rng(3).uniform(0, 1, (30, 2))
    a = clustering.kmeans(pts, 4, seed=7)
    b = clustering.kmeans(pts, 4, seed=7)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignment, b.assignment)


def test_empty_cluster_repair_keeps_k_clusters():
    # duplicated points make k-means++ pick coincident seeds only if repair fails
    pts = np.array([[0.0], [0.0], [0.0], [10.0], [10.0], [20.0]])
    c = clustering.kmeans(pts, 3, seed=0)
    assert len(np.unique(c.assignment)) == 3
