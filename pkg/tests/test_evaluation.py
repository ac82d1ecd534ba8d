import numpy as np
import pytest
from scipy.special import logsumexp
from scipy.stats import ortho_group
from sklearn.metrics import (
    calinski_harabasz_score,
    davies_bouldin_score,
    silhouette_score,
)

from graphcl import evaluation as ev


def two_far_clusters():
    e = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
    labels = np.array([0, 0, 1, 1])
    return e, labels


# -- linear probe -------------------------------------------------------------

def blobs(n_per=60, sep=8.0, dim=5, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n_per, dim))
    b = rng.normal(size=(n_per, dim))
    b[:, 0] += sep
    x = np.vstack([a, b])
    y = np.repeat([0, 1], n_per)
    perm = rng.permutation(2 * n_per)
    return x[perm], y[perm]


def ratio_splits(n):
    idx = np.arange(n)
    return idx[: n // 10], idx[n // 10: n // 5], idx[n // 5:]


def test_probe_separable_blobs_perfect():
    x, y = blobs()
    n = len(y)
    splits = (np.arange(n // 2), np.arange(n // 2, 3 * n // 4),
              np.arange(3 * n // 4, n))
    cfg = ev.ProbeConfig(lr2=0.2, wd2=0.0, probe_epochs=500, patience=500)
    acc, _ = ev.linear_probe(x, y, splits, cfg)
    assert acc == 1.0


def test_probe_shuffled_labels_chance_level():
    rng = np.random.default_rng(1)
    x, _ = blobs(n_per=150, seed=1)
    k = 3
    y = rng.integers(0, k, size=len(x))
    train, val, test = ratio_splits(len(y))
    acc, _ = ev.linear_probe(x, y, (train, val, test), seed=1)
    n_test = len(test)
    sigma = np.sqrt((1 / k) * (1 - 1 / k) / n_test)
    assert abs(acc - 1 / k) < 4 * sigma


def test_probe_rejects_empty_embeddings():
    with pytest.raises(ev.DegenerateError):
        ev.linear_probe(np.zeros((10, 0)), np.zeros(10, dtype=int),
                        (np.arange(5), np.array([5]), np.arange(6, 10)))


def test_probe_rejects_single_class_train():
    x, y = blobs()
    y_one = np.zeros_like(y)
    with pytest.raises(ev.DegenerateError):
        ev.linear_probe(x, y_one, ratio_splits(len(y)))


def test_probe_deterministic():
    x, y = blobs(sep=2.0, seed=3)
    splits = ratio_splits(len(y))
    a1, w1 = ev.linear_probe(x, y, splits, seed=5)
    a2, w2 = ev.linear_probe(x, y, splits, seed=5)
    assert a1 == a2
    np.testing.assert_array_equal(w1[0], w2[0])


# -- alignment / uniformity ---------------------------------------------------

def sphere_rows(n, d, seed=0):
    x = np.random.default_rng(seed).normal(size=(n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_alignment_identical_views():
    u = sphere_rows(10, 3)
    assert ev.alignment(u, u.copy()) == 0.0


def test_alignment_antipodal():
    u = sphere_rows(6, 4, seed=1)
    assert ev.alignment(u, -u) == pytest.approx(4.0, abs=1e-12)


def test_alignment_matches_direct_oracle():
    u = sphere_rows(20, 5, seed=2)
    v = sphere_rows(20, 5, seed=3)
    alpha = 2.7
    oracle = np.mean([np.linalg.norm(u[i] - v[i]) ** alpha for i in range(20)])
    assert abs(ev.alignment(u, v, alpha) - oracle) < 1e-12


def test_uniformity_identical_rows_is_zero():
    e = np.tile(sphere_rows(1, 3), (8, 1))
    assert ev.uniformity(e) == pytest.approx(0.0, abs=1e-12)


def test_uniformity_two_antipodal_points():
    e = np.array([[1.0, 0.0], [-1.0, 0.0]])
    assert ev.uniformity(e, t=2) == pytest.approx(-8.0, abs=1e-12)


def test_uniformity_matches_double_loop_oracle():
    e = sphere_rows(50, 3, seed=4)
    vals = [
        -2.0 * np.sum((e[i] - e[j]) ** 2)
        for i in range(50) for j in range(50) if i != j
    ]
    oracle = logsumexp(vals) - np.log(len(vals))
    assert abs(ev.uniformity(e, t=2) - oracle) < 1e-12


def test_uniformity_needs_two_rows():
    with pytest.raises(ev.DegenerateError):
        ev.uniformity(np.ones((1, 3)))


def test_rotation_invariance_of_pair_metrics():
    u = sphere_rows(15, 4, seed=5)
    v = sphere_rows(15, 4, seed=6)
    q = ortho_group.rvs(4, random_state=7)
    assert abs(ev.alignment(u, v) - ev.alignment(u @ q, v @ q)) < 1e-10
    assert abs(ev.uniformity(u) - ev.uniformity(u @ q)) < 1e-10


def test_uniformity_permutation_invariance():
    u = sphere_rows(12, 3, seed=8)
    perm = np.random.default_rng(9).permutation(12)
    assert abs(ev.uniformity(u) - ev.uniformity(u[perm])) < 1e-12


# -- clustering scores --------------------------------------------------------

def test_silhouette_hand_example():
    e, labels = two_far_clusters()
    expected = 1.0 - 1.0 / ((10 + np.sqrt(101)) / 2)
    assert ev.silhouette(e, labels) == pytest.approx(expected, abs=1e-3)
    assert ev.silhouette(e, labels) == pytest.approx(0.900, abs=1e-3)


def test_silhouette_singleton_clusters():
    e = np.array([[0.0, 0.0], [5.0, 5.0]])
    assert ev.silhouette(e, np.array([0, 1])) == 0.0


def test_silhouette_all_identical_points():
    e = np.zeros((6, 2))
    labels = np.array([0, 0, 0, 1, 1, 1])
    assert ev.silhouette(e, labels) == 0.0


def test_silhouette_one_class_error():
    with pytest.raises(ev.DegenerateError):
        ev.silhouette(np.ones((4, 2)), np.zeros(4, dtype=int))


def test_davies_bouldin_hand_example():
    e, labels = two_far_clusters()
    assert ev.davies_bouldin(e, labels) == pytest.approx(0.1, abs=1e-12)


def test_davies_bouldin_tight_clusters_zero():
    e = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
    assert ev.davies_bouldin(e, np.array([0, 0, 1, 1])) == 0.0


def test_davies_bouldin_coincident_centroids_error():
    e = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, -1.0]])
    labels = np.array([0, 0, 1, 1])  # both centroids at (1, 0)
    with pytest.raises(ev.DegenerateError):
        ev.davies_bouldin(e, labels)


def test_calinski_harabasz_hand_example():
    e, labels = two_far_clusters()
    assert ev.calinski_harabasz(e, labels) == pytest.approx(200.0, abs=1e-9)


def test_calinski_harabasz_zero_within_error():
    e = np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0], [5.0, 5.0]])
    with pytest.raises(ev.DegenerateError):
        ev.calinski_harabasz(e, np.array([0, 0, 1, 1]))


@pytest.mark.parametrize("seed", range(3))
def test_clustering_scores_match_sklearn(seed):
    rng = np.random.default_rng(seed)
    e = rng.normal(size=(80, 4))
    labels = rng.integers(0, 4, size=80)
    # ensure every class appears at least twice
    labels[:8] = np.repeat(np.arange(4), 2)
    assert abs(ev.silhouette(e, labels) - silhouette_score(e, labels)) < 1e-10
    assert abs(ev.davies_bouldin(e, labels) - davies_bouldin_score(e, labels)) < 1e-10
    assert abs(ev.calinski_harabasz(e, labels) - calinski_harabasz_score(e, labels)) < 1e-10


def test_metrics_report_csv_row():
    rep = ev.MetricsReport(
        dataset="sbm", method="bn", dim=8, seed=3,
        accuracy=0.95, align=0.1, unif=-3.2, sc=0.4, db=1.1, ch=50.0,
        seconds=1.25,
    )
    row = rep.csv_row()
    assert row.split(",")[0] == "sbm"
    assert len(row.split(",")) == len(ev.CSV_HEADER.split(","))
    rep.accuracy = None
    assert rep.csv_row().split(",")[4] == ""
