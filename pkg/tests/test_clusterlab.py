"""Tests for the clustering algorithms, silhouette, Jacobi, and the sweep."""

import itertools

import numpy as np
import pytest

from findinglab.clusterlab import (
    ALGORITHMS,
    agglomerative_ward,
    birch,
    jacobi_eigh,
    kmeans,
    minibatch_kmeans,
    pairwise_sq_distances,
    silhouette,
    spectral,
    spectral_eigenbasis,
    sweep,
    ward_linkage,
)
from findinglab.errors import NumericError


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------


def partition_sse(X, labels):
    total = 0.0
    for c in np.unique(labels):
        pts = X[labels == c]
        total += float(np.sum((pts - pts.mean(axis=0)) ** 2))
    return total


def brute_force_min_sse(X, k):
    """Exhaustive search over all k-labelings."""
    n = X.shape[0]
    best = np.inf
    for labeling in itertools.product(range(k), repeat=n):
        best = min(best, partition_sse(X, np.array(labeling)))
    return best


def ward_oracle_merges(X):
    """Step-by-step minimum-increase merge sequence, computed from scratch."""
    clusters = {i: [i] for i in range(X.shape[0])}
    merges = []
    while len(clusters) > 1:
        best = None
        for i, j in itertools.combinations(sorted(clusters), 2):
            a, b = X[clusters[i]], X[clusters[j]]
            na, nb = len(a), len(b)
            delta = na * nb / (na + nb) * float(
                np.sum((a.mean(axis=0) - b.mean(axis=0)) ** 2)
            )
            key = (delta, i, j)
            if best is None or key < best:
                best = key
        delta, i, j = best
        merges.append((i, j, delta))
        clusters[i] = clusters[i] + clusters[j]
        del clusters[j]
    return merges


def silhouette_brute(D, labels):
    n = len(labels)
    scores = []
    for i in range(n):
        same = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not same:
            scores.append(0.0)
            continue
        a = np.mean([D[i, j] for j in same])
        b = np.inf
        for c in set(labels) - {labels[i]}:
            others = [j for j in range(n) if labels[j] == c]
            b = min(b, np.mean([D[i, j] for j in others]))
        m = max(a, b)
        scores.append(0.0 if m == 0 else (b - a) / m)
    return float(np.mean(scores))


def agreement(labels_a, labels_b, k):
    """Best label-matching agreement rate over all permutations."""
    best = 0.0
    for perm in itertools.permutations(range(k)):
        mapped = np.array([perm[c] for c in labels_a])
        best = max(best, float(np.mean(mapped == labels_b)))
    return best


def two_blobs(rng, n_per=30, dist=8.0, d=2):
    a = rng.normal(0.0, 0.4, size=(n_per, d))
    b = rng.normal(dist, 0.4, size=(n_per, d))
    return np.vstack([a, b]), np.array([0] * n_per + [1] * n_per)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------


class TestKmeans:
    def test_two_points_two_clusters(self):
        X = np.array([[0.0], [5.0]])
        a = kmeans(X, 2, seed=0)
        assert a.inertia == 0.0
        assert len(set(a.labels)) == 2

    def test_k1_inertia_is_total_sse(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((20, 3))
        a = kmeans(X, 1, seed=0)
        assert set(a.labels) == {0}
        expected = float(np.sum((X - X.mean(axis=0)) ** 2))
        assert abs(a.inertia - expected) < 1e-9

    def test_line_partition_matches_exhaustive_search(self):
        X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
        a = kmeans(X, 2, seed=3)
        assert abs(a.inertia - brute_force_min_sse(X, 2)) < 1e-9
        assert set(map(tuple, [a.labels[:3], a.labels[3:]])) == {
            (a.labels[0],) * 3,
            (a.labels[3],) * 3,
        }

    def test_k_greater_than_n_is_error(self):
        with pytest.raises(NumericError):
            kmeans(np.zeros((3, 2)), 4, seed=0)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(5)
        X = rng.standard_normal((40, 4))
        a = kmeans(X, 4, seed=11)
        b = kmeans(X, 4, seed=11)
        np.testing.assert_array_equal(a.labels, b.labels)
        assert a.inertia == b.inertia

    def test_all_points_identical_does_not_crash(self):
        X = np.ones((6, 2))
        a = kmeans(X, 2, seed=0)
        assert a.inertia == 0.0


class TestMinibatch:
    def test_degenerate_settings_match_one_lloyd_iteration(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((30, 3)) * 3
        km = kmeans(X, 3, seed=7, max_iter=1, tol=0.0, n_init=1)
        mb = minibatch_kmeans(X, 3, seed=7, batch_size=30, n_batches=1)
        np.testing.assert_allclose(mb.centers, km.centers, atol=1e-9)

    def test_k1_centroid_is_running_mean(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((25, 2))
        mb = minibatch_kmeans(X, 1, seed=1, batch_size=25, n_batches=4)
        assert set(mb.labels) == {0}
        np.testing.assert_allclose(mb.centers[0], X.mean(axis=0), atol=1e-9)

    def test_agreement_with_kmeans_on_far_blobs(self):
        rng = np.random.default_rng(4)
        X, _ = two_blobs(rng, n_per=50)
        km = kmeans(X, 2, seed=9)
        mb = minibatch_kmeans(X, 2, seed=9, batch_size=32, n_batches=200)
        assert agreement(mb.labels, km.labels, 2) >= 0.98


# ---------------------------------------------------------------------------
# Ward
# ---------------------------------------------------------------------------


class TestWard:
    def test_k_equals_n_identity(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((7, 2))
        a = agglomerative_ward(X, 7)
        assert len(set(a.labels)) == 7

    def test_k1_single_cluster(self):
        rng = np.random.default_rng(2)
        X = rng.standard_normal((9, 3))
        a = agglomerative_ward(X, 1)
        assert set(a.labels) == {0}

    def test_line_example_and_merge_order(self):
        X = np.array([[0.0], [1.0], [9.0], [10.0]])
        merges = ward_linkage(X)
        oracle = ward_oracle_merges(X)
        assert [(i, j) for i, j, _ in merges] == [(i, j) for i, j, _ in oracle]
        np.testing.assert_allclose(
            [c for _, _, c in merges], [c for _, _, c in oracle], rtol=1e-9
        )
        a = agglomerative_ward(X, 2)
        assert a.labels[0] == a.labels[1] != a.labels[2] == a.labels[3]

    def test_merge_sequence_matches_oracle_random(self):
        rng = np.random.default_rng(8)
        for _ in range(15):
            X = rng.standard_normal((6, 2))
            merges = ward_linkage(X)
            oracle = ward_oracle_merges(X)
            assert [(i, j) for i, j, _ in merges] == [(i, j) for i, j, _ in oracle]
            np.testing.assert_allclose(
                [c for _, _, c in merges], [c for _, _, c in oracle], rtol=1e-8
            )

    def test_sse_non_decreasing_as_k_decreases(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((25, 3))
        sses = [
            partition_sse(X, agglomerative_ward(X, k).labels)
            for k in range(25, 0, -1)
        ]
        assert all(b >= a - 1e-9 for a, b in zip(sses, sses[1:]))

    def test_k_greater_than_n_is_error(self):
        with pytest.raises(NumericError):
            agglomerative_ward(np.zeros((2, 2)), 3)


# ---------------------------------------------------------------------------
# BIRCH
# ---------------------------------------------------------------------------


class TestBirch:
    def test_huge_threshold_single_entry(self):
        rng = np.random.default_rng(3)
        X = rng.normal(0, 0.1, size=(12, 2))
        a = birch(X, 1, threshold=100.0)
        assert set(a.labels) == {0}
        with pytest.raises(NumericError, match="threshold"):
            birch(X, 2, threshold=100.0)

    def test_cf_additivity(self):
        # The (N, LS, SS) summary of an entry equals the sum of singleton CFs.
        from findinglab.clusterlab import _CFEntry

        rng = np.random.default_rng(4)
        pts = rng.standard_normal((8, 3))
        entry = _CFEntry(x=pts[0], idx=0)
        for i in range(1, 8):
            entry.add_point(pts[i], i)
        assert entry.n == 8
        np.testing.assert_allclose(entry.ls, pts.sum(axis=0), atol=1e-12)
        assert abs(entry.ss - float(np.sum(pts**2))) < 1e-9

    def test_blob_agreement_with_kmeans(self):
        rng = np.random.default_rng(5)
        X, _ = two_blobs(rng, n_per=30)
        b = birch(X, 2, threshold=0.5)
        km = kmeans(X, 2, seed=0)
        assert agreement(b.labels, km.labels, 2) == 1.0

    def test_branching_overflow_splits(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(-10, 10, size=(60, 2))
        a = birch(X, 3, threshold=0.1, branching_factor=4)
        assert len(set(a.labels)) == 3
        assert a.labels.shape == (60,)


# ---------------------------------------------------------------------------
# Jacobi + spectral
# ---------------------------------------------------------------------------


class TestJacobi:
    def test_diagonal_matrix_exact(self):
        vals, vecs = jacobi_eigh(np.diag([4.0, -1.0, 2.5]))
        np.testing.assert_array_equal(vals, [-1.0, 2.5, 4.0])
        np.testing.assert_array_equal(np.abs(vecs), np.eye(3)[:, [1, 2, 0]])

    def test_residuals_on_random_symmetric(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            A = rng.standard_normal((8, 8))
            A = (A + A.T) / 2
            vals, vecs = jacobi_eigh(A)
            residual = np.abs(A @ vecs - vecs * vals).max()
            assert residual <= 1e-8

    def test_2x2_closed_form(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            a, b, c = rng.standard_normal(3)
            A = np.array([[a, b], [b, c]])
            vals, _ = jacobi_eigh(A)
            mid = (a + c) / 2
            rad = np.sqrt(((a - c) / 2) ** 2 + b * b)
            np.testing.assert_allclose(vals, [mid - rad, mid + rad], atol=1e-10)

    def test_3x3_char_poly_roots(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            A = rng.standard_normal((3, 3))
            A = (A + A.T) / 2
            vals, _ = jacobi_eigh(A)
            # char poly: -l^3 + tr l^2 - m2 l + det, independent root solve
            coeffs = [
                -1.0,
                np.trace(A),
                -(
                    A[0, 0] * A[1, 1] - A[0, 1] ** 2
                    + A[0, 0] * A[2, 2] - A[0, 2] ** 2
                    + A[1, 1] * A[2, 2] - A[1, 2] ** 2
                ),
                np.linalg.det(A),
            ]
            roots = np.sort(np.roots(coeffs).real)
            np.testing.assert_allclose(vals, roots, atol=1e-8)

    def test_asymmetric_rejected(self):
        with pytest.raises(NumericError):
            jacobi_eigh(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestSpectral:
    def test_blob_partition_matches_kmeans(self):
        rng = np.random.default_rng(10)
        X, _ = two_blobs(rng, n_per=25)
        sp = spectral(X, 2, seed=3)
        km = kmeans(X, 2, seed=3)
        assert agreement(sp.labels, km.labels, 2) == 1.0

    def test_basis_reuse_equals_direct(self):
        rng = np.random.default_rng(11)
        X = rng.standard_normal((18, 3))
        basis = spectral_eigenbasis(X, 5)
        direct = spectral(X, 3, seed=5)
        reused = spectral(X, 3, seed=5, basis=basis)
        np.testing.assert_array_equal(direct.labels, reused.labels)

    def test_k_bounds(self):
        with pytest.raises(NumericError):
            spectral(np.zeros((5, 2)), 1, seed=0)


# ---------------------------------------------------------------------------
# Silhouette
# ---------------------------------------------------------------------------


class TestSilhouette:
    def test_hand_formula_two_pairs(self):
        X = np.array([[0.0], [0.1], [10.0], [10.1]])
        labels = np.array([0, 0, 1, 1])
        rep = silhouette(X, labels)
        # Hand evaluation of (b-a)/max(a,b) per point.
        expected = np.mean(
            [
                (10.05 - 0.1) / 10.05,
                (9.95 - 0.1) / 9.95,
                (9.95 - 0.1) / 9.95,
                (10.05 - 0.1) / 10.05,
            ]
        )
        assert abs(rep.mean_score - expected) < 1e-9
        assert rep.mean_score >= 0.97

    def test_singleton_scores_zero(self):
        X = np.array([[0.0], [0.2], [9.0]])
        rep = silhouette(X, np.array([0, 0, 1]))
        assert rep.s[2] == 0.0

    def test_identical_points_zero_over_zero(self):
        X = np.zeros((4, 2))
        rep = silhouette(X, np.array([0, 0, 1, 1]))
        np.testing.assert_array_equal(rep.s, np.zeros(4))
        assert rep.mean_score == 0.0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            n = int(rng.integers(6, 30))
            X = rng.standard_normal((n, 3))
            k = int(rng.integers(2, min(6, n - 1) + 1))
            labels = kmeans(X, k, seed=1).labels
            if len(set(labels)) < 2:
                continue
            D = np.sqrt(pairwise_sq_distances(X))
            assert abs(silhouette(X, labels).mean_score - silhouette_brute(D, labels)) < 1e-9

    def test_k_bounds_error(self):
        X = np.zeros((4, 1))
        with pytest.raises(NumericError):
            silhouette(X, np.array([0, 0, 0, 0]))
        with pytest.raises(NumericError):
            silhouette(X, np.array([0, 1, 2, 3]))


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------


class TestSweep:
    def test_full_grid_has_70_cells(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((20, 3))
        result = sweep(X, ALGORITHMS, range(2, 16), seed=1)
        assert len(result.cells) == 70

    def test_single_cell(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((10, 2))
        result = sweep(X, ("kmeans",), [2], seed=1)
        assert len(result.cells) == 1
        assert result.cells[0].assignment is not None

    def test_determinism_cell_by_cell(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((18, 3))
        r1 = sweep(X, ("kmeans", "minibatch", "spectral"), range(2, 6), seed=9)
        r2 = sweep(X, ("kmeans", "minibatch", "spectral"), range(2, 6), seed=9)
        for c1, c2 in zip(r1.cells, r2.cells):
            assert c1.error == c2.error
            if c1.assignment is not None:
                np.testing.assert_array_equal(c1.assignment.labels, c2.assignment.labels)

    def test_failing_cell_does_not_abort(self):
        # birch with an absorbing threshold cannot produce k=3 leaf entries
        X = np.zeros((6, 2))
        result = sweep(X, ("birch", "kmeans"), [3], seed=0)
        birch_cell = result.cell("birch", 3)
        assert birch_cell.error is not None
        assert result.cell("kmeans", 3).assignment is not None

    def test_empty_k_range_rejected(self):
        with pytest.raises(NumericError):
            sweep(np.zeros((4, 2)), ("kmeans",), [], seed=0)


class TestDuplicationProperty:
    def test_duplicate_row_gets_twin_label(self):
        rng = np.random.default_rng(16)
        X, _ = two_blobs(rng, n_per=12)
        Xdup = np.vstack([X, X[3]])
        runs = {
            "kmeans": lambda Y: kmeans(Y, 2, seed=2).labels,
            "minibatch": lambda Y: minibatch_kmeans(Y, 2, seed=2).labels,
            "ward": lambda Y: agglomerative_ward(Y, 2).labels,
            "birch": lambda Y: birch(Y, 2).labels,
            "spectral": lambda Y: spectral(Y, 2, seed=2).labels,
        }
        for name, run in runs.items():
            base = run(X)
            dup = run(Xdup)
            assert dup[-1] == dup[3], name
            assert agreement(dup[:-1], base, 2) == 1.0, name
