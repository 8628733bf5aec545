"""Five clustering algorithms, silhouette scoring, and the k-range sweep.

All algorithms are deterministic per seed, use Euclidean geometry, and
break ties by fixed rules so that runs reproduce bit-for-bit.  The
spectral path uses a cyclic Jacobi eigensolver (exact enough to test
directly); its inner loop is numba-compiled because it rotates O(n^2)
pairs per sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._util import derive_seed
from .errors import NumericError

ALGORITHMS = ("kmeans", "minibatch", "agglomerative_ward", "birch", "spectral")


@dataclass
class ClusterAssignment:
    """Per-row cluster labels plus provenance of the run that made them."""

    labels: np.ndarray
    k: int
    algorithm: str
    params: dict
    seed: int | None = None
    inertia: float | None = None
    centers: np.ndarray | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=int)
        if self.labels.ndim != 1:
            raise NumericError("labels must be a 1-D array")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.k):
            raise NumericError("labels must lie in 0..k-1")

    @property
    def occupied(self) -> np.ndarray:
        return np.unique(self.labels)


def _sq_distances(X, C):
    """Squared Euclidean distances, rows of X against rows of C."""
    d2 = (
        np.sum(X * X, axis=1)[:, None]
        + np.sum(C * C, axis=1)[None, :]
        - 2.0 * (X @ C.T)
    )
    return np.maximum(d2, 0.0)


def pairwise_sq_distances(X) -> np.ndarray:
    d2 = _sq_distances(X, X)
    np.fill_diagonal(d2, 0.0)
    return d2


def _validate_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    if X.ndim != 2 or X.shape[0] == 0:
        raise NumericError("X must be a nonempty 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise NumericError("X contains non-finite values")
    return X


# ---------------------------------------------------------------------------
# k-means and mini-batch k-means
# ---------------------------------------------------------------------------


def _kmeanspp_init(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = _sq_distances(X, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            idx = int(rng.choice(n, p=probs))
        else:
            idx = int(rng.integers(n))
        centers[j] = X[idx]
        d2 = np.minimum(d2, _sq_distances(X, centers[j : j + 1])[:, 0])
    return centers


def _lloyd(X, centers, max_iter, tol):
    n, k = X.shape[0], centers.shape[0]
    prev_inertia = np.inf
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = _sq_distances(X, centers)
        labels = np.argmin(d2, axis=1)
        # Repair empty clusters: steal the point farthest from its centroid,
        # restricted to donors whose cluster keeps at least one member.
        while True:
            present = np.bincount(labels, minlength=k)
            empties = np.flatnonzero(present == 0)
            if empties.size == 0:
                break
            j = int(empties[0])
            dist_to_own = d2[np.arange(n), labels]
            dist_to_own[present[labels] < 2] = -np.inf
            thief = int(np.argmax(dist_to_own))
            labels[thief] = j
            centers[j] = X[thief]
            d2[:, j] = _sq_distances(X, centers[j : j + 1])[:, 0]
        for j in range(k):
            centers[j] = X[labels == j].mean(axis=0)
        inertia = float(np.sum((X - centers[labels]) ** 2))
        if np.isfinite(prev_inertia):
            if inertia > prev_inertia + 1e-9 * (1.0 + prev_inertia):
                raise NumericError("k-means inertia increased between iterations")
            if prev_inertia - inertia <= tol * prev_inertia:
                prev_inertia = inertia
                break
        prev_inertia = inertia
    return labels, centers, prev_inertia


def kmeans(
    X,
    k: int,
    seed: int = 0,
    max_iter: int = 300,
    tol: float = 1e-6,
    n_init: int = 10,
) -> ClusterAssignment:
    """Lloyd k-means with k-means++ seeding and restart selection by inertia."""
    X = _validate_matrix(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise NumericError(f"k={k} must satisfy 1 <= k <= n={n}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers = _kmeanspp_init(X, k, rng)
        labels, centers, inertia = _lloyd(X, centers.copy(), max_iter, tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    labels, centers, inertia = best
    return ClusterAssignment(
        labels=labels,
        k=k,
        algorithm="kmeans",
        params={"max_iter": max_iter, "tol": tol, "n_init": n_init},
        seed=seed,
        inertia=inertia,
        centers=centers,
    )


def minibatch_kmeans(
    X,
    k: int,
    seed: int = 0,
    batch_size: int = 32,
    n_batches: int | None = None,
) -> ClusterAssignment:
    """Mini-batch k-means with per-center counts and 1/count learning rate.

    Batches are drawn without replacement within each batch; assignments
    are cached against the centers at batch start, then centers move
    sequentially.  With ``batch_size=n`` and one batch this reproduces a
    single Lloyd iteration exactly (running means).
    """
    X = _validate_matrix(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise NumericError(f"k={k} must satisfy 1 <= k <= n={n}")
    if batch_size < 1:
        raise NumericError(f"batch_size={batch_size} must be >= 1")
    if n_batches is None:
        n_batches = 100 * k
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_init(X, k, rng)
    counts = np.zeros(k, dtype=np.int64)
    size = min(batch_size, n)
    for _ in range(n_batches):
        batch = rng.permutation(n)[:size]
        assign = np.argmin(_sq_distances(X[batch], centers), axis=1)
        for row, c in zip(batch, assign):
            counts[c] += 1
            centers[c] += (X[row] - centers[c]) / counts[c]
    labels = np.argmin(_sq_distances(X, centers), axis=1)
    inertia = float(np.sum((X - centers[labels]) ** 2))
    return ClusterAssignment(
        labels=labels,
        k=k,
        algorithm="minibatch",
        params={"batch_size": batch_size, "n_batches": n_batches},
        seed=seed,
        inertia=inertia,
        centers=centers,
    )


# ---------------------------------------------------------------------------
# Ward agglomerative clustering
# ---------------------------------------------------------------------------


def ward_linkage(X) -> list[tuple[int, int, float]]:
    """Full Ward merge sequence: (cluster id, cluster id, merge cost).

    Cluster ids are the smallest original row index in each cluster; the
    merged cluster keeps the smaller id.  The cost is the increase in
    total within-cluster squared error, |A||B|/(|A|+|B|) * ||mu_A-mu_B||^2,
    maintained with the Lance-Williams recurrence.  Ties go to the
    lexicographically smallest (id, id) pair.
    """
    X = _validate_matrix(X)
    n = X.shape[0]
    D = pairwise_sq_distances(X) / 2.0
    np.fill_diagonal(D, np.inf)
    sizes = np.ones(n)
    active = np.ones(n, dtype=bool)
    merges: list[tuple[int, int, float]] = []
    for _ in range(n - 1):
        masked = np.where(active[:, None] & active[None, :], D, np.inf)
        flat = int(np.argmin(masked))  # first occurrence = smallest (i, j)
        i, j = divmod(flat, n)
        if i > j:
            i, j = j, i
        cost = float(masked[i, j])
        merges.append((i, j, cost))
        ni, nj = sizes[i], sizes[j]
        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        if others.size:
            nk = sizes[others]
            new = ((ni + nk) * D[i, others] + (nj + nk) * D[j, others] - nk * cost) / (
                ni + nj + nk
            )
            D[i, others] = new
            D[others, i] = new
        sizes[i] = ni + nj
        active[j] = False
        D[j, :] = np.inf
        D[:, j] = np.inf
    return merges


def _cut_linkage(n: int, merges, k: int) -> np.ndarray:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j, _ in merges[: n - k]:
        parent[find(j)] = find(i)
    roots = sorted({find(x) for x in range(n)})
    root_label = {r: idx for idx, r in enumerate(roots)}
    return np.array([root_label[find(x)] for x in range(n)], dtype=int)


def agglomerative_ward(X, k: int) -> ClusterAssignment:
    """Bottom-up Ward clustering cut at k clusters."""
    X = _validate_matrix(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise NumericError(f"k={k} must satisfy 1 <= k <= n={n}")
    merges = ward_linkage(X)
    labels = _cut_linkage(n, merges, k)
    return ClusterAssignment(
        labels=labels, k=k, algorithm="agglomerative_ward", params={}, seed=None
    )


# ---------------------------------------------------------------------------
# BIRCH
# ---------------------------------------------------------------------------


class _CFEntry:
    __slots__ = ("n", "ls", "ss", "child", "ids")

    def __init__(self, x=None, idx=None, child=None):
        if x is not None:
            self.n = 1
            self.ls = x.copy()
            self.ss = float(x @ x)
            self.ids = [idx]
        else:
            self.n = 0
            self.ls = None
            self.ss = 0.0
            self.ids = []
        self.child = child

    @property
    def centroid(self):
        return self.ls / self.n

    def add_point(self, x, idx):
        self.n += 1
        self.ls += x
        self.ss += float(x @ x)
        if self.child is None:
            self.ids.append(idx)

    def merged_radius(self, x) -> float:
        n = self.n + 1
        ls = self.ls + x
        ss = self.ss + float(x @ x)
        r2 = ss / n - float(ls @ ls) / (n * n)
        return float(np.sqrt(max(r2, 0.0)))

    @classmethod
    def summarizing(cls, node):
        e = cls(child=node)
        e.n = sum(c.n for c in node.entries)
        e.ls = np.sum([c.ls for c in node.entries], axis=0)
        e.ss = float(sum(c.ss for c in node.entries))
        return e


class _CFNode:
    __slots__ = ("entries", "is_leaf")

    def __init__(self, is_leaf: bool):
        self.entries: list[_CFEntry] = []
        self.is_leaf = is_leaf


def _nearest_entry(entries, x) -> int:
    cents = np.array([e.centroid for e in entries])
    return int(np.argmin(_sq_distances(x[None, :], cents)[0]))


def _split_node(node: _CFNode) -> tuple[_CFNode, _CFNode]:
    cents = np.array([e.centroid for e in node.entries])
    d2 = pairwise_sq_distances(cents)
    flat = int(np.argmax(d2))  # furthest pair; first occurrence on ties
    a, b = divmod(flat, len(node.entries))
    if a > b:
        a, b = b, a
    left, right = _CFNode(node.is_leaf), _CFNode(node.is_leaf)
    for i, e in enumerate(node.entries):
        if d2[i, a] <= d2[i, b]:
            left.entries.append(e)
        else:
            right.entries.append(e)
    return left, right


class _CFTree:
    def __init__(self, threshold: float, branching_factor: int):
        self.threshold = threshold
        self.branching = branching_factor
        self.root = _CFNode(is_leaf=True)

    def insert(self, x, idx):
        result = self._insert(self.root, x, idx)
        if result is not None:
            new_root = _CFNode(is_leaf=False)
            new_root.entries = [_CFEntry.summarizing(result[0]), _CFEntry.summarizing(result[1])]
            self.root = new_root

    def _insert(self, node, x, idx):
        if node.is_leaf:
            if node.entries:
                near = _nearest_entry(node.entries, x)
                if node.entries[near].merged_radius(x) <= self.threshold:
                    node.entries[near].add_point(x, idx)
                    return None
            node.entries.append(_CFEntry(x=x, idx=idx))
        else:
            near = _nearest_entry(node.entries, x)
            entry = node.entries[near]
            result = self._insert(entry.child, x, idx)
            if result is None:
                entry.add_point(x, idx)
                return None
            node.entries[near : near + 1] = [
                _CFEntry.summarizing(result[0]),
                _CFEntry.summarizing(result[1]),
            ]
        if len(node.entries) > self.branching:
            return _split_node(node)
        return None

    def leaf_entries(self) -> list[_CFEntry]:
        out: list[_CFEntry] = []

        def walk(node):
            if node.is_leaf:
                out.extend(node.entries)
            else:
                for e in node.entries:
                    walk(e.child)

        walk(self.root)
        return out


def birch(
    X,
    k: int,
    threshold: float = 0.5,
    branching_factor: int = 50,
) -> ClusterAssignment:
    """CF-tree clustering; leaf-entry centroids are Ward-clustered to k."""
    X = _validate_matrix(X)
    n = X.shape[0]
    if threshold <= 0:
        raise NumericError(f"threshold={threshold} must be > 0")
    if branching_factor < 2:
        raise NumericError(f"branching_factor={branching_factor} must be >= 2")
    if not 1 <= k <= n:
        raise NumericError(f"k={k} must satisfy 1 <= k <= n={n}")
    tree = _CFTree(threshold, branching_factor)
    for i in range(n):
        tree.insert(X[i], i)
    entries = tree.leaf_entries()
    if k > len(entries):
        raise NumericError(
            f"k={k} exceeds the {len(entries)} leaf entries; use a smaller threshold"
        )
    centroids = np.array([e.centroid for e in entries])
    entry_labels = agglomerative_ward(centroids, k).labels
    labels = np.empty(n, dtype=int)
    for e, lab in zip(entries, entry_labels):
        labels[e.ids] = lab
    return ClusterAssignment(
        labels=labels,
        k=k,
        algorithm="birch",
        params={"threshold": threshold, "branching_factor": branching_factor},
        seed=None,
    )


# ---------------------------------------------------------------------------
# Jacobi eigensolver and spectral clustering
# ---------------------------------------------------------------------------


@njit(cache=True)
def _jacobi_sweeps(A, V, tol, max_sweeps):  # pragma: no cover - compiled
    n = A.shape[0]
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += A[i, j] * A[i, j]
    fro = np.sqrt(fro)
    if fro == 0.0:
        return 0
    sweeps = 0
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += A[i, j] * A[i, j]
        off = np.sqrt(2.0 * off)
        if off <= tol * fro:
            break
        sweeps += 1
        skip = tol * fro / (2.0 * n)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= skip:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for i in range(n):
                    aip = A[i, p]
                    aiq = A[i, q]
                    A[i, p] = c * aip - s * aiq
                    A[i, q] = s * aip + c * aiq
                for i in range(n):
                    api = A[p, i]
                    aqi = A[q, i]
                    A[p, i] = c * api - s * aqi
                    A[q, i] = s * api + c * aqi
                A[p, q] = 0.0
                A[q, p] = 0.0
                for i in range(n):
                    vip = V[i, p]
                    viq = V[i, q]
                    V[i, p] = c * vip - s * viq
                    V[i, q] = s * vip + c * viq
    return sweeps


def jacobi_eigh(A, tol: float = 1e-10, max_sweeps: int = 60):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvector columns).  Sweeps stop
    when the off-diagonal Frobenius norm falls below ``tol`` times the
    initial Frobenius norm.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise NumericError("jacobi_eigh needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise NumericError("jacobi_eigh: non-finite input")
    if not np.allclose(A, A.T, atol=1e-8 * (1.0 + float(np.abs(A).max()))):
        raise NumericError("jacobi_eigh: input is not symmetric")
    work = np.ascontiguousarray((A + A.T) / 2.0)
    V = np.eye(A.shape[0])
    _jacobi_sweeps(work, V, float(tol), int(max_sweeps))
    vals = np.diag(work).copy()
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def spectral_eigenbasis(X, k_max: int):
    """Smallest-eigenvalue basis of the normalized Laplacian of X's affinity.

    Shared by every spectral sweep cell: the decomposition does not
    depend on k or the seed.
    """
    X = _validate_matrix(X)
    n = X.shape[0]
    if not 1 <= k_max <= n:
        raise NumericError(f"k_max={k_max} must satisfy 1 <= k_max <= n={n}")
    d2 = pairwise_sq_distances(X)
    dist = np.sqrt(d2)
    iu = np.triu_indices(n, k=1)
    sigma = float(np.median(dist[iu])) if iu[0].size else 1.0
    if sigma <= 0.0:
        sigma = 1.0
    W = np.exp(-d2 / (2.0 * sigma * sigma))
    np.fill_diagonal(W, 0.0)
    degrees = W.sum(axis=1)
    if np.any(degrees == 0.0):
        raise NumericError(
            "spectral: a point has zero affinity to every other point"
        )
    inv_sqrt = 1.0 / np.sqrt(degrees)
    L = np.eye(n) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    vals, vecs = jacobi_eigh(L)
    return vals[:k_max], vecs[:, :k_max]


def spectral(X, k: int, seed: int = 0, basis=None) -> ClusterAssignment:
    """Normalized-cut spectral clustering: Laplacian rows -> k-means."""
    X = _validate_matrix(X)
    n = X.shape[0]
    if not 2 <= k <= n:
        raise NumericError(f"k={k} must satisfy 2 <= k <= n={n}")
    if basis is None:
        _, vecs = spectral_eigenbasis(X, k)
    else:
        _, vecs = basis
        if vecs.shape[1] < k:
            raise NumericError("provided eigenbasis has fewer than k columns")
    U = vecs[:, :k].copy()
    norms = np.linalg.norm(U, axis=1)
    nonzero = norms > 0
    U[nonzero] /= norms[nonzero, None]
    inner = kmeans(U, k, seed=seed)
    return ClusterAssignment(
        labels=inner.labels,
        k=k,
        algorithm="spectral",
        params={"embedding": "normalized_laplacian"},
        seed=seed,
        inertia=inner.inertia,
    )


# ---------------------------------------------------------------------------
# Silhouette
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SilhouetteReport:
    """Per-point cohesion/separation scores and their mean."""

    a: np.ndarray
    b: np.ndarray
    s: np.ndarray
    mean_score: float


def silhouette(X, labels, distances=None) -> SilhouetteReport:
    """Silhouette scores with Euclidean distances.

    Singleton-cluster points score 0; 0/0 (coincident points) scores 0.
    """
    labels = np.asarray(labels, dtype=int)
    n = labels.shape[0]
    clusters, inverse = np.unique(labels, return_inverse=True)
    k = clusters.size
    if not 2 <= k <= n - 1:
        raise NumericError(f"silhouette needs 2 <= k <= n-1, got k={k}, n={n}")
    if distances is None:
        X = _validate_matrix(X)
        if X.shape[0] != n:
            raise NumericError("labels length must match dataset rows")
        distances = np.sqrt(pairwise_sq_distances(X))
    member = np.zeros((n, k))
    member[np.arange(n), inverse] = 1.0
    counts = member.sum(axis=0)
    sums = distances @ member
    a = np.zeros(n)
    own = counts[inverse]
    multi = own > 1
    a[multi] = sums[np.arange(n), inverse][multi] / (own[multi] - 1.0)
    means_other = sums / counts[None, :]
    means_other[np.arange(n), inverse] = np.inf
    b = means_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.zeros(n)
    ok = (denom > 0) & multi
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return SilhouetteReport(a=a, b=b, s=s, mean_score=float(s.mean()))


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepCell:
    """One (algorithm, k) run within a sweep."""

    algorithm: str
    k: int
    assignment: ClusterAssignment | None = None
    silhouette_mean: float | None = None
    error: str | None = None
    majority_accuracy: float | None = None
    share_accuracy: float | None = None


@dataclass
class SweepResult:
    algorithms: tuple[str, ...]
    k_range: tuple[int, ...]
    seed: int
    cells: list[SweepCell] = field(default_factory=list)

    def cell(self, algorithm: str, k: int) -> SweepCell:
        for c in self.cells:
            if c.algorithm == algorithm and c.k == k:
                return c
        raise KeyError((algorithm, k))


def _run_algorithm(name, X, k, sub_seed, ward_merges, spectral_basis):
    if name == "kmeans":
        return kmeans(X, k, seed=sub_seed)
    if name == "minibatch":
        return minibatch_kmeans(X, k, seed=sub_seed)
    if name == "agglomerative_ward":
        labels = _cut_linkage(X.shape[0], ward_merges, k)
        return ClusterAssignment(
            labels=labels, k=k, algorithm="agglomerative_ward", params={}, seed=None
        )
    if name == "birch":
        return birch(X, k)
    if name == "spectral":
        return spectral(X, k, seed=sub_seed, basis=spectral_basis)
    raise NumericError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")


def sweep(X, algorithms=ALGORITHMS, k_range=range(2, 16), seed: int = 0) -> SweepResult:
    """Run every (algorithm, k) cell with an order-independent sub-seed.

    Cell failures are recorded in the cell, never raised; expensive
    shared work (Ward linkage, spectral eigenbasis, pairwise distances)
    is computed once per sweep.
    """
    X = _validate_matrix(X)
    algorithms = tuple(algorithms)
    k_values = tuple(int(k) for k in k_range)
    if not k_values:
        raise NumericError("k_range must be nonempty")
    if max(k_values) > X.shape[0]:
        raise NumericError(f"max k={max(k_values)} exceeds n={X.shape[0]}")
    for name in algorithms:
        if name not in ALGORITHMS:
            raise NumericError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")

    ward_merges = ward_linkage(X) if "agglomerative_ward" in algorithms else None
    spectral_basis = None
    if "spectral" in algorithms:
        try:
            spectral_basis = spectral_eigenbasis(X, max(k_values))
        except NumericError:
            spectral_basis = None  # per-cell runs will record the error
    distances = np.sqrt(pairwise_sq_distances(X))

    result = SweepResult(algorithms=algorithms, k_range=k_values, seed=seed)
    for name in algorithms:
        for k in k_values:
            cell = SweepCell(algorithm=name, k=k)
            sub_seed = derive_seed(seed, name, k)
            try:
                cell.assignment = _run_algorithm(
                    name, X, k, sub_seed, ward_merges, spectral_basis
                )
            except NumericError as exc:
                cell.error = str(exc)
                result.cells.append(cell)
                continue
            try:
                cell.silhouette_mean = silhouette(
                    X, cell.assignment.labels, distances=distances
                ).mean_score
            except NumericError as exc:
                cell.error = f"silhouette: {exc}"
            result.cells.append(cell)
    return result
