"""K-Means, Ward agglomerative clustering and DBSCAN with Euclidean distance.

All three return a :class:`ClusterResult` whose clusters are numbered in
ascending order of their first member row, so results are comparable
across runs and algorithms.  DBSCAN noise rows carry the label ``NOISE``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData, InvalidParams, KTooLarge

NOISE = -1

THREADS_ENV = "AIRSHED_THREADS"


def thread_count() -> int:
    """Worker cap from ``AIRSHED_THREADS`` (default 1)."""
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class ClusterResult:
    labels: np.ndarray
    centers: np.ndarray
    k: int
    algorithm: str
    iterations: int = 0
    merge_history: tuple = ()
    distortion_history: tuple = field(default=(), repr=False)

    @property
    def noise_mask(self) -> np.ndarray:
        return self.labels == NOISE

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)


def _as_matrix(data) -> np.ndarray:
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidParams("data must be a non-empty n x d matrix")
    if not np.all(np.isfinite(x)):
        raise InvalidParams("data contains NaN or infinite values")
    return x


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # explicit differences rather than the Gram trick: exact zeros and no BLAS
    diff = x[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    return np.sqrt(_sq_dists(x, x))


def canonical_relabel(labels: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Renumber clusters by first appearance; NOISE is kept.

    Returns the new labels and ``order`` with ``order[new] = old``.
    """
    order: list[int] = []
    seen: dict[int, int] = {}
    out = np.full(labels.shape, NOISE, dtype=np.int64)
    for i, lab in enumerate(labels):
        lab = int(lab)
        if lab == NOISE:
            continue
        if lab not in seen:
            seen[lab] = len(order)
            order.append(lab)
        out[i] = seen[lab]
    return out, order


def cluster_means(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    centers = np.zeros((k, x.shape[1]))
    for c in range(k):
        centers[c] = x[labels == c].mean(axis=0)
    return centers


def _sse(x: np.ndarray, labels: np.ndarray, centers: np.ndarray) -> float:
    diff = x - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


# ---------------------------------------------------------------------------
# K-Means


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(x, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        target = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(closest), target, side="right"))
        idx = min(idx, n - 1)
        while closest[idx] == 0.0:
            # only reachable through rounding at the top of the cumsum
            idx -= 1
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(x, x[idx : idx + 1])[:, 0])
    return x[chosen].copy()


def _assign(x: np.ndarray, centers: np.ndarray, threads: int) -> tuple[np.ndarray, np.ndarray]:
    """Nearest center per row (lowest index on ties) and the squared distance to it."""
    if threads <= 1 or len(x) < 2 * threads:
        d = _sq_dists(x, centers)
        labels = np.argmin(d, axis=1)
        return labels, d[np.arange(len(x)), labels]
    chunks = np.array_split(np.arange(len(x)), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda rows: _assign(x[rows], centers, 1), chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _fill_empty(x, labels, centers, k):
    """Move the row farthest from its own center into each empty cluster."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        own = np.einsum("ij,ij->i", x - centers[labels], x - centers[labels])
        own[counts[labels] <= 1] = -1.0
        far = int(np.argmax(own))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
        centers[c] = x[far]
    return labels


def kmeans(data, k: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> ClusterResult:
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops when no label changes, when no center moves by ``tol`` or more,
    or after ``max_iter`` center updates.  ``distortion_history`` holds the
    mean squared distance to the centers after every update.
    """
    x = _as_matrix(data)
    n = len(x)
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} must lie in [1, {n}]")
    if max_iter < 1 or tol < 0:
        raise InvalidParams("max_iter must be >= 1 and tol >= 0")
    if len(np.unique(x, axis=0)) < k:
        raise DegenerateData(f"fewer than {k} distinct points")

    threads = thread_count()
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    centers = _kmeans_pp(x, k, rng)
    labels, _ = _assign(x, centers, threads)
    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        labels = _fill_empty(x, labels, centers, k)
        new_centers = cluster_means(x, labels, k)
        history.append(_sse(x, labels, new_centers) / n)
        shift = np.sqrt(np.max(np.sum((new_centers - centers) ** 2, axis=1)))
        centers = new_centers
        if shift < tol or iterations == max_iter:
            break
        new_labels, _ = _assign(x, centers, threads)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels

    labels, order = canonical_relabel(labels)
    return ClusterResult(
        labels=labels,
        centers=centers[order],
        k=k,
        algorithm="kmeans",
        iterations=iterations,
        distortion_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# Ward


@dataclass(frozen=True)
class ClusterSummary:
    """Size, mean and within-cluster sum of squares of a point set."""

    size: int
    mean: np.ndarray
    sse: float = 0.0

    @classmethod
    def of(cls, points) -> "ClusterSummary":
        pts = _as_matrix(points)
        mean = pts.mean(axis=0)
        return cls(len(pts), mean, float(np.sum((pts - mean) ** 2)))


def ward_merge_cost(a: ClusterSummary, b: ClusterSummary) -> float:
    """Increase in total within-cluster sum of squares caused by merging ``a`` and ``b``."""
    diff = np.asarray(a.mean, dtype=np.float64) - np.asarray(b.mean, dtype=np.float64)
    return a.size * b.size / (a.size + b.size) * float(np.dot(diff, diff))


def ward(data, k: int) -> ClusterResult:
    """Greedy Ward agglomeration from singletons down to ``k`` clusters.

    A cluster is identified by its smallest row index.  Each step merges the
    pair with the lowest cost, ties going to the lexicographically smallest
    pair of identifiers; costs are kept current with Lance-Williams updates.
    ``merge_history`` lists ``(id_a, id_b, cost)`` per merge.
    """
    x = _as_matrix(data)
    n = len(x)
    if not 1 <= k <= n:
        raise KTooLarge(f"k={k} must lie in [1, {n}]")

    cost = 0.5 * _sq_dists(x, x)
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    cost[~upper] = np.inf
    size = np.ones(n)
    owner = np.arange(n)
    active = np.ones(n, dtype=bool)
    history = []

    for _ in range(n - k):
        flat = int(np.argmin(cost))
        i, j = divmod(flat, n)
        delta = float(cost[i, j])
        history.append((i, j, delta))

        # Lance-Williams: cost(i+j, m) from cost(i, m), cost(j, m), cost(i, j)
        others = np.flatnonzero(active)
        others = others[(others != i) & (others != j)]
        if len(others):
            ci = np.where(others < i, cost[others, i], cost[i, others])
            cj = np.where(others < j, cost[others, j], cost[j, others])
            sm = size[others]
            total = size[i] + size[j] + sm
            merged = ((size[i] + sm) * ci + (size[j] + sm) * cj - sm * delta) / total
            lo = others < i
            cost[others[lo], i] = merged[lo]
            cost[i, others[~lo]] = merged[~lo]
        cost[j, :] = np.inf
        cost[:, j] = np.inf
        size[i] += size[j]
        active[j] = False
        owner[owner == j] = i

    labels, order = canonical_relabel(owner)
    return ClusterResult(
        labels=labels,
        centers=cluster_means(x, labels, k),
        k=k,
        algorithm="ward",
        merge_history=tuple(history),
    )


# ---------------------------------------------------------------------------
# DBSCAN


def dbscan(data, eps: float = 1.7, min_pts: int = 3) -> ClusterResult:
    """Density-based clustering with a closed ``eps`` ball that counts the point itself.

    Core points within ``eps`` of each other share a cluster.  A border
    point (non-core, within ``eps`` of some core point) joins the cluster of
    its nearest core neighbour, lowest row index on ties, which keeps the
    result independent of row order.  Clusters are numbered by their
    lowest core row.
    """
    x = _as_matrix(data)
    if not (np.isfinite(eps) and eps > 0) or int(min_pts) != min_pts or min_pts < 1:
        raise InvalidParams(f"need eps > 0 and integer min_pts >= 1, got eps={eps}, min_pts={min_pts}")
    n = len(x)
    dist = pairwise_distances(x)
    near = dist <= eps
    core = near.sum(axis=1) >= min_pts

    labels = np.full(n, NOISE, dtype=np.int64)
    next_id = 0
    for start in np.flatnonzero(core):
        if labels[start] != NOISE:
            continue
        labels[start] = next_id
        frontier = [start]
        while frontier:
            p = frontier.pop()
            for q in np.flatnonzero(near[p] & core & (labels == NOISE)):
                labels[q] = next_id
                frontier.append(q)
        next_id += 1

    core_idx = np.flatnonzero(core)
    if len(core_idx):
        for p in np.flatnonzero(~core):
            d = np.where(near[p, core_idx], dist[p, core_idx], np.inf)
            best = int(np.argmin(d))
            if np.isfinite(d[best]):
                labels[p] = labels[core_idx[best]]

    k = next_id
    centers = cluster_means(x, labels, k) if k else np.zeros((0, x.shape[1]))
    return ClusterResult(labels=labels, centers=centers, k=k, algorithm="dbscan")
