"""Choosing the number of clusters: distortion, silhouette, K sweeps and elbow detection."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import NOISE, ClusterResult, _as_matrix, kmeans, pairwise_distances
from .errors import AllNoise, KTooLarge, SingleCluster, TooFewPoints

DEFAULT_KS = tuple(range(2, 16))

# a normalized chord gap below this means the curve has no distinct bend
ELBOW_MIN_GAP = 0.01
# gaps closer than this count as tied (smaller k wins)
ELBOW_TIE = 1e-9
# how far below the best silhouette the distortion elbow may fall and still be kept
SILHOUETTE_SLACK = 0.02


@dataclass(frozen=True)
class ElbowCurve:
    ks: tuple
    scores: tuple
    metric: str
    elbow_k: int | None = None

    def __post_init__(self):
        ks = tuple(int(k) for k in self.ks)
        scores = tuple(float(s) for s in self.scores)
        if len(ks) != len(scores):
            raise ValueError("ks and scores differ in length")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("ks must be strictly increasing")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "scores", scores)

    def score_at(self, k: int) -> float:
        return self.scores[self.ks.index(k)]


@dataclass(frozen=True, eq=False)
class SilhouetteReport:
    """Silhouette values.

    ``per_point`` is aligned with the data rows; NOISE rows hold NaN and are
    left out of ``mean`` and ``per_cluster``.
    """

    per_point: np.ndarray
    per_cluster: tuple
    mean: float


def distortion_score(data, result: ClusterResult) -> float:
    """Mean squared distance from each non-noise row to its cluster center."""
    x = _as_matrix(data)
    keep = result.labels != NOISE
    if not keep.any():
        raise AllNoise("every row is noise")
    diff = x[keep] - result.centers[result.labels[keep]]
    return float(np.einsum("ij,ij->", diff, diff) / keep.sum())


def silhouette(data, result: ClusterResult) -> SilhouetteReport:
    """Per-row silhouette ``(b - a) / max(a, b)``; rows in singleton clusters score 0."""
    x = _as_matrix(data)
    labels = np.asarray(result.labels)
    if len(labels) != len(x):
        raise ValueError("labels do not cover the data")
    keep = np.flatnonzero(labels != NOISE)
    clusters = np.unique(labels[keep])
    if len(clusters) < 2:
        raise SingleCluster("silhouette needs at least two clusters")

    lab = labels[keep]
    dist = pairwise_distances(x[keep])
    onehot = lab[:, None] == clusters[None, :]
    counts = onehot.sum(axis=0)
    sums = dist @ onehot  # rows x clusters, sum of distances to each cluster
    own = np.searchsorted(clusters, lab)
    own_count = counts[own]
    rows = np.arange(len(lab))
    a = np.where(own_count > 1, sums[rows, own] / np.maximum(own_count - 1, 1), 0.0)
    mean_to = sums / counts[None, :]
    mean_to[rows, own] = np.inf
    b = mean_to.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_count > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)

    per_point = np.full(len(labels), np.nan)
    per_point[keep] = s
    per_cluster = tuple(np.sort(s[lab == c]) for c in clusters)
    return SilhouetteReport(per_point, per_cluster, float(s.mean()))


def silhouette_score(data, result: ClusterResult) -> float:
    return silhouette(data, result).mean


def find_elbow(curve: ElbowCurve | Sequence[float], ks: Sequence[int] | None = None) -> int | None:
    """Knee of a decreasing cost curve.

    Both axes are scaled to [0, 1]; the knee is the k where the curve falls
    furthest below the chord joining its end points.  Returns ``None`` when
    that gap is under ``ELBOW_MIN_GAP``.  Gaps within ``ELBOW_TIE`` of the
    largest are treated as equal and the smallest such k is returned.
    """
    if isinstance(curve, ElbowCurve):
        ks, scores = curve.ks, curve.scores
    else:
        scores = tuple(curve)
        ks = tuple(ks) if ks is not None else tuple(range(len(scores)))
    if len(scores) < 3 or len(ks) != len(scores):
        raise TooFewPoints("elbow detection needs at least 3 points")
    kx = np.asarray(ks, dtype=np.float64)
    y = np.asarray(scores, dtype=np.float64)
    span = y.max() - y.min()
    if span == 0:
        return None
    xn = (kx - kx[0]) / (kx[-1] - kx[0])
    yn = (y - y.min()) / span
    chord = yn[0] + (yn[-1] - yn[0]) * xn
    gap = chord - yn
    best = int(np.flatnonzero(gap >= gap.max() - ELBOW_TIE)[0])
    if gap[best] < ELBOW_MIN_GAP:
        return None
    return int(ks[best])


def best_k(curve: ElbowCurve) -> int:
    """Argmax of the scores, smallest k on ties."""
    return curve.ks[int(np.argmax(curve.scores))]


def _fit_sweep(x, ks, seed):
    if max(ks) > len(x):
        raise KTooLarge(f"max k {max(ks)} exceeds the {len(x)} rows")
    return {k: kmeans(x, k, seed=seed ^ k) for k in ks}


def sweep(data, ks: Sequence[int] = DEFAULT_KS, metric: str = "distortion", seed: int = 0) -> ElbowCurve:
    """Fit K-Means for every k (seed ``seed ^ k``) and score each fit.

    For distortion ``elbow_k`` is the knee; for silhouette it is the argmax.
    """
    x = _as_matrix(data)
    ks = tuple(ks)
    fits = _fit_sweep(x, ks, seed)
    return _curve(x, ks, fits, metric)


def sweep_both(data, ks: Sequence[int] = DEFAULT_KS, seed: int = 0) -> tuple[ElbowCurve, ElbowCurve]:
    """Distortion and silhouette curves from one set of K-Means fits."""
    x = _as_matrix(data)
    ks = tuple(ks)
    fits = _fit_sweep(x, ks, seed)
    return _curve(x, ks, fits, "distortion"), _curve(x, ks, fits, "silhouette")


def _curve(x, ks, fits, metric):
    if metric == "distortion":
        scores = [distortion_score(x, fits[k]) for k in ks]
        curve = ElbowCurve(ks, scores, metric)
        if len(ks) < 3:
            return curve
        return ElbowCurve(ks, scores, metric, find_elbow(curve))
    if metric == "silhouette":
        scores = [silhouette(x, fits[k]).mean for k in ks]
        curve = ElbowCurve(ks, scores, metric)
        return ElbowCurve(ks, scores, metric, best_k(curve))
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class KChoice:
    k: int
    elbow_k: int | None
    silhouette_k: int
    reason: str


def choose_k(distortion: ElbowCurve, silhouettes: ElbowCurve, slack: float = SILHOUETTE_SLACK) -> KChoice:
    """Keep the distortion elbow unless its silhouette trails the best by more than ``slack``."""
    sil_k = best_k(silhouettes)
    elbow = distortion.elbow_k
    if elbow is None:
        return KChoice(sil_k, None, sil_k, "no distortion elbow; using silhouette maximum")
    gap = silhouettes.score_at(sil_k) - silhouettes.score_at(elbow)
    if gap <= slack:
        return KChoice(elbow, elbow, sil_k, f"distortion elbow within {slack} of best silhouette")
    return KChoice(sil_k, elbow, sil_k, f"distortion elbow silhouette trails best by {gap:.3f}; using silhouette maximum")
