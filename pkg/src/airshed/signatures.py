"""Per-cluster pollution signatures and partition comparison."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .clustering import NOISE, ClusterResult
from .errors import LengthMismatch, RowMismatch
from .table import FeatureTable

ORDERING_NOTE = "clusters ordered by the unweighted mean of their standardized signature"


@dataclass(frozen=True, eq=False)
class SignatureReport:
    """Clusters renumbered from least to most polluted.

    ``cluster_order[raw] = semantic``.  ``signatures`` is ``(k, n_pollutants)``
    and ``trends`` its transpose, one row per pollutant.
    """

    columns: tuple
    cluster_order: tuple
    signatures: np.ndarray
    trends: np.ndarray
    membership: tuple
    noise_members: tuple
    semantic_labels: np.ndarray

    def signature(self, cluster: int) -> dict[str, float]:
        return dict(zip(self.columns, map(float, self.signatures[cluster])))

    def trend(self, pollutant: str) -> np.ndarray:
        return self.trends[self.columns.index(pollutant)]


def compute_signatures(table: FeatureTable, result: ClusterResult) -> SignatureReport:
    labels = np.asarray(result.labels)
    if len(labels) != len(table.row_names):
        raise RowMismatch(f"{len(labels)} labels for {len(table.row_names)} table rows")
    if not table.standardized:
        raise ValueError("signatures are computed on a standardized table")
    k = result.k
    raw = np.zeros((k, len(table.columns)))
    for c in range(k):
        raw[c] = table.cells[labels == c].mean(axis=0)

    level = raw.mean(axis=1)
    by_level = sorted(range(k), key=lambda c: (level[c], c))
    order = [0] * k
    for semantic, c in enumerate(by_level):
        order[c] = semantic
    signatures = raw[by_level]

    semantic_labels = np.array([order[l] if l != NOISE else NOISE for l in labels], dtype=np.int64)
    names = np.array(table.row_names, dtype=object)
    membership = tuple(tuple(sorted(names[semantic_labels == s])) for s in range(k))
    noise = tuple(sorted(names[semantic_labels == NOISE]))
    return SignatureReport(
        columns=table.columns,
        cluster_order=tuple(order),
        signatures=signatures,
        trends=signatures.T.copy(),
        membership=membership,
        noise_members=noise,
        semantic_labels=semantic_labels,
    )


@dataclass(frozen=True)
class PartitionComparison:
    ari: float
    differing: tuple
    alignment: dict


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1) / 2


def adjusted_rand_index(a: Sequence[int], b: Sequence[int]) -> float:
    """Hubert-Arabie adjusted Rand index; NOISE counts as one more label."""
    a = np.asarray(a)
    b = np.asarray(b)
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} labels")
    n = len(a)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)
    index = _comb2(table).sum()
    rows = _comb2(table.sum(axis=1)).sum()
    cols = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = rows * cols / total if total else 0.0
    top = (rows + cols) / 2
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


def compare_partitions(a: ClusterResult, b: ClusterResult, names: Sequence[str]) -> PartitionComparison:
    """ARI plus the rows whose cluster in ``a`` is not aligned with their cluster in ``b``.

    Clusters are paired one-to-one to maximise total overlap; NOISE only
    pairs with NOISE.
    """
    la = np.asarray(a.labels)
    lb = np.asarray(b.labels)
    if len(la) != len(lb) or len(la) != len(names):
        raise LengthMismatch("partitions and names must have the same length")
    ua = [c for c in np.unique(la) if c != NOISE]
    ub = [c for c in np.unique(lb) if c != NOISE]
    overlap = np.array([[np.sum((la == x) & (lb == y)) for y in ub] for x in ua]).reshape(len(ua), len(ub))
    alignment = {NOISE: NOISE}
    if overlap.size:
        rows, cols = linear_sum_assignment(-overlap)
        alignment.update({int(ua[r]): int(ub[c]) for r, c in zip(rows, cols)})
    differing = tuple(
        name for name, x, y in zip(names, la, lb) if alignment.get(int(x)) != int(y)
    )
    return PartitionComparison(adjusted_rand_index(la, lb), differing, alignment)
