"""Acceptance suite: one test per criterion, summarized at the end of the run.

Run with ``pytest tests/test_acceptance.py``; each criterion prints a
PASS/FAIL line in the "acceptance criteria" section of the summary.
"""
import filecmp
import json
import math
import time

import numpy as np
import pytest

from airshed.cli import main
from airshed.clustering import (
    NOISE,
    ClusterResult,
    ClusterSummary,
    cluster_means,
    dbscan,
    kmeans,
    ward,
    ward_merge_cost,
)
from airshed.geometry import Region, build_feature_table, points_in_region, region_mask, zonal_mean
from airshed.raster import POLLUTANTS, Grid, composite_scenes, scan_scene_dir, write_grid
from airshed.selection import find_elbow, silhouette
from airshed.signatures import adjusted_rand_index
from airshed.table import FeatureTable, standardize, write_table

from oracles import (
    best_sse_partition,
    chord_elbow,
    crossing_count_inside,
    naive_dbscan,
    naive_silhouette,
    partition_of,
    ward_three_sum,
)
from synthetic import polygon_with_holes, write_fixture


def labelled(x, labels):
    labels = np.asarray(labels)
    k = int(labels.max()) + 1
    return ClusterResult(labels, cluster_means(x, labels, k), k, "manual")


@pytest.mark.criterion("DBSCAN matches the from-definition reference on 50 random datasets, < 30 s")
def test_dbscan_oracle():
    rng = np.random.default_rng(2024)
    spent = 0.0
    for trial in range(50):
        n = int(rng.integers(1, 301))
        d = int(rng.integers(1, 7))
        if trial % 5 == 0:
            # integer lattice: many distances land exactly on eps
            x = rng.integers(0, 6, size=(n, d)).astype(float)
            eps = float(rng.integers(1, 3))
        else:
            centers = rng.normal(0, 4, size=(int(rng.integers(1, 6)), d))
            x = centers[rng.integers(0, len(centers), n)] + rng.normal(0, 1, size=(n, d))
            eps = float(rng.uniform(0.3, 2.0) * math.sqrt(d))
        min_pts = int(rng.integers(1, 10))
        start = time.perf_counter()
        got = dbscan(x, eps, min_pts).labels.tolist()
        spent += time.perf_counter() - start
        want = naive_dbscan(x.tolist(), eps, min_pts)
        assert {i for i, v in enumerate(got) if v == NOISE} == {i for i, v in enumerate(want) if v == -1}
        clustered = [i for i, v in enumerate(got) if v != NOISE]
        assert partition_of([got[i] for i in clustered]) == partition_of([want[i] for i in clustered])
    assert spent < 30.0


@pytest.mark.criterion("Ward closed-form cost, exhaustive greedy steps for n <= 8, non-decreasing merges, < 10 s")
def test_ward():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        pa = rng.normal(0, 3, size=(int(rng.integers(1, 20)), d))
        pb = rng.normal(1, 3, size=(int(rng.integers(1, 20)), d))
        closed = ward_merge_cost(ClusterSummary.of(pa), ClusterSummary.of(pb))
        assert abs(closed - ward_three_sum(pa.tolist(), pb.tolist())) <= 1e-9

    for trial in range(60):
        n = int(rng.integers(2, 9))
        x = rng.normal(size=(n, int(rng.integers(1, 4))))
        if trial % 4 == 0:
            x = np.round(x)  # duplicates and tied costs
        res = ward(x, 1)
        pts = x.tolist()
        clusters = {i: [i] for i in range(n)}
        for a, b, delta in res.merge_history:
            costs = {
                (p, q): ward_three_sum([pts[i] for i in clusters[p]], [pts[i] for i in clusters[q]])
                for p in clusters
                for q in clusters
                if p < q
            }
            best = min(costs.values())
            assert abs(delta - best) <= 1e-9
            assert abs(costs[(a, b)] - best) <= 1e-9
            clusters[a] += clusters.pop(b)
        deltas = [m[2] for m in res.merge_history]
        assert all(q >= p - 1e-12 for p, q in zip(deltas, deltas[1:]))
    assert time.perf_counter() - start < 10.0


@pytest.mark.criterion("K-Means monotone distortion (200 runs), brute-force optimum on separable data, thread-count independence")
def test_kmeans(monkeypatch):
    rng = np.random.default_rng(11)
    for run in range(200):
        n = int(rng.integers(5, 200))
        x = rng.normal(size=(n, int(rng.integers(1, 7)))) * rng.uniform(0.1, 100)
        k = int(rng.integers(1, min(n, 12) + 1))
        h = kmeans(x, k, seed=run).distortion_history
        # exact arithmetic never increases; allow rounding in the last bits
        assert all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))

    for trial in range(30):
        groups = int(rng.integers(2, 4))
        sizes = rng.integers(1, 4, groups)
        anchors = np.arange(groups)[:, None] * 10.0 + rng.uniform(-1, 1, (groups, 2))
        x = np.vstack([anchors[g] + rng.uniform(0, 1, (s, 2)) for g, s in enumerate(sizes)])
        if len(np.unique(x, axis=0)) < groups:
            continue
        _, best = best_sse_partition(x.tolist(), groups)
        assert partition_of(kmeans(x, groups, seed=trial).labels) == sorted(best)
    line = np.array([[0.0], [1.0], [10.0], [11.0]])
    assert partition_of(kmeans(line, 2).labels) == sorted(best_sse_partition(line.tolist(), 2)[1])

    x = rng.normal(size=(2000, 6))
    monkeypatch.setenv("AIRSHED_THREADS", "1")
    one = kmeans(x, 9, seed=3)
    for threads in ("2", "4", "7"):
        monkeypatch.setenv("AIRSHED_THREADS", threads)
        many = kmeans(x, 9, seed=3)
        assert np.array_equal(one.labels, many.labels)
        assert one.centers.tobytes() == many.centers.tobytes()
        assert one.distortion_history == many.distortion_history


@pytest.mark.criterion("Silhouette matches the O(n^2) reference to 1e-9, lies in [-1, 1], translation and scale invariant")
def test_silhouette():
    rng = np.random.default_rng(5)
    for trial in range(40):
        n = int(rng.integers(3, 80))
        x = rng.normal(size=(n, int(rng.integers(1, 6))))
        k = int(rng.integers(2, min(n, 6) + 1))
        labels = np.concatenate([np.arange(k), rng.integers(0, k, n - k)])
        s = silhouette(x, labelled(x, labels)).per_point
        want = np.array(naive_silhouette(x.tolist(), labels.tolist()))
        assert np.max(np.abs(s - want)) <= 1e-9
        assert np.all((s >= -1) & (s <= 1))
        y = x * rng.uniform(0.001, 1000) + rng.uniform(-1e3, 1e3, x.shape[1])
        assert np.max(np.abs(silhouette(y, labelled(y, labels)).per_point - s)) <= 1e-9


def _fsum_moments(col):
    n = len(col)
    mean = math.fsum(col) / n
    return mean, math.sqrt(math.fsum((c - mean) ** 2 for c in col) / n)


@pytest.mark.criterion("Standardization moments within 1e-12 and idempotent to 1e-12")
def test_standardization():
    rng = np.random.default_rng(3)
    for trial in range(200):
        n, d = int(rng.integers(2, 600)), int(rng.integers(1, 7))
        loc = rng.uniform(-1, 1, d) * 10.0 ** rng.uniform(-6, 3, d)
        scale = np.abs(loc) * 10.0 ** rng.uniform(-3, 1, d) + 1e-9
        x = loc + rng.normal(size=(n, d)) * scale
        t = standardize(FeatureTable([f"r{i}" for i in range(n)], tuple(f"c{j}" for j in range(d)), x))
        for j in range(d):
            mean, sd = _fsum_moments(t.cells[:, j])
            assert abs(mean) <= 1e-12
            assert abs(sd - 1) <= 1e-12
        assert np.max(np.abs(standardize(t).cells - t.cells)) <= 1e-12


@pytest.mark.criterion("Elbow on 1/k matches the chord oracle, none on linear curves, affine invariant")
def test_elbow():
    ks = tuple(range(2, 16))
    inverse = [1 / k for k in ks]
    assert find_elbow(inverse, ks) == chord_elbow(ks, inverse)
    assert find_elbow([5.0 - 0.3 * k for k in ks], ks) is None
    assert find_elbow([2.0 + 0.1 * k for k in ks], ks) is None
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.uniform(0.01, 100), rng.uniform(-100, 100)
        for scores in (inverse, [math.exp(-k / 3) for k in ks], [1 / k**2 for k in ks]):
            assert find_elbow([a * s + b for s in scores], ks) == find_elbow(scores, ks) == chord_elbow(ks, scores)


@pytest.mark.criterion("Point-in-polygon matches the exact crossing oracle (10,000 points x 20 holed polygons); zonal additivity 1e-12")
def test_geometry():
    rng = np.random.default_rng(99)
    for p in range(20):
        rings = polygon_with_holes(rng, cx=p * 10.0, cy=-p * 3.0)
        region = Region(f"p{p}", (tuple(rings),))
        west, south, east, north = region.bounds()
        xs = rng.uniform(west - 0.5, east + 0.5, 10_000)
        ys = rng.uniform(south - 0.5, north + 0.5, 10_000)
        vertices = np.concatenate(rings)
        # degenerate probes: on vertices, and level with vertices
        xs[:100], ys[:100] = vertices[rng.integers(0, len(vertices), 100)].T
        ys[100:300] = vertices[rng.integers(0, len(vertices), 200), 1]
        got = points_in_region(xs, ys, region)
        want = [crossing_count_inside(x, y, rings) for x, y in zip(xs.tolist(), ys.tolist())]
        assert got.tolist() == want

    for trial in range(20):
        values = rng.normal(0, 1, (40, 40)) * 10.0 ** rng.uniform(-6, 2)
        missing = rng.random(values.shape) < 0.2
        grid = Grid(40, 40, 0.0, 0.0, 0.25, np.where(missing, 0.0, values), missing)
        cut = float(rng.integers(1, 39)) * 0.25
        a = Region("A", ((_rect(0, 0, cut, 10),),))
        b = Region("B", ((_rect(cut, 0, 10, 10),),))
        union = Region("AB", a.polygons + b.polygons)
        na, nb = _count(grid, a), _count(grid, b)
        total = na * zonal_mean(grid, a) + nb * zonal_mean(grid, b)
        assert abs((na + nb) * zonal_mean(grid, union) - total) <= 1e-12 * max(1.0, abs(total))


def _rect(x0, y0, x1, y1):
    return [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]


def _count(grid, region):
    return int(np.sum(region_mask(grid, region) & ~grid.missing))


def _run(root, out, **extra):
    scenes, boundaries, truth = write_fixture(root)
    cfg = root / "config.json"
    cfg.write_text(json.dumps({"scenes_dir": str(scenes), "boundaries": str(boundaries), **extra}))
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    return truth


def _labels(path):
    rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
    return {name: int(lab) for name, lab in rows}


@pytest.mark.criterion("End-to-end synthetic replication: K = 5 and ARI >= 0.9 via the CLI, < 60 s")
def test_end_to_end(tmp_path):
    start = time.perf_counter()
    truth = _run(tmp_path, tmp_path / "out")
    elapsed = time.perf_counter() - start
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    labels = _labels(tmp_path / "out" / "clusters.csv")
    names = sorted(truth)
    ari = adjusted_rand_index([labels[n] for n in names], [truth[n] for n in names])
    assert sorted(labels) == names and report["dropped_rows"] == []
    assert len(list((tmp_path / "scenes").glob("*_qa.asc"))) > 0
    assert report["selected_k"] == 5
    assert ari >= 0.9
    assert elapsed < 60.0


@pytest.mark.criterion("Determinism: two pipeline runs give byte-identical output directories")
def test_determinism(tmp_path):
    _run(tmp_path / "a", tmp_path / "a" / "out")
    _run(tmp_path / "b", tmp_path / "b" / "out")
    a, b = tmp_path / "a" / "out", tmp_path / "b" / "out"
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and len(names) == 9
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert not filecmp.dircmp(a, b).diff_files


ANDAMAN = "Andaman Islands,4.28E-05,-4.73E-08,0.037036,-1.27958,0.117128,9.89E-05"
NICOBAR = "Nicobar Islands,3.89E-05,-9.24E-06,0.033289,-1.23807,0.117677,8.95E-05"


@pytest.mark.criterion("Table-1 spot check: constant composites reproduce the Andaman and Nicobar rows exactly")
def test_table_one(tmp_path):
    rows = [line.split(",") for line in (ANDAMAN, NICOBAR)]
    expected = {r[0]: [float(v) for v in r[1:]] for r in rows}
    rng = np.random.default_rng(1)
    ncols, nrows = 12, 6
    scenes = tmp_path / "scenes"
    scenes.mkdir()
    for j, pollutant in enumerate(POLLUTANTS):
        for day in (1, 2, 3):
            values = rng.normal(0, 1, (nrows, ncols))  # background outside both islands
            values[:, :5] = expected["Andaman Islands"][j]
            values[:, 6:11] = expected["Nicobar Islands"][j]
            missing = rng.random(values.shape) < 0.15
            missing[:, 0] = missing[:, 6] = False
            stamp = f"2019-01-0{day}"
            write_grid(scenes / f"{pollutant}_{stamp}.asc", Grid(ncols, nrows, 92.0, 6.0, 0.1, np.where(missing, 0.0, values), missing))
            if pollutant != "O3":
                qa = np.ones(values.shape)
                qa[rng.random(values.shape) < 0.2] = 0.1
                qa[:, 0] = qa[:, 6] = 1.0
                write_grid(scenes / f"{pollutant}_{stamp}_qa.asc", Grid(ncols, nrows, 92.0, 6.0, 0.1, qa, np.zeros(qa.shape, bool)))
    composites = composite_scenes(scan_scene_dir(scenes))
    regions = [
        Region("Andaman Islands", ((_rect(92.0, 6.0, 92.5, 6.6),),)),
        Region("Nicobar Islands", ((_rect(92.6, 6.0, 93.1, 6.6),),)),
    ]
    table = build_feature_table(composites, regions)
    for i, name in enumerate(table.row_names):
        assert table.cells[i].tolist() == expected[name]
    text = write_table(table).splitlines()
    assert text[0] == "region," + ",".join(POLLUTANTS)
    for line, want in zip(text[1:], (ANDAMAN, NICOBAR)):
        assert [float(v) for v in line.split(",")[1:]] == [float(v) for v in want.split(",")[1:]]
