"""Command-line entry point and the end-to-end pipeline.

``airshed run`` goes from scene files and boundaries to tables, cluster
labels, figures and ``report.json``.  The other subcommands expose single
stages.  Failures print one JSON object on stderr and exit with 2 (config),
3 (data) or 4 (algorithm).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import re
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import svg
from .clustering import NOISE, ClusterResult, dbscan, kmeans, ward
from .errors import (
    AirshedError,
    ConfigError,
    EmptyInput,
    HeaderMismatch,
    KTooLarge,
    TooFewPoints,
)
from .geometry import build_feature_table, parse_regions
from .raster import POLLUTANTS, QaPolicy, composite_scenes, scan_scene_dir, write_grid
from .selection import choose_k, silhouette, sweep_both
from .signatures import ORDERING_NOTE, compute_signatures
from .table import drop_null_rows, read_table, standardize, write_table

log = logging.getLogger("airshed")

ALGORITHMS = ("kmeans", "ward", "dbscan")


@dataclass
class PipelineConfig:
    scenes_dir: Path | None = None
    boundaries: Path | None = None
    output_dir: Path = Path("airshed-out")
    name_property: str = "name"
    qa_overrides: dict = field(default_factory=dict)
    k: int | None = None
    k_range: tuple = (2, 15)
    algorithm: str = "kmeans"
    dbscan_eps: float = 1.7
    dbscan_min_pts: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("scenes_dir", "boundaries", "output_dir"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, Path(value))
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        try:
            lo, hi = (int(v) for v in self.k_range)
        except (TypeError, ValueError):
            raise ConfigError("k_range must be a pair [low, high]") from None
        if lo < 2 or hi < lo:
            raise ConfigError(f"k_range must satisfy 2 <= low <= high, got {self.k_range}")
        self.k_range = (lo, hi)
        if self.k is not None and int(self.k) < 1:
            raise ConfigError("k must be positive")
        if not self.dbscan_eps > 0 or int(self.dbscan_min_pts) < 1:
            raise ConfigError("dbscan_eps must be > 0 and dbscan_min_pts >= 1")
        for pollutant, threshold in (self.qa_overrides or {}).items():
            if pollutant not in POLLUTANTS:
                raise ConfigError(f"qa_overrides: unknown pollutant {pollutant!r}")
            if threshold is not None and not 0 <= threshold <= 1:
                raise ConfigError(f"qa_overrides: threshold for {pollutant} outside [0, 1]")

    @classmethod
    def from_file(cls, path, **overrides) -> "PipelineConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        # relative paths resolve against the config file
        for key in ("scenes_dir", "boundaries", "output_dir"):
            if key in raw and raw[key] is not None and not Path(raw[key]).is_absolute():
                raw[key] = path.parent / raw[key]
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**raw)


class StageError(AirshedError):
    """An error tagged with the pipeline stage it came from."""

    def __init__(self, stage: str, cause: AirshedError):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = cause.exit_code


class _stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, kind, exc, tb):
        if exc is not None and isinstance(exc, AirshedError) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


# ---------------------------------------------------------------------------
# GeoJSON output that keeps the input's number spelling


class _Raw:
    __slots__ = ("text",)

    def __init__(self, text):
        self.text = text


def _load_raw(text: str):
    return json.loads(text, parse_float=_Raw, parse_int=_Raw)


def _dump_raw(obj) -> str:
    raws: list[str] = []

    def swap(o):
        if isinstance(o, _Raw):
            raws.append(o.text)
            return f"\x00{len(raws) - 1}\x00"
        if isinstance(o, dict):
            return {k: swap(v) for k, v in o.items()}
        if isinstance(o, list):
            return [swap(v) for v in o]
        return o

    dumped = json.dumps(swap(obj), ensure_ascii=False)
    return re.sub(r'"\\u0000(\d+)\\u0000"', lambda m: raws[int(m.group(1))], dumped)


def labelled_geojson(text: str, name_property: str, labels: dict) -> str:
    """Input FeatureCollection with a ``cluster`` property added to each feature.

    Regions without a label (dropped rows) get ``null``; noise gets -1.
    """
    doc = _load_raw(text)
    for feature in doc["features"]:
        props = feature.get("properties")
        if props is None:
            props = feature["properties"] = {}
        name = props.get(name_property)
        name = name.text if isinstance(name, _Raw) else str(name)
        props["cluster"] = labels.get(name)
    return _dump_raw(doc) + "\n"


# ---------------------------------------------------------------------------
# pipeline


def _num(v):
    """JSON-safe float."""
    return None if v is None or (isinstance(v, float) and not np.isfinite(v)) else float(v)


def cluster_table(x: np.ndarray, algorithm: str, k: int | None, config: PipelineConfig) -> ClusterResult:
    if algorithm == "kmeans":
        return kmeans(x, k, seed=config.seed)
    if algorithm == "ward":
        return ward(x, k)
    return dbscan(x, config.dbscan_eps, config.dbscan_min_pts)


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage and write the artifacts into ``config.output_dir``.

    Returns the report that is also written to ``report.json``.
    """
    if config.scenes_dir is None or config.boundaries is None:
        raise ConfigError("scenes_dir and boundaries are required")
    caught: list[str] = []

    with warnings.catch_warnings(record=True) as recorded:
        warnings.simplefilter("always")
        with _stage("raster"):
            scenes = scan_scene_dir(config.scenes_dir)
            if not scenes:
                raise EmptyInput(f"no scene files in {config.scenes_dir}")
            policy = QaPolicy().with_overrides(config.qa_overrides)
            composites = composite_scenes(scenes, policy)
        with _stage("geometry"):
            try:
                boundary_text = config.boundaries.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read boundaries: {exc}") from None
            regions = parse_regions(boundary_text, config.name_property)
            raw_table = build_feature_table(composites, regions)
    caught.extend(str(w.message) for w in recorded)

    with _stage("table"):
        clean, dropped = drop_null_rows(raw_table)
        std = standardize(clean)
    caught.extend(std.warnings)
    x = std.cells
    n = len(x)

    distortion = sil_curve = choice = None
    k = config.k
    with _stage("selection"):
        if config.algorithm != "dbscan":
            if k is None:
                lo, hi = config.k_range
                hi = min(hi, n - 1)
                if hi - lo + 1 < 3:
                    raise TooFewPoints(f"{n} rows leave fewer than 3 values of k in {config.k_range}")
                distortion, sil_curve = sweep_both(x, range(lo, hi + 1), seed=config.seed)
                choice = choose_k(distortion, sil_curve)
                k = choice.k
            elif k > n:
                raise KTooLarge(f"k={k} exceeds the {n} usable rows")

    with _stage("clustering"):
        result = cluster_table(x, config.algorithm, k, config)
    with _stage("signatures"):
        report_sig = compute_signatures(std, result)
        sil = silhouette(x, result) if len(set(result.labels[result.labels != NOISE])) >= 2 else None

    labels = {name: int(lab) for name, lab in zip(std.row_names, report_sig.semantic_labels)}
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "table_raw.csv").write_text(write_table(raw_table), encoding="utf-8")
    (out / "table_std.csv").write_text(write_table(std), encoding="utf-8")
    lines = ["region,label"] + [f"{_csv_name(name)},{lab}" for name, lab in labels.items()]
    (out / "clusters.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "clusters.geojson").write_text(
        labelled_geojson(boundary_text, config.name_property, labels), encoding="utf-8"
    )

    if distortion is not None:
        elbow_svg = svg.render_elbow(distortion.ks, distortion.scores, distortion.elbow_k)
    else:
        elbow_svg = svg.placeholder("no k sweep: k fixed or algorithm is dbscan")
    (out / "elbow.svg").write_text(elbow_svg, encoding="utf-8")
    if sil is not None:
        ordered = [sil.per_point[report_sig.semantic_labels == s] for s in range(result.k)]
        sil_svg = svg.render_silhouette([np.sort(v) for v in ordered], sil.mean)
    else:
        sil_svg = svg.placeholder("silhouette needs at least two clusters")
    (out / "silhouette.svg").write_text(sil_svg, encoding="utf-8")
    (out / "signatures.svg").write_text(
        svg.render_signatures(std.columns, report_sig.signatures), encoding="utf-8"
    )
    (out / "map.svg").write_text(
        svg.render_choropleth(regions, labels, title=f"{config.algorithm} clusters"), encoding="utf-8"
    )

    report = {
        "algorithm": config.algorithm,
        "seed": config.seed,
        "n_regions": len(regions),
        "n_rows_clustered": n,
        "selected_k": int(result.k),
        "k_selection": None
        if choice is None
        else {
            "elbow_k": choice.elbow_k,
            "silhouette_k": choice.silhouette_k,
            "reason": choice.reason,
            "ks": list(distortion.ks),
            "distortion": [_num(v) for v in distortion.scores],
            "silhouette": [_num(v) for v in sil_curve.scores],
        },
        "mean_silhouette": None if sil is None else _num(sil.mean),
        "dropped_rows": dropped,
        "noise_members": list(report_sig.noise_members),
        "cluster_ordering": ORDERING_NOTE,
        "signatures": {
            str(s): report_sig.signature(s) for s in range(result.k)
        },
        "membership": {str(s): list(m) for s, m in enumerate(report_sig.membership)},
        "column_stats": {
            c: {"mean": _num(m), "std": _num(sd)} for c, (m, sd) in zip(std.columns, std.column_stats)
        },
        "warnings": caught,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report


def _csv_name(name: str) -> str:
    if any(ch in name for ch in ',"\n'):
        return '"' + name.replace('"', '""') + '"'
    return name


# ---------------------------------------------------------------------------
# argument handling


def _add_cluster_flags(p, with_k=True):
    if with_k:
        p.add_argument("--k", type=int)
    p.add_argument("--algorithm", choices=ALGORITHMS)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps", type=float, dest="dbscan_eps")
    p.add_argument("--min-pts", type=int, dest="dbscan_min_pts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airshed", description="Cluster regions by satellite air-quality signatures.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full pipeline")
    run.add_argument("--config", required=True)
    run.add_argument("--out", dest="output_dir")
    _add_cluster_flags(run)

    comp = sub.add_parser("composite", help="qa-filter and composite scenes into one grid per pollutant")
    comp.add_argument("--scenes", required=True)
    comp.add_argument("--out", required=True, help="output directory for <pollutant>.asc")

    tab = sub.add_parser("table", help="zonal-mean feature table")
    tab.add_argument("--scenes", required=True)
    tab.add_argument("--boundaries", required=True)
    tab.add_argument("--name-property", default="name")
    tab.add_argument("--out", required=True)

    clu = sub.add_parser("cluster", help="cluster a feature table")
    clu.add_argument("--table", required=True)
    clu.add_argument("--out", required=True)
    _add_cluster_flags(clu)

    elb = sub.add_parser("elbow", help="distortion and silhouette sweep over k")
    elb.add_argument("--table", required=True)
    elb.add_argument("--k-range", nargs=2, type=int, default=(2, 15))
    elb.add_argument("--seed", type=int, default=0)
    elb.add_argument("--out", required=True, help="output SVG path")

    ren = sub.add_parser("render", help="draw a cluster map")
    ren.add_argument("--boundaries", required=True)
    ren.add_argument("--clusters", required=True, help="clusters.csv (region,label)")
    ren.add_argument("--name-property", default="name")
    ren.add_argument("--out", required=True)
    return parser


def _std_from_csv(path) -> tuple:
    table = read_table(Path(path).read_text(encoding="utf-8"), columns=None)
    clean, dropped = drop_null_rows(table)
    return standardize(clean), dropped


def _cmd_run(args):
    config = PipelineConfig.from_file(
        args.config,
        output_dir=args.output_dir,
        k=args.k,
        algorithm=args.algorithm,
        seed=args.seed,
        dbscan_eps=args.dbscan_eps,
        dbscan_min_pts=args.dbscan_min_pts,
    )
    report = run_pipeline(config)
    print(json.dumps({"selected_k": report["selected_k"], "output_dir": str(config.output_dir)}))


def _cmd_composite(args):
    with _stage("raster"):
        composites = composite_scenes(scan_scene_dir(args.scenes))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for pollutant, grid in composites.items():
        write_grid(out / f"{pollutant}.asc", grid)


def _cmd_table(args):
    with _stage("raster"):
        composites = composite_scenes(scan_scene_dir(args.scenes))
    with _stage("geometry"):
        regions = parse_regions(Path(args.boundaries).read_text(encoding="utf-8"), args.name_property)
        table = build_feature_table(composites, regions)
    Path(args.out).write_text(write_table(table), encoding="utf-8")


def _cmd_cluster(args):
    config = PipelineConfig(
        algorithm=args.algorithm or "kmeans",
        seed=args.seed or 0,
        dbscan_eps=args.dbscan_eps or 1.7,
        dbscan_min_pts=args.dbscan_min_pts or 3,
    )
    with _stage("table"):
        std, _ = _std_from_csv(args.table)
    if config.algorithm != "dbscan" and args.k is None:
        raise ConfigError("--k is required for kmeans and ward")
    with _stage("clustering"):
        result = cluster_table(std.cells, config.algorithm, args.k, config)
        labels = compute_signatures(std, result).semantic_labels
    lines = ["region,label"] + [f"{_csv_name(n)},{int(l)}" for n, l in zip(std.row_names, labels)]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_elbow(args):
    with _stage("table"):
        std, _ = _std_from_csv(args.table)
    lo, hi = args.k_range
    with _stage("selection"):
        distortion, sil = sweep_both(std.cells, range(lo, min(hi, len(std.cells) - 1) + 1), seed=args.seed)
        choice = choose_k(distortion, sil)
    Path(args.out).write_text(svg.render_elbow(distortion.ks, distortion.scores, distortion.elbow_k), encoding="utf-8")
    print(json.dumps({"selected_k": choice.k, "elbow_k": choice.elbow_k, "silhouette_k": choice.silhouette_k}))


def _read_clusters_csv(path) -> dict:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["region", "label"]:
        raise HeaderMismatch("clusters file must have header region,label")
    return {row[0]: int(row[1]) for row in rows[1:] if row}


def _cmd_render(args):
    with _stage("geometry"):
        regions = parse_regions(Path(args.boundaries).read_text(encoding="utf-8"), args.name_property)
    with _stage("render"):
        labels = _read_clusters_csv(args.clusters)
        text = svg.render_choropleth(regions, labels)
    Path(args.out).write_text(text, encoding="utf-8")


COMMANDS = {
    "run": _cmd_run,
    "composite": _cmd_composite,
    "table": _cmd_table,
    "cluster": _cmd_cluster,
    "elbow": _cmd_elbow,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except AirshedError as exc:
        cause = exc.cause if isinstance(exc, StageError) else exc
        payload = {
            "error": {
                "stage": getattr(exc, "stage", None),
                "type": type(cause).__name__,
                "message": str(exc),
            }
        }
        print(json.dumps(payload), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": {"stage": None, "type": type(exc).__name__, "message": str(exc)}}), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
