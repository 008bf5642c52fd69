"""Cluster administrative regions by their satellite air-quality signatures."""

from .clustering import NOISE, ClusterResult, ClusterSummary, dbscan, kmeans, ward, ward_merge_cost
from .geometry import Region, build_feature_table, parse_regions, point_in_region, zonal_mean
from .raster import (
    POLLUTANTS,
    Grid,
    QaPolicy,
    Scene,
    composite_mean,
    composite_scenes,
    parse_grid,
    qa_filter,
    read_grid,
    scan_scene_dir,
    serialize_grid,
    write_grid,
)
from .selection import (
    ElbowCurve,
    KChoice,
    SilhouetteReport,
    choose_k,
    distortion_score,
    find_elbow,
    silhouette,
    silhouette_score,
    sweep,
    sweep_both,
)
from .signatures import SignatureReport, adjusted_rand_index, compare_partitions, compute_signatures
from .table import FeatureTable, drop_null_rows, read_table, standardize, write_table

__version__ = "0.1.0"
