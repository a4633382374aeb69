"""Membership disclosure risk of tabular synthetic data from nearest-neighbour
distance distributions modelled with kernel density estimators."""

from .attacks import (
    AttackOutcomes,
    PosteriorModel,
    RealisticAttack,
    ThresholdAttack,
    ThresholdGrid,
    TrueDistributionAttack,
    membership_posterior,
    method1_attack,
    realistic_attack,
    resolve_thresholds,
    true_distribution_attack,
)
from .distance import (
    DistanceTable,
    GowerContext,
    GowerNearestNeighbors,
    gower_distance,
    nearest_neighbor_distances,
    split_distances,
)
from .kde import GaussianKDE, kde_eval, kde_fit, scott_bandwidth
from .metrics import (
    ConfusionMatrix,
    RocCurve,
    accuracy_f1,
    confusion,
    ks_two_sample,
    roc_curve,
    tp_fp_trajectory,
    tpr_at_fpr,
)
from .report import RunConfig, compare_attacks, run_pipeline
from .tabular import AttackDataset, FeatureSpec, Table, build_attack_dataset, load_table

__version__ = "0.1.0"

__all__ = [
    "AttackDataset",
    "AttackOutcomes",
    "ConfusionMatrix",
    "DistanceTable",
    "FeatureSpec",
    "GaussianKDE",
    "GowerContext",
    "GowerNearestNeighbors",
    "PosteriorModel",
    "RealisticAttack",
    "RocCurve",
    "RunConfig",
    "Table",
    "ThresholdAttack",
    "ThresholdGrid",
    "TrueDistributionAttack",
    "accuracy_f1",
    "build_attack_dataset",
    "compare_attacks",
    "confusion",
    "gower_distance",
    "kde_eval",
    "kde_fit",
    "ks_two_sample",
    "load_table",
    "membership_posterior",
    "method1_attack",
    "nearest_neighbor_distances",
    "realistic_attack",
    "resolve_thresholds",
    "roc_curve",
    "run_pipeline",
    "scott_bandwidth",
    "split_distances",
    "tp_fp_trajectory",
    "tpr_at_fpr",
    "true_distribution_attack",
]
