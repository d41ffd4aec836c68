"""Heterogeneous classifier ensembles built from matrices of probabilistic predictions."""

from .core import (
    ContingencyTable,
    EnsembleModel,
    MethodReport,
    PredictionMatrix,
    ValidationError,
    validate_labels,
    validate_matrix,
)
from .combine import MeanAggregator, RunningMean, bag_aggregate, mean_aggregate
from .metrics import (
    DiversityStats,
    auc,
    brier,
    correlation_distance,
    diversity_matrix,
    mean_pairwise_profile,
    pair_diversity,
    threshold_labels,
)
from .select import CESSelector, CesParams, GreedySelector, ces_select, greedy_select, weights_from_counts
from .stack import LogisticModel, StackingClassifier, fit_logistic, meta_weights, stack_aggregated, stack_all
from .cluster import ClusterStacking, cut_k, hcluster, inter_cluster_stack, intra_cluster_stack, sweep_k
from .stats import friedman, group_letters, nemenyi

__all__ = [
    "ContingencyTable",
    "EnsembleModel",
    "MethodReport",
    "PredictionMatrix",
    "ValidationError",
    "validate_labels",
    "validate_matrix",
    "MeanAggregator",
    "RunningMean",
    "bag_aggregate",
    "mean_aggregate",
    "DiversityStats",
    "auc",
    "brier",
    "correlation_distance",
    "diversity_matrix",
    "mean_pairwise_profile",
    "pair_diversity",
    "threshold_labels",
    "CESSelector",
    "CesParams",
    "GreedySelector",
    "ces_select",
    "greedy_select",
    "weights_from_counts",
    "LogisticModel",
    "StackingClassifier",
    "fit_logistic",
    "meta_weights",
    "stack_aggregated",
    "stack_all",
    "ClusterStacking",
    "cut_k",
    "hcluster",
    "inter_cluster_stack",
    "intra_cluster_stack",
    "sweep_k",
    "friedman",
    "group_letters",
    "nemenyi",
]

__version__ = "0.1.0"
