"""Robust meta-learning for mixtures of linear regressions."""

from .classification import FittedMeta, classify, refine, trimmed_least_squares
from .clustering import (
    ClusterModel,
    ClusteringConfig,
    embed_heavy,
    estimate_r2,
    lift,
    robust_cluster,
    sos_moment_check,
    trimmed_mean,
)
from .model import (
    AdversaryConfig,
    DatasetSplits,
    DerivedStats,
    MetaParameter,
    Task,
    TaskData,
    TaskTruth,
    corrupt,
    derived_stats,
    figure2_points,
    lower_bound_points,
    make_splits,
    sample_tasks,
    simplex_meta,
    views,
)
from .pipeline import PipelineResult, parameter_errors, run_pipeline
from .prediction import bayes_predict, eval_prediction, map_predict, posterior
from .subspace import (
    FilterDiagnostics,
    SubspaceEstimate,
    double_filter,
    first_filter,
    hrpca,
    rank_one_scores,
    robust_subspace,
    subspace_metrics,
    top_k_subspace,
)

__version__ = "0.1.0"
