"""Relevant-feature selection for KDD'99 intrusion detection.

End-to-end pieces: dataset loading and deduplication, correlation-based
subset search under seven strategies, boosted random-forest classification,
guarded gradual add/delete feature selection, and cross-validated
evaluation with reproducible artifacts.
"""

__version__ = "0.1.0"

from .schema import AttackClass, FeatureMeta, Schema, kdd_schema
from .dataset import (
    Dataset,
    DedupStats,
    KddParseError,
    UnknownLabelError,
    build_class_dataset,
    build_pair_dataset,
    class_distribution,
    deduplicate,
    parse_kdd,
)
from .stats import (
    DiscretizedColumn,
    discretize_dataset,
    discretize_mdl,
    entropy,
    gain_ratio,
    info_gain,
    symmetric_uncertainty,
)
from .featsel import (
    CfsEvaluator,
    FeatureSet,
    RankedList,
    SearchConfig,
    SearchOutcome,
    SelectionGrid,
    aggregate_consensus,
    cfs_merit,
    rank_features,
    run_all_methods,
)
from .classifiers import (
    BoostedModel,
    FeatureView,
    ForestModel,
    ModelSpec,
    NaiveBayesModel,
    TreeModel,
    model_from_dict,
    model_to_dict,
    train_model,
)
from .evaluation import (
    ConfusionMatrix,
    CVConfig,
    CVResult,
    MetricsReport,
    compute_metrics,
    cross_validate,
)
from .pipeline import (
    CvEvaluator,
    GuardPolicy,
    SelectionTrace,
    build_start_set,
    gradual_add,
    gradual_delete,
    reduce_features,
    select_best,
)
from .config import PipelineConfig

__all__ = [name for name in dir() if not name.startswith("_")]
