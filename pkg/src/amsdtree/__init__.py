"""Skew-adaptive statistical binning for C4.5-style decision trees and forests."""

from .data import (
    MISSING_CODE,
    Attribute,
    AttributeKind,
    CsvConfig,
    DataFormatError,
    Dataset,
    DatasetManifest,
    MissingPolicy,
    RowView,
    Schema,
    SchemaMismatchError,
    all_rows,
    apply_missing_policy,
    load_arff,
    load_csv,
    load_dataset,
    load_manifest,
    select_rows,
    write_csv,
)
from .eval import (
    EvalReport,
    FoldPlan,
    ModelSpec,
    default_models,
    make_folds,
    run_benchmark,
    run_cv,
    run_gamma_ablation,
    run_scaling_experiment,
)
from .forest import (
    Forest,
    ForestConfig,
    build_forest,
    deserialize_forest,
    predict_forest,
    predict_forest_dataset,
    serialize_forest,
)
from .splitters import (
    BinnedSplit,
    CategoricalSplit,
    SplitScore,
    SplitterStrategy,
    StrategyKind,
    ThresholdSplit,
    propose,
    propose_amsd,
    propose_categorical,
    propose_exhaustive,
    propose_msd,
    score_partition,
    select_best,
)
from .stats import (
    AdaptiveMultipliers,
    AttributeMoments,
    MomentsStatus,
    SplitPoints,
    adaptive_multipliers,
    assign_bin,
    compute_moments,
    split_points_amsd,
    split_points_msd,
)
from .tree import (
    DecisionTree,
    TreeConfig,
    TreeFormatError,
    build_tree,
    deserialize_tree,
    predict,
    predict_dataset,
    serialize_tree,
    tree_metrics,
)

__version__ = "0.1.0"
