"""Relevance-rescaled sparse classification for coded event data.

Feature descriptions are scored against an outcome keyword with word
embeddings; rescaling features by those scores turns uniform L1 into
an adaptive penalty that favors plausibly related features when
positive examples are scarce.
"""

__version__ = "0.1.0"

from .codebook import CodeSystem, Codebook, load_codebook
from .cohort import BillingRecord, CohortSpec, LabeledCohort, build_cohort, \
    cohort_summary, load_records
from .embeddings import EmbeddingStore, build_stem_index, cosine_similarity, \
    load_text_embeddings, lookup_token
from .errors import ConfigError, ConvergenceError, DataError, \
    EmptyCohortError, FormatError, RelscaleError, UnknownCodeError
from .evaluate import ComparisonReport, DownsampleSpec, SplitPlan, auc, \
    downsample, run_comparison, sign_test, stratified_split
from .features import SparseFeatureMatrix, TransformParams, apply_transform, \
    build_raw_matrix, fit_transform_params, log_transform, propagate_counts, \
    rescale_by_relevance
from .relevance import RelevanceTable, build_relevance_table, \
    feature_relevance, identity_relevance_table, power_mean, \
    relevance_distribution, tokenize_and_filter
from .sparse_glm import CVPlan, HyperParams, ModelWeights, class_cost_ratio, \
    cross_validate_C, fit, predict_scores, selected_features
from .stemmer import stem
from .synthgen import GeneratorConfig, GroundTruth, generate_cohort, \
    generate_dataset

__all__ = [
    "__version__",
    "BillingRecord", "Codebook", "CodeSystem", "CohortSpec",
    "ComparisonReport", "ConfigError", "ConvergenceError", "CVPlan",
    "DataError", "DownsampleSpec", "EmbeddingStore", "EmptyCohortError",
    "FormatError", "GeneratorConfig", "GroundTruth", "HyperParams",
    "LabeledCohort", "ModelWeights", "RelevanceTable", "RelscaleError",
    "SparseFeatureMatrix", "SplitPlan", "TransformParams",
    "UnknownCodeError",
    "apply_transform", "auc", "build_cohort", "build_raw_matrix",
    "build_relevance_table", "build_stem_index", "class_cost_ratio",
    "cohort_summary", "cosine_similarity", "cross_validate_C", "downsample",
    "feature_relevance", "fit", "fit_transform_params",
    "generate_cohort", "generate_dataset", "identity_relevance_table",
    "load_codebook", "load_records", "load_text_embeddings", "log_transform",
    "lookup_token", "power_mean", "predict_scores", "propagate_counts",
    "relevance_distribution", "rescale_by_relevance", "run_comparison",
    "selected_features", "sign_test", "stem", "stratified_split",
]
