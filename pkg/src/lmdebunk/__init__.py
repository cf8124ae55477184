"""Unsupervised claim debunking by perplexity under evidence-grounded LMs.

The pipeline retrieves evidence sentences for each claim, filters out
unusable candidates with a small rule set, grounds a language model on
the surviving evidence, and flags claims whose perplexity under that
model exceeds a calibrated threshold.
"""

from .bridge_client import BRIDGE_ENV_VAR, BridgeError, ExternalScorer
from .config import OBJECTIVES, RunConfig
from .data import (
    Claim,
    DataError,
    SentenceUnit,
    SourceDocument,
    collapse_label,
    label_counts,
    load_claims,
    load_corpus,
    normalize_text,
    segment_sentences,
    write_claims,
    write_corpus,
)
from .debunker import (
    CalibrationResult,
    CrossValidationResult,
    FoldResult,
    PerplexityDebunker,
    PipelineResult,
    Verdict,
    classify,
    cross_validate,
    run_pipeline,
    search_threshold,
)
from .filtering import (
    ALL_RULES,
    DEFAULT_LOW_CREDIBILITY_PATTERNS,
    EvidenceSet,
    FilterConfig,
    aggregate_evidence,
    audit_records,
    filter_candidates,
)
from .lm import (
    BOS_TOKEN,
    EPOCH_CHOICES,
    SMOOTHING_MODES,
    UNK_TOKEN,
    GroundingConfig,
    NgramScorer,
    Scorer,
    UniformScorer,
    perplexity_from_log_probs,
    perplexity_from_probs,
    sequence_log_prob,
    tokenize,
)
from .metrics import (MetricBundle, SweepPoint, compute_metrics,
                      default_threshold_grid, threshold_sweep)
from .report import AblationArm, AblationResult, ablation_filtering, emit_report
from .retrieval import (
    ScoredCandidate,
    TfidfSentenceRetriever,
    build_index,
    tokenize_for_retrieval,
    top_candidates,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BRIDGE_ENV_VAR",
    "BridgeError",
    "ExternalScorer",
    "OBJECTIVES",
    "RunConfig",
    "Claim",
    "DataError",
    "SentenceUnit",
    "SourceDocument",
    "collapse_label",
    "label_counts",
    "load_claims",
    "load_corpus",
    "normalize_text",
    "segment_sentences",
    "write_claims",
    "write_corpus",
    "CalibrationResult",
    "CrossValidationResult",
    "FoldResult",
    "PerplexityDebunker",
    "PipelineResult",
    "Verdict",
    "classify",
    "cross_validate",
    "run_pipeline",
    "search_threshold",
    "ALL_RULES",
    "DEFAULT_LOW_CREDIBILITY_PATTERNS",
    "EvidenceSet",
    "FilterConfig",
    "aggregate_evidence",
    "audit_records",
    "filter_candidates",
    "BOS_TOKEN",
    "EPOCH_CHOICES",
    "SMOOTHING_MODES",
    "UNK_TOKEN",
    "GroundingConfig",
    "NgramScorer",
    "Scorer",
    "UniformScorer",
    "perplexity_from_log_probs",
    "perplexity_from_probs",
    "sequence_log_prob",
    "tokenize",
    "MetricBundle",
    "SweepPoint",
    "compute_metrics",
    "default_threshold_grid",
    "threshold_sweep",
    "AblationArm",
    "AblationResult",
    "ablation_filtering",
    "emit_report",
    "ScoredCandidate",
    "TfidfSentenceRetriever",
    "build_index",
    "tokenize_for_retrieval",
    "top_candidates",
]
