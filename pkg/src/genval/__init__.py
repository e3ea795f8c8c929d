"""Training-free valuation of training data for generative models.

Pipeline: load embeddings for the training set and a fixed generated
set, match every generated point to its top-k nearest training points
(exact scan or product-quantized ADC), discount each row's matches with
a softmax of negative distances, and aggregate the credits into one
value per training point. Statistical helpers (one-sided Welch test,
exact small-instance transport cost) validate the resulting values.
"""
from .embeddings import (
    DatasetManifest,
    EmbeddingMatrix,
    load_embeddings,
    load_manifest,
    save_embeddings,
    save_manifest,
    validate_pair,
)
from .errors import (
    ConfigError,
    CorruptionError,
    FormatError,
    GenvalError,
    InternalError,
    ValidationError,
)
from .pq import (
    Codebook,
    PQCodes,
    PQConfig,
    decode,
    encode,
    load_index,
    quantization_error,
    save_index,
    train_codebooks,
)
from .search import (
    MatchResult,
    MatchTables,
    adc_lookup_table,
    adc_topk,
    batch_match,
    exact_topk,
    read_match_jsonl,
    recall_at_k,
    write_match_jsonl,
)
from .stats import (
    GroupSummary,
    TTestResult,
    TransportResult,
    exact_wasserstein,
    group_summary,
    welch_t_test,
)
from .synth import (
    ExperimentSpec,
    component_means,
    make_ra2_experiment,
    sample_mixture,
    simulate_generated,
)
from .valuation import (
    ScoreRow,
    ValuationResult,
    aggregate_values,
    discount_scores,
    rank_training_points,
    top_contributors,
)

__version__ = "0.1.0"
