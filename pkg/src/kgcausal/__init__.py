"""kgcausal: metapath subgraph retrieval from knowledge graphs,
learning-to-rank over those subgraphs, and zero-shot causal relation
classification with the top-ranked paths embedded in prompts.
"""

from .errors import (
    BackendRejected,
    BackendUnavailable,
    CapabilityMissing,
    EmptyCandidatesError,
    KgcausalError,
    KGLoadError,
    NoSuchNodeError,
    TemplateError,
    UnparseableLabel,
)
from .kg import (
    FORMAT_JSONL,
    FORMAT_TSV,
    FORWARD,
    REVERSE,
    EdgeRecord,
    KnowledgeGraph,
    LoadReport,
    MetapathSubgraph,
    NodeRecord,
    enumerate_subgraphs,
    load_kg,
    pattern_query,
    sample_subgraphs,
)
from .llm import (
    CAUSAL,
    NON_CAUSAL,
    Completion,
    CompletionRequest,
    HttpBackend,
    MockOracle,
    MockOracleConfig,
    canonical_label,
    complete,
    label_probability,
)
from .relevance import (
    DatasetSummary,
    PairInstance,
    RankedMetapath,
    RankedPairRecord,
    RelevanceScore,
    build_ranked_dataset,
    build_sre_prompt,
    candidate_subgraphs,
    rank_pair,
    read_instances,
    read_ranked_dataset,
    score_subgraph,
)
from .verbalize import (
    CLS,
    SEP,
    FULL_STYLE,
    HYPHEN_STYLE,
    PLAIN_ARROWS_STYLE,
    TYPED_ARROWS_STYLE,
    VerbalizationStyle,
    encode_ranker_input,
    tokenize,
    verbalize,
)
from .discovery import (
    CausalPrediction,
    ClassificationMetrics,
    DiscoveryConfig,
    DiscoveryPrompt,
    EvaluationReport,
    GraphMetrics,
    aggregate_graph,
    baseline_rank,
    build_discovery_prompt,
    classify_pair,
    evaluate_classification,
    f1_score,
    hamming_distance,
    metrics_from_counts,
    parse_permutation,
    select_top_k,
)
from . import ltr

__version__ = "0.1.0"
