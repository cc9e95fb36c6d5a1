"""arxsent: sentiment about a research topic, measured from arXiv abstracts.

Pipeline: harvest abstracts from the arXiv API, score overall 5-star
sentiment, attribute the score to text spans with Shapley values, extract
aspect terms from the attribution, score per-aspect polarity, and report
corpus-level distributions plus overall-vs-aspect divergence.
"""

__version__ = "0.1.0"

from .aspects import (
    AspectCandidate,
    AspectParams,
    AspectSentiment,
    DivergenceFinding,
    detect_divergence,
    extract_aspects,
    normalize_term,
    score_aspects,
)
from .corpus import (
    AbstractDocument,
    CorpusStats,
    PaperRecord,
    build_document,
    corpus_stats,
    fetch_papers,
    load_corpus,
    save_corpus,
    segment_sentences,
)
from .errors import (
    ArxsentError,
    ConfigError,
    DataError,
    ModelLoadError,
    TransportError,
)
from .explain import (
    Attribution,
    CoalitionValue,
    FeatureSegmentation,
    HierarchyParams,
    SpanValue,
    mask_apply,
    segment_words,
    shapley_exact,
    shapley_hierarchical,
    shapley_permutation,
)
from .heatmap import render_heatmap
from .inference import (
    LabelDistribution,
    ModelSpec,
    classify_aspect,
    classify_batch,
    classify_overall,
    cumulative_probability,
    resolve_model,
    star_to_polarity,
    top_label,
)
from .report import (
    CategoryDistributionReport,
    DivergenceTable,
    ReportBundle,
    StarDistributionReport,
    category_distribution,
    divergence_table,
    emit_report,
    percentage,
    star_distribution,
)

__all__ = [
    "AbstractDocument",
    "ArxsentError",
    "AspectCandidate",
    "AspectParams",
    "AspectSentiment",
    "Attribution",
    "CategoryDistributionReport",
    "CoalitionValue",
    "ConfigError",
    "CorpusStats",
    "DataError",
    "DivergenceFinding",
    "FeatureSegmentation",
    "HierarchyParams",
    "LabelDistribution",
    "ModelLoadError",
    "ModelSpec",
    "PaperRecord",
    "ReportBundle",
    "SpanValue",
    "StarDistributionReport",
    "TransportError",
    "build_document",
    "category_distribution",
    "classify_aspect",
    "classify_batch",
    "classify_overall",
    "corpus_stats",
    "cumulative_probability",
    "detect_divergence",
    "DivergenceTable",
    "divergence_table",
    "emit_report",
    "percentage",
    "extract_aspects",
    "normalize_term",
    "fetch_papers",
    "load_corpus",
    "mask_apply",
    "render_heatmap",
    "resolve_model",
    "save_corpus",
    "score_aspects",
    "segment_sentences",
    "segment_words",
    "shapley_exact",
    "shapley_hierarchical",
    "shapley_permutation",
    "star_distribution",
    "star_to_polarity",
    "top_label",
]
