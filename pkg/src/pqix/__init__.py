"""Compressed dense-retrieval indexes: PCA, product quantization, filtering.

The pipeline mirrors a retriever's offline side: embed passages (here,
synthetic corpora with planted structure), optionally reduce dimension and
normalize, store vectors raw, in half precision, or as product-quantizer
codes, then measure the size/accuracy trade-off with exact byte accounting.
"""

from .corpus import (
    EmbeddingMatrix,
    PassageRecord,
    QueryRecord,
    SyntheticSpec,
    exact_ground_truth,
    generate_synthetic,
    generate_synthetic_qa,
    load_embeddings,
    load_passages,
    load_queries,
    save_embeddings,
    save_jsonl,
)
from .errors import FormatError, PqixError
from .evaluation import (
    K_VALUES,
    SizeBudget,
    SweepPoint,
    SweepRow,
    answer_match,
    grid_from_bits,
    normalize_answer_text,
    parameter_bytes,
    precision_at_k,
    precision_at_ks,
    read_sweep_csv,
    recall_vs_exact,
    run_sweep,
    system_size_report,
    write_sweep_csv,
)
from .filtering import (
    Article,
    FilterDecision,
    FilterModel,
    TrainConfig,
    articles_from_passages,
    classify,
    featurize,
    filter_corpus,
    fnv1a_64,
    load_filter_model,
    save_filter_model,
    self_train,
    train_logreg,
)
from .index import (
    IndexArtifact,
    IndexConfig,
    SizeReport,
    bits_per_dimension,
    build_index,
    cast_f16,
    compression_factor,
    exact_oracle_search,
    flat_vector_bytes,
    index_size_bytes,
    load_index,
    pq_code_bytes,
    save_index,
    search,
)
from .quantizer import (
    PQCodebook,
    PQCodes,
    adc_score_table,
    bytes_per_vector,
    kmeans_fit,
    pq_decode,
    pq_encode,
    pq_search,
    pq_train,
)
from .reduction import (
    NormalizationParams,
    PCAModel,
    apply_pca,
    fit_pca,
    layer_normalize,
    normalize_rows,
)

__version__ = "0.1.0"

__all__ = [
    "EmbeddingMatrix", "PassageRecord", "QueryRecord", "SyntheticSpec",
    "exact_ground_truth", "generate_synthetic", "generate_synthetic_qa",
    "load_embeddings", "load_passages", "load_queries", "save_embeddings",
    "save_jsonl",
    "FormatError", "PqixError",
    "K_VALUES", "SizeBudget", "SweepPoint", "SweepRow", "answer_match",
    "grid_from_bits", "normalize_answer_text", "parameter_bytes",
    "precision_at_k", "precision_at_ks", "read_sweep_csv", "recall_vs_exact",
    "run_sweep", "system_size_report", "write_sweep_csv",
    "Article", "FilterDecision", "FilterModel", "TrainConfig",
    "articles_from_passages", "classify", "featurize", "filter_corpus",
    "fnv1a_64", "load_filter_model", "save_filter_model", "self_train",
    "train_logreg",
    "IndexArtifact", "IndexConfig", "SizeReport", "bits_per_dimension",
    "build_index", "cast_f16", "compression_factor", "exact_oracle_search",
    "flat_vector_bytes", "index_size_bytes", "load_index", "pq_code_bytes",
    "save_index", "search",
    "PQCodebook", "PQCodes", "adc_score_table", "bytes_per_vector",
    "kmeans_fit", "pq_decode", "pq_encode", "pq_search", "pq_train",
    "NormalizationParams", "PCAModel", "apply_pca", "fit_pca",
    "layer_normalize", "normalize_rows",
]
