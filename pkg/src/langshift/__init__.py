"""Toolkit for language information in multilingual-encoder token embeddings.

Computes per-language mean vectors, applies zero-mean and mean-difference
shifts, runs cross-lingual sentence retrieval, scores unsupervised token
translation, and provides a synthetic oracle for measuring how sensitive
each transform is to mean-estimation error.
"""

__version__ = "0.1.0"

from .embedstore import (
    CorpusManifest,
    EmbeddingDataset,
    SentenceRecord,
    VocabStats,
    Vocabulary,
    load_dump,
    read_vocabulary,
    validate_dump,
    vocab_stats,
    vocabulary_from_dataset,
    write_dump,
    write_vocabulary,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateVectorError,
    EmptyLanguageError,
    EmptySentenceError,
    FormatError,
    GoldMismatchError,
    IntegrityError,
    IoError,
    LangshiftError,
    LayerMismatchError,
    MissingMeanError,
    ShapeError,
    ValidationError,
)
from .langrep import (
    LanguageMean,
    ShiftSpec,
    apply_shift_dataset,
    compute_language_mean,
    load_mean,
    mds_shift,
    save_mean,
    zero_mean,
)
from .retrieval import (
    CosineDiagnostics,
    PrecisionRecallF1,
    RetrievalResult,
    ScoredPair,
    SentenceEmbedding,
    bucc_f1,
    cosine,
    cosine_diagnostics,
    nearest_neighbor_pairs,
    pool_dataset,
    pool_sentence,
    retrieve,
    tatoeba_accuracy,
    tune_threshold,
)
from .synthlab import (
    SensitivityReport,
    SynthConfig,
    SynthCorpus,
    estimate_means,
    estimation_errors,
    generate,
    inject_errors,
    run_sensitivity,
    run_sensitivity_seeds,
    summarize_sensitivity,
)
from .tokentrans import (
    DecodeTable,
    TranslationEvalReport,
    bleu1,
    conversion_rate,
    decode_tokens,
    load_decode_table,
    merge_decode_tables,
    read_references,
    reports_to_csv,
    save_decode_table,
    sweep_alpha,
    translate_and_score,
    write_references,
)
