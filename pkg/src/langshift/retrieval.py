"""Mean-pooled sentence embeddings and exact cosine nearest-neighbor retrieval.

Scoring is exact (full pairwise cosine, no approximate index); ties are always
broken toward the lower candidate index so results are deterministic.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .embedstore import EmbeddingDataset, SentenceRecord
from .errors import (
    DegenerateVectorError,
    EmptySentenceError,
    GoldMismatchError,
    ShapeError,
    ValidationError,
)
from .langrep import LanguageMean

_QUERY_BLOCK = 256


@dataclass(frozen=True)
class SentenceEmbedding:
    """A pooled sentence vector with its corpus index and language."""

    vector: np.ndarray
    index: int
    language: str

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise ValidationError(f"sentence embedding must be 1-D, got {vec.shape}")
        if not np.isfinite(vec).all():
            raise ValidationError("sentence embedding has non-finite components")
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)


@dataclass(frozen=True)
class RetrievalResult:
    """Top-k candidates per query, scores non-increasing within each row."""

    indices: np.ndarray  # (n_queries, k) candidate indices
    scores: np.ndarray  # (n_queries, k) cosine similarities
    degenerate_queries: tuple[int, ...] = ()
    degenerate_candidates: tuple[int, ...] = ()
    metric: str = "cosine"
    summary: dict | None = field(default=None, compare=False)

    @property
    def n_queries(self) -> int:
        return int(self.indices.shape[0])

    @property
    def k(self) -> int:
        return int(self.indices.shape[1])


class PrecisionRecallF1(NamedTuple):
    precision: float
    recall: float
    f1: float


class ScoredPair(NamedTuple):
    """A mined (query, candidate) pair with its similarity score."""

    query: int
    candidate: int
    score: float


class CosineDiagnostics(NamedTuple):
    """Cosine of a cross-lingual pair before and after each transform."""

    raw: float
    mds: float
    zero_mean: float


def pool_sentence(sentence: SentenceRecord, index: int = 0) -> SentenceEmbedding:
    """Mean of a sentence's token vectors (float64 accumulation)."""
    if len(sentence) == 0:
        raise EmptySentenceError("cannot pool an empty sentence")
    return SentenceEmbedding(
        vector=sentence.vectors.mean(axis=0, dtype=np.float64),
        index=index,
        language=sentence.language,
    )


def pool_dataset(dataset: EmbeddingDataset) -> list[SentenceEmbedding]:
    return [pool_sentence(s, i) for i, s in enumerate(dataset.sentences)]


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity, clamped to [-1, 1]; zero-norm inputs are rejected."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise ShapeError(f"cosine needs equal-length 1-D vectors, got {av.shape} and {bv.shape}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine of a zero-norm vector is undefined")
    return float(np.clip(np.dot(av, bv) / (na * nb), -1.0, 1.0))


def _stack(embeddings: Sequence[SentenceEmbedding], what: str) -> np.ndarray:
    if len(embeddings) == 0:
        raise ValidationError(f"{what} must be non-empty")
    dims = {e.vector.shape[0] for e in embeddings}
    if len(dims) != 1:
        raise ShapeError(f"{what} mix dimensionalities: {sorted(dims)}")
    return np.stack([e.vector for e in embeddings])


def _topk_rows(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-row top-k by score, ties resolved toward the lower column index."""
    n = scores.shape[1]
    out_idx = np.empty((scores.shape[0], k), dtype=np.int64)
    out_scores = np.empty((scores.shape[0], k), dtype=np.float64)
    cols = np.arange(n)
    for r in range(scores.shape[0]):
        order = np.lexsort((cols, -scores[r]))[:k]
        out_idx[r] = order
        out_scores[r] = scores[r, order]
    return out_idx, out_scores


def retrieve(
    queries: Sequence[SentenceEmbedding],
    candidates: Sequence[SentenceEmbedding],
    k: int = 1,
    *,
    n_threads: int = 1,
) -> RetrievalResult:
    """Exact top-k cosine retrieval of candidates for each query.

    Zero-norm embeddings are never scored: degenerate candidates rank behind
    everything, degenerate queries get an all ``-inf`` score row, and both are
    reported in the result so accuracy denominators can exclude them.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    q = _stack(queries, "queries")
    c = _stack(candidates, "candidates")
    if q.shape[1] != c.shape[1]:
        raise ShapeError(f"query dim {q.shape[1]} != candidate dim {c.shape[1]}")
    k = min(k, c.shape[0])

    qn = np.linalg.norm(q, axis=1)
    cn = np.linalg.norm(c, axis=1)
    bad_q = qn == 0.0
    bad_c = cn == 0.0
    qu = np.divide(q, qn[:, None], out=np.zeros_like(q), where=~bad_q[:, None])
    cu = np.divide(c, cn[:, None], out=np.zeros_like(c), where=~bad_c[:, None])

    def score_block(lo: int) -> tuple[np.ndarray, np.ndarray]:
        hi = min(lo + _QUERY_BLOCK, qu.shape[0])
        block = np.clip(qu[lo:hi] @ cu.T, -1.0, 1.0)
        block[:, bad_c] = -np.inf
        block[bad_q[lo:hi]] = -np.inf
        return _topk_rows(block, k)

    starts = range(0, qu.shape[0], _QUERY_BLOCK)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(score_block, starts))
    else:
        parts = [score_block(lo) for lo in starts]

    indices = np.vstack([p[0] for p in parts])
    scores = np.vstack([p[1] for p in parts])
    return RetrievalResult(
        indices=indices,
        scores=scores,
        degenerate_queries=tuple(int(i) for i in np.flatnonzero(bad_q)),
        degenerate_candidates=tuple(int(i) for i in np.flatnonzero(bad_c)),
    )


def tatoeba_accuracy(
    result: RetrievalResult,
    gold: Mapping[int, int],
    *,
    exclude_degenerate: bool = False,
) -> float:
    """Fraction of queries whose rank-1 candidate matches the gold bijection."""
    n = result.n_queries
    missing = [i for i in range(n) if i not in gold]
    if missing:
        raise GoldMismatchError(f"gold map missing query indices {missing[:5]} (n={len(missing)})")
    if len(set(gold[i] for i in range(n))) != n:
        raise GoldMismatchError("gold map is not a bijection (duplicate candidate indices)")
    expected = np.array([gold[i] for i in range(n)], dtype=np.int64)
    hits = result.indices[:, 0] == expected
    skip = set(result.degenerate_queries) if exclude_degenerate else set()
    if skip:
        keep = np.array([i not in skip for i in range(n)])
        if not keep.any():
            raise GoldMismatchError("all queries are degenerate; accuracy undefined")
        return float(hits[keep].mean())
    return float(hits.mean())


def nearest_neighbor_pairs(
    queries: Sequence[SentenceEmbedding],
    candidates: Sequence[SentenceEmbedding],
    *,
    n_threads: int = 1,
) -> list[ScoredPair]:
    """Forward nearest-neighbor mining: the rank-1 candidate of each query.

    Degenerate (zero-norm) queries mine nothing and are omitted.
    """
    result = retrieve(queries, candidates, k=1, n_threads=n_threads)
    skip = set(result.degenerate_queries)
    return [
        ScoredPair(qi, int(result.indices[qi, 0]), float(result.scores[qi, 0]))
        for qi in range(result.n_queries)
        if qi not in skip
    ]


def bucc_f1(
    pairs: Iterable[ScoredPair],
    gold: Iterable[tuple[int, int]],
    threshold: float,
) -> PrecisionRecallF1:
    """Precision/recall/F1 of ``{pairs with score >= threshold}`` against gold.

    An empty prediction set reports precision 0 (never NaN).
    """
    gold_set = {(int(a), int(b)) for a, b in gold}
    if not gold_set:
        raise GoldMismatchError("gold pair set is empty")
    pairs = list(pairs)
    if any(not np.isfinite(p.score) for p in pairs):
        raise ValidationError("pair scores must be finite")
    predicted = {(p.query, p.candidate) for p in pairs if p.score >= threshold}
    tp = len(predicted & gold_set)
    precision = tp / len(predicted) if predicted else 0.0
    recall = tp / len(gold_set)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return PrecisionRecallF1(precision, recall, f1)


def tune_threshold(pairs: Iterable[ScoredPair], gold: Iterable[tuple[int, int]]) -> float:
    """Observed score maximizing dev F1; ties go to the smallest threshold."""
    pairs = list(pairs)
    gold = list(gold)
    if not pairs:
        raise ValidationError("cannot tune a threshold with no scored pairs")
    best_t = None
    best_f1 = -1.0
    for t in sorted({p.score for p in pairs}):
        f1 = bucc_f1(pairs, gold, t).f1
        if f1 > best_f1:
            best_f1 = f1
            best_t = t
    assert best_t is not None
    return float(best_t)


def _as_vector(v: SentenceEmbedding | np.ndarray) -> np.ndarray:
    return np.asarray(getattr(v, "vector", v), dtype=np.float64)


def cosine_diagnostics(
    v1: SentenceEmbedding | np.ndarray,
    v2: SentenceEmbedding | np.ndarray,
    mean1: LanguageMean,
    mean2: LanguageMean,
) -> CosineDiagnostics:
    """Cosine of a sentence pair under no shift, mean-difference shift, zero-mean.

    The mean-difference variant compares ``v1 - mean1 + mean2`` against the
    raw ``v2``; the zero-mean variant compares ``v1 - mean1`` against
    ``v2 - mean2``.
    """
    a = _as_vector(v1)
    b = _as_vector(v2)
    if a.shape != b.shape:
        raise ShapeError(f"pair dims differ: {a.shape} vs {b.shape}")
    if mean1.dim != a.shape[0] or mean2.dim != a.shape[0]:
        raise ShapeError("mean dim does not match sentence embeddings")
    m1 = mean1.vector.astype(np.float64)
    m2 = mean2.vector.astype(np.float64)
    return CosineDiagnostics(
        raw=cosine(a, b),
        mds=cosine(a - m1 + m2, b),
        zero_mean=cosine(a - m1, b - m2),
    )
