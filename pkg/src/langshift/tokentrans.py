"""Unsupervised token-translation evaluation.

Shifted token embeddings are decoded back to token ids with a dot-product
argmax over an output-embedding table (rows in ascending token-id order, ties
to the lowest id), then scored with unigram BLEU and the conversion rate: the
share of output tokens that landed in the target-only vocabulary, with tokens
shared by both vocabularies excluded from numerator and denominator alike.
"""

from __future__ import annotations

import csv
import io
import json
import os
from collections import Counter
from dataclasses import dataclass
from math import exp
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._binio import pack_u32, pack_u64, payload_hash, read_exact, read_u32, read_u64
from .embedstore import EmbeddingDataset, Vocabulary
from .errors import FormatError, IntegrityError, IoError, ShapeError, ValidationError
from .langrep import LanguageMean, ShiftSpec, apply_shift_dataset

TABLE_MAGIC = b"DTBL"
TABLE_VERSION = 1


@dataclass(frozen=True)
class DecodeTable:
    """Output-embedding table mapping vectors back to token ids.

    Row ``i`` corresponds to the ``i``-th smallest token id of the
    vocabulary; ``ids`` exposes that order explicitly.
    """

    vocabulary: Vocabulary
    vectors: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self) -> None:
        vecs = np.asarray(self.vectors, dtype=np.float32)
        if vecs.ndim != 2:
            raise ValidationError(f"table vectors must be 2-D, got {vecs.shape}")
        if vecs.shape[0] != len(self.vocabulary):
            raise ValidationError(
                f"table has {vecs.shape[0]} rows for {len(self.vocabulary)} vocabulary entries"
            )
        if not np.isfinite(vecs).all():
            raise ValidationError("table vectors have non-finite entries")
        vecs = vecs.copy()
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float32)
            if b.shape != (vecs.shape[0],):
                raise ValidationError(f"bias shape {b.shape} != ({vecs.shape[0]},)")
            if not np.isfinite(b).all():
                raise ValidationError("bias has non-finite entries")
            b = b.copy()
            b.setflags(write=False)
            object.__setattr__(self, "bias", b)
        object.__setattr__(
            self, "_ids", np.array(sorted(self.vocabulary.entries), dtype=np.int64)
        )

    @property
    def ids(self) -> np.ndarray:
        """Token id of each row, ascending."""
        return self._ids  # type: ignore[attr-defined]

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @classmethod
    def from_mapping(
        cls,
        vocabulary: Vocabulary,
        prototypes: Mapping[int, np.ndarray],
        bias: Mapping[int, float] | None = None,
    ) -> "DecodeTable":
        """Build a table from an id -> vector mapping (ids must cover the vocab)."""
        ids = sorted(vocabulary.entries)
        if set(prototypes) != set(ids):
            raise ValidationError("prototype ids do not match the vocabulary ids")
        vectors = np.stack([np.asarray(prototypes[i], dtype=np.float32) for i in ids])
        bias_arr = None
        if bias is not None:
            bias_arr = np.array([bias.get(i, 0.0) for i in ids], dtype=np.float32)
        return cls(vocabulary=vocabulary, vectors=vectors, bias=bias_arr)


@dataclass(frozen=True)
class TranslationEvalReport:
    """Scores for one (language pair, alpha, layer) translation run.

    ``conversion_rate`` is None when every output token is shared by both
    vocabularies (the metric's denominator is zero and the value undefined).
    """

    source_language: str
    target_language: str
    alpha: float
    layer: int
    bleu1: float
    conversion_rate: float | None
    n_tokens: int
    n_converted: int
    n_shared: int
    bleu_variant: str = "corpus-level clipped unigram precision with brevity penalty"

    def __post_init__(self) -> None:
        if not (0.0 <= self.bleu1 <= 1.0):
            raise ValidationError(f"bleu1 out of range: {self.bleu1}")
        if self.conversion_rate is not None and not (0.0 <= self.conversion_rate <= 1.0):
            raise ValidationError(f"conversion rate out of range: {self.conversion_rate}")
        if not (0 <= self.n_converted <= self.n_tokens and 0 <= self.n_shared <= self.n_tokens):
            raise ValidationError("token counts are inconsistent")

    def to_dict(self) -> dict:
        return {
            "source_language": self.source_language,
            "target_language": self.target_language,
            "alpha": self.alpha,
            "layer": self.layer,
            "bleu1": self.bleu1,
            "conversion_rate": self.conversion_rate,
            "n_tokens": self.n_tokens,
            "n_converted": self.n_converted,
            "n_shared": self.n_shared,
            "bleu_variant": self.bleu_variant,
        }


def merge_decode_tables(a: DecodeTable, b: DecodeTable) -> DecodeTable:
    """Union of two tables; shared ids must agree on string and vector."""
    if a.dim != b.dim:
        raise ShapeError(f"table dims differ: {a.dim} vs {b.dim}")
    rows_a = {int(i): a.vectors[r] for r, i in enumerate(a.ids)}
    rows_b = {int(i): b.vectors[r] for r, i in enumerate(b.ids)}
    entries: dict[int, str] = {}
    for vocab, rows in ((a.vocabulary, rows_a), (b.vocabulary, rows_b)):
        for token_id, token in vocab.entries.items():
            if token_id in entries:
                if entries[token_id] != token:
                    raise ValidationError(f"id {token_id} maps to both {entries[token_id]!r} and {token!r}")
                if not np.array_equal(rows_a[token_id], rows_b[token_id]):
                    raise ValidationError(f"id {token_id} has conflicting table rows")
            entries[token_id] = token
    merged_vocab = Vocabulary(
        language=f"{a.vocabulary.language}+{b.vocabulary.language}",
        entries=entries,
        source=a.vocabulary.source,
    )
    prototypes = {**rows_a, **rows_b}
    bias = None
    if a.bias is not None or b.bias is not None:
        bias_map: dict[int, float] = {}
        if a.bias is not None:
            bias_map.update({int(i): float(v) for i, v in zip(a.ids, a.bias)})
        if b.bias is not None:
            bias_map.update({int(i): float(v) for i, v in zip(b.ids, b.bias)})
        bias = bias_map
    return DecodeTable.from_mapping(merged_vocab, prototypes, bias)


def decode_tokens(
    dataset: EmbeddingDataset,
    table: DecodeTable,
    restrict: Iterable[int] | None = None,
) -> list[list[int]]:
    """Nearest-token decoding of every vector: argmax of ``row . h + bias``.

    Scores are computed in float64; exact ties resolve to the lowest token id.
    ``restrict`` limits the argmax to a subset of the table's ids.
    """
    if dataset.dim != table.dim:
        raise ShapeError(f"dataset dim {dataset.dim} != table dim {table.dim}")
    weights = table.vectors.astype(np.float64)
    bias = table.bias.astype(np.float64) if table.bias is not None else None

    row_mask = None
    if restrict is not None:
        restrict_set = {int(i) for i in restrict}
        unknown = restrict_set - set(int(i) for i in table.ids)
        if unknown:
            raise ValidationError(f"restrict ids not in table vocabulary: {sorted(unknown)[:5]}")
        row_mask = np.isin(table.ids, np.fromiter(restrict_set, dtype=np.int64))

    all_vectors = np.concatenate([s.vectors for s in dataset.sentences]).astype(np.float64)
    scores = all_vectors @ weights.T
    if bias is not None:
        scores += bias
    if row_mask is not None:
        scores[:, ~row_mask] = -np.inf
    best_rows = np.argmax(scores, axis=1)  # first max = lowest row = lowest id
    decoded = table.ids[best_rows]

    out: list[list[int]] = []
    pos = 0
    for s in dataset.sentences:
        out.append([int(i) for i in decoded[pos : pos + len(s)]])
        pos += len(s)
    return out


def conversion_rate(
    output_ids: Sequence[int],
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
) -> float | None:
    """Share of output tokens that moved into the target-only token set.

    Counts token occurrences. Tokens in both vocabularies are excluded from
    numerator and denominator; if that empties the denominator the rate is
    undefined and None is returned (never coerced to 0 or 1).
    """
    src = source_vocab.ids
    tgt = target_vocab.ids
    shared = src & tgt
    n_total = len(output_ids)
    n_shared = sum(1 for i in output_ids if i in shared)
    n_converted = sum(1 for i in output_ids if i in tgt and i not in src)
    denominator = n_total - n_shared
    if denominator == 0:
        return None
    return n_converted / denominator


def _conversion_counts(
    output_ids: Sequence[int], source_vocab: Vocabulary, target_vocab: Vocabulary
) -> tuple[int, int, int]:
    shared = source_vocab.ids & target_vocab.ids
    tgt_only = target_vocab.ids - source_vocab.ids
    n_shared = sum(1 for i in output_ids if i in shared)
    n_converted = sum(1 for i in output_ids if i in tgt_only)
    return len(output_ids), n_converted, n_shared


def bleu1(
    hypotheses: Sequence[Sequence[int]],
    references: Sequence[Sequence[int]],
) -> float:
    """Corpus-level clipped unigram precision times the brevity penalty.

    Computed over token ids with a single reference per hypothesis. An empty
    hypothesis corpus (no sentences, or only empty sentences) scores 0.
    """
    if len(hypotheses) != len(references):
        raise ValidationError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    for i, ref in enumerate(references):
        if len(ref) == 0:
            raise ValidationError(f"reference {i} is empty")
    matches = 0
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        counts = Counter(hyp) & Counter(ref)
        matches += sum(counts.values())
        hyp_len += len(hyp)
        ref_len += len(ref)
    if hyp_len == 0:
        return 0.0
    precision = matches / hyp_len
    brevity = min(1.0, exp(1.0 - ref_len / hyp_len))
    return precision * brevity


def translate_and_score(
    dataset: EmbeddingDataset,
    spec: ShiftSpec,
    means: Mapping[str, LanguageMean],
    table: DecodeTable,
    references: Sequence[Sequence[int]],
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
    restrict: Iterable[int] | None = None,
) -> TranslationEvalReport:
    """Shift a source-language dataset, decode it, and score both metrics."""
    shifted = apply_shift_dataset(dataset, spec, means, mode="mds")
    decoded = decode_tokens(shifted, table, restrict=restrict)
    flat = [i for sent in decoded for i in sent]
    n_tokens, n_converted, n_shared = _conversion_counts(flat, source_vocab, target_vocab)
    rate = conversion_rate(flat, source_vocab, target_vocab)
    return TranslationEvalReport(
        source_language=spec.source_language,
        target_language=spec.target_language,
        alpha=spec.alpha,
        layer=spec.layer,
        bleu1=bleu1(decoded, references),
        conversion_rate=rate,
        n_tokens=n_tokens,
        n_converted=n_converted,
        n_shared=n_shared,
    )


def sweep_alpha(
    datasets: Mapping[int, EmbeddingDataset],
    language_pair: tuple[str, str],
    alphas: Sequence[float],
    layers: Sequence[int],
    means: Mapping[int, Mapping[str, LanguageMean]],
    tables: Mapping[int, DecodeTable],
    references: Sequence[Sequence[int]],
    source_vocab: Vocabulary,
    target_vocab: Vocabulary,
) -> list[TranslationEvalReport]:
    """Translation scores over an alpha x layer grid, layer-major order.

    A dataset holds one layer, so ``datasets``, ``means``, and ``tables`` are
    keyed by layer index.
    """
    if len(alphas) == 0 or len(layers) == 0:
        raise ValidationError("alpha and layer grids must be non-empty")
    src, tgt = language_pair
    reports = []
    for layer in layers:
        for key, mapping in (("datasets", datasets), ("means", means), ("tables", tables)):
            if layer not in mapping:
                raise ValidationError(f"no {key} entry for layer {layer}")
        for alpha in alphas:
            spec = ShiftSpec(source_language=src, target_language=tgt, alpha=alpha, layer=layer)
            reports.append(
                translate_and_score(
                    datasets[layer],
                    spec,
                    means[layer],
                    tables[layer],
                    references,
                    source_vocab,
                    target_vocab,
                )
            )
    return reports


SWEEP_CSV_COLUMNS = ["src", "tgt", "alpha", "layer", "bleu1", "conversion_rate", "n_tokens"]


def reports_to_csv(reports: Sequence[TranslationEvalReport]) -> str:
    """Render reports as CSV; undefined conversion rates become empty cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_CSV_COLUMNS)
    for r in reports:
        writer.writerow(
            [
                r.source_language,
                r.target_language,
                repr(float(r.alpha)),
                r.layer,
                repr(float(r.bleu1)),
                "" if r.conversion_rate is None else repr(float(r.conversion_rate)),
                r.n_tokens,
            ]
        )
    return buf.getvalue()


def read_references(path: str | os.PathLike) -> list[list[int]]:
    """Read reference token-id sequences: one sentence per line, ids space-separated."""
    refs: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                refs.append([int(tok) for tok in line.split()])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer token id") from exc
    return refs


def write_references(references: Sequence[Sequence[int]], path: str | os.PathLike) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for ref in references:
                f.write(" ".join(str(int(i)) for i in ref) + "\n")
    except OSError as exc:
        raise IoError(f"failed to write references {path}: {exc}") from exc


def save_decode_table(table: DecodeTable, path: str | os.PathLike) -> None:
    """Write a decode table file.

    Layout: magic ``DTBL``, u32 version, u32 header length, JSON header,
    u64 TSV length, vocabulary TSV (ascending id), f32 LE vectors in the same
    order, optional f32 LE bias, u64 content hash.
    """
    header = json.dumps(
        {
            "language": table.vocabulary.language,
            "source": table.vocabulary.source,
            "dim": table.dim,
            "count": len(table.vocabulary),
            "has_bias": table.bias is not None,
        },
        sort_keys=True,
    ).encode("utf-8")
    tsv = "".join(
        f"{i}\t{table.vocabulary.entries[int(i)]}\n" for i in table.ids
    ).encode("utf-8")
    vec_b = table.vectors.astype("<f4").tobytes()
    bias_b = table.bias.astype("<f4").tobytes() if table.bias is not None else b""
    digest = payload_hash(tsv, vec_b, bias_b)
    try:
        with open(path, "wb") as f:
            f.write(TABLE_MAGIC)
            f.write(pack_u32(TABLE_VERSION))
            f.write(pack_u32(len(header)))
            f.write(header)
            f.write(pack_u64(len(tsv)))
            f.write(tsv)
            f.write(vec_b)
            f.write(bias_b)
            f.write(pack_u64(digest))
    except OSError as exc:
        raise IoError(f"failed to write decode table {path}: {exc}") from exc


def load_decode_table(path: str | os.PathLike) -> DecodeTable:
    """Read a decode table written by :func:`save_decode_table`."""
    with open(path, "rb") as f:
        magic = read_exact(f, 4, "magic")
        if magic != TABLE_MAGIC:
            raise FormatError(f"bad decode-table magic {magic!r}")
        version = read_u32(f, "version")
        if version != TABLE_VERSION:
            raise FormatError(f"unsupported decode-table version {version}")
        header_len = read_u32(f, "header length")
        try:
            header = json.loads(read_exact(f, header_len, "header").decode("utf-8"))
            language = header["language"]
            source = header.get("source", "tsv")
            dim = int(header["dim"])
            count = int(header["count"])
            has_bias = bool(header["has_bias"])
        except (ValueError, KeyError) as exc:
            raise FormatError(f"bad decode-table header in {path}: {exc}") from exc
        tsv_len = read_u64(f, "tsv length")
        tsv = read_exact(f, tsv_len, "vocabulary tsv")
        vec_b = read_exact(f, 4 * count * dim, "vectors")
        bias_b = read_exact(f, 4 * count, "bias") if has_bias else b""
        stored = read_u64(f, "hash")
    if payload_hash(tsv, vec_b, bias_b) != stored:
        raise IntegrityError(f"decode-table hash mismatch in {path}")

    entries: dict[int, str] = {}
    order: list[int] = []
    for lineno, line in enumerate(tsv.decode("utf-8").splitlines(), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"decode-table TSV line {lineno} malformed")
        token_id = int(parts[0])
        if token_id in entries:
            raise ValidationError(f"duplicate token id {token_id} in decode table")
        entries[token_id] = parts[1]
        order.append(token_id)
    if order != sorted(order) or len(order) != count:
        raise FormatError("decode-table TSV must list ids ascending and match the declared count")
    vocab = Vocabulary(language=language, entries=entries, source=source)
    vectors = np.frombuffer(vec_b, dtype="<f4").reshape(count, dim)
    bias = np.frombuffer(bias_b, dtype="<f4") if has_bias else None
    return DecodeTable(vocabulary=vocab, vectors=vectors, bias=bias)
