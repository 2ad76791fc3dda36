"""On-disk format, validation, and statistics for token-embedding dumps.

A dump file holds the token embeddings of one language at one encoder layer.
Binary layout (all integers little-endian)::

    magic            4 bytes, b"EMBD"
    version          u32, currently 1
    layer            u32
    dim              u32
    sentence_count   u64
    token_count      u64
    offsets          u64 x sentence_count   (start token index per sentence)
    token_ids        u32 x token_count
    vectors          f32 x token_count x dim, row-major
    payload_hash     u64  (hash of offsets|token_ids|vectors bytes)

A JSON manifest sits alongside every dump (``<dump>.manifest.json``) and is
part of the format: it carries the language tag, per-section checksums, and
declared counts. Vocabularies are UTF-8 TSV files with ``id<TAB>token`` rows.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from ._binio import hash_hex, pack_u32, pack_u64, payload_hash, read_exact, read_u32, read_u64
from .errors import DataError, FormatError, IntegrityError, IoError, ValidationError

MAGIC = b"EMBD"
FORMAT_VERSION = 1
MANIFEST_SUFFIX = ".manifest.json"

_MAX_U32 = 2**32 - 1


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SentenceRecord:
    """One sentence: token ids plus a (token count x dim) float32 matrix."""

    token_ids: np.ndarray
    vectors: np.ndarray
    language: str

    def __post_init__(self) -> None:
        ids = np.asarray(self.token_ids, dtype=np.uint32)
        vecs = np.asarray(self.vectors, dtype=np.float32)
        if vecs.ndim != 2:
            raise ValidationError(f"sentence vectors must be 2-D, got shape {vecs.shape}")
        if ids.ndim != 1 or len(ids) != vecs.shape[0]:
            raise ValidationError(
                f"token_ids length {ids.shape} does not match vector rows {vecs.shape[0]}"
            )
        if len(ids) == 0:
            raise ValidationError("a sentence must contain at least one token")
        if not self.language:
            raise ValidationError("sentence language code must be non-empty")
        if not np.isfinite(vecs).all():
            raise DataError(f"non-finite vector component in sentence ({self.language})")
        object.__setattr__(self, "token_ids", _freeze(ids))
        object.__setattr__(self, "vectors", _freeze(vecs))

    def __len__(self) -> int:
        return int(self.token_ids.shape[0])


@dataclass(frozen=True)
class EmbeddingDataset:
    """Per-layer token embeddings grouped into sentences with language tags.

    Immutable after construction; safe to share across worker threads.
    """

    layer: int
    dim: int
    sentences: tuple[SentenceRecord, ...]
    special_token_ids: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.layer < 0:
            raise ValidationError(f"layer index must be >= 0, got {self.layer}")
        if self.dim < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")
        sents = tuple(self.sentences)
        for s in sents:
            if s.vectors.shape[1] != self.dim:
                raise ValidationError(
                    f"sentence dim {s.vectors.shape[1]} does not match dataset dim {self.dim}"
                )
        object.__setattr__(self, "sentences", sents)
        object.__setattr__(self, "special_token_ids", frozenset(self.special_token_ids))

    @property
    def languages(self) -> tuple[str, ...]:
        """Distinct language codes present, in first-appearance order."""
        seen: dict[str, None] = {}
        for s in self.sentences:
            seen.setdefault(s.language, None)
        return tuple(seen)

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    def tokens_of(self, language: str) -> Iterable[SentenceRecord]:
        return (s for s in self.sentences if s.language == language)


class VocabStats(NamedTuple):
    size_a: int
    size_b: int
    intersection: int


@dataclass(frozen=True)
class Vocabulary:
    """A language's token-id set with its id -> string table.

    ``source`` records how the token set was obtained ("tsv" for a vocabulary
    file, "observed" for ids collected from a dataset, "synthetic" for
    generated fixtures); evaluation reports echo it.
    """

    language: str
    entries: Mapping[int, str]
    source: str = "tsv"

    def __post_init__(self) -> None:
        if not self.language:
            raise ValidationError("vocabulary language code must be non-empty")
        entries = dict(self.entries)
        for token_id, token in entries.items():
            if not (0 <= int(token_id) <= _MAX_U32):
                raise ValidationError(f"token id {token_id} outside u32 range")
            if not token:
                raise ValidationError(f"empty token string for id {token_id}")
        object.__setattr__(self, "entries", entries)

    @property
    def ids(self) -> frozenset[int]:
        return frozenset(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class CorpusManifest:
    """Declared metadata for one or more dump files.

    ``files`` maps a dump's basename to its section checksums (hex strings of
    the 64-bit content hash). Counts are per language so multi-file corpora
    can be described by a single merged manifest.
    """

    format_version: int
    layer: int
    dim: int
    languages: list[str]
    files: dict[str, dict]
    token_counts: dict[str, int]
    sentence_counts: dict[str, int]
    special_token_ids: list[int] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CorpusManifest":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
        try:
            return cls(
                format_version=int(raw["format_version"]),
                layer=int(raw["layer"]),
                dim=int(raw["dim"]),
                languages=list(raw["languages"]),
                files={str(k): dict(v) for k, v in raw["files"].items()},
                token_counts={str(k): int(v) for k, v in raw["token_counts"].items()},
                sentence_counts={str(k): int(v) for k, v in raw["sentence_counts"].items()},
                special_token_ids=[int(i) for i in raw.get("special_token_ids", [])],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"manifest is missing or mistypes a field: {exc}") from exc

    def merge(self, other: "CorpusManifest") -> "CorpusManifest":
        """Combine manifests of two dumps from the same corpus."""
        if (self.layer, self.dim) != (other.layer, other.dim):
            raise ValidationError("cannot merge manifests with different layer/dim")
        overlap = set(self.files) & set(other.files)
        if overlap:
            raise ValidationError(f"manifests describe the same file(s): {sorted(overlap)}")
        return CorpusManifest(
            format_version=FORMAT_VERSION,
            layer=self.layer,
            dim=self.dim,
            languages=sorted(set(self.languages) | set(other.languages)),
            files={**self.files, **other.files},
            token_counts={**self.token_counts, **other.token_counts},
            sentence_counts={**self.sentence_counts, **other.sentence_counts},
            special_token_ids=sorted(set(self.special_token_ids) | set(other.special_token_ids)),
        )


def manifest_path(dump_path: str | os.PathLike) -> Path:
    return Path(str(dump_path) + MANIFEST_SUFFIX)


def _encode_dump(dataset: EmbeddingDataset) -> tuple[bytes, dict[str, str]]:
    """Serialize a dataset; returns (file bytes, per-section checksum map)."""
    sentence_count = len(dataset.sentences)
    token_count = dataset.token_count

    offsets = np.zeros(sentence_count, dtype="<u8")
    pos = 0
    ids = np.empty(token_count, dtype="<u4")
    vectors = np.empty((token_count, dataset.dim), dtype="<f4")
    for i, s in enumerate(dataset.sentences):
        offsets[i] = pos
        ids[pos : pos + len(s)] = s.token_ids
        vectors[pos : pos + len(s)] = s.vectors
        pos += len(s)

    offsets_b = offsets.tobytes()
    ids_b = ids.tobytes()
    vectors_b = vectors.tobytes()

    header = (
        MAGIC
        + pack_u32(FORMAT_VERSION)
        + pack_u32(dataset.layer)
        + pack_u32(dataset.dim)
        + pack_u64(sentence_count)
        + pack_u64(token_count)
    )
    digest = payload_hash(offsets_b, ids_b, vectors_b)
    blob = header + offsets_b + ids_b + vectors_b + pack_u64(digest)
    sections = {
        "offsets": hash_hex(payload_hash(offsets_b)),
        "token_ids": hash_hex(payload_hash(ids_b)),
        "vectors": hash_hex(payload_hash(vectors_b)),
        "payload": hash_hex(digest),
    }
    return blob, sections


def write_dump(dataset: EmbeddingDataset, path: str | os.PathLike) -> CorpusManifest:
    """Write a single-language dataset as a dump file plus its manifest.

    Raises ValidationError for empty or mixed-language datasets (the format
    stores one language per file) and IoError on filesystem failures.
    """
    if len(dataset.sentences) == 0:
        raise ValidationError("refusing to write a dump with no sentences")
    langs = dataset.languages
    if len(langs) != 1:
        raise ValidationError(
            f"a dump file holds one language; dataset has {list(langs)}"
        )
    language = langs[0]

    blob, sections = _encode_dump(dataset)
    manifest = CorpusManifest(
        format_version=FORMAT_VERSION,
        layer=dataset.layer,
        dim=dataset.dim,
        languages=[language],
        files={Path(path).name: {"sections": sections}},
        token_counts={language: dataset.token_count},
        sentence_counts={language: len(dataset.sentences)},
        special_token_ids=sorted(dataset.special_token_ids),
    )
    try:
        with open(path, "wb") as f:
            f.write(blob)
        with open(manifest_path(path), "w", encoding="utf-8") as f:
            f.write(manifest.to_json())
    except OSError as exc:
        raise IoError(f"failed to write dump {path}: {exc}") from exc
    return manifest


def load_dump(path: str | os.PathLike) -> EmbeddingDataset:
    """Load a dump file, verifying its embedded hash and manifest checksums."""
    mpath = manifest_path(path)
    if not Path(path).exists():
        raise FormatError(f"dump file not found: {path}")
    if not mpath.exists():
        raise FormatError(f"manifest sidecar not found: {mpath}")
    manifest = CorpusManifest.from_json(mpath.read_text(encoding="utf-8"))

    with open(path, "rb") as f:
        magic = read_exact(f, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        version = read_u32(f, "version")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported format version {version}")
        layer = read_u32(f, "layer")
        dim = read_u32(f, "dim")
        sentence_count = read_u64(f, "sentence_count")
        token_count = read_u64(f, "token_count")
        if dim == 0 or sentence_count == 0 or token_count < sentence_count:
            raise FormatError(
                f"implausible header: dim={dim} sentences={sentence_count} tokens={token_count}"
            )
        offsets_b = read_exact(f, 8 * sentence_count, "sentence offsets")
        ids_b = read_exact(f, 4 * token_count, "token ids")
        vectors_b = read_exact(f, 4 * token_count * dim, "vectors")
        stored = read_u64(f, "payload hash")
        trailing = f.read()
    if trailing:
        raise FormatError(f"{len(trailing)} unexpected trailing bytes")
    if payload_hash(offsets_b, ids_b, vectors_b) != stored:
        raise IntegrityError(f"payload hash mismatch in {path}")

    entry = manifest.files.get(Path(path).name)
    if entry is None:
        raise FormatError(f"manifest at {mpath} does not describe {Path(path).name}")
    sections = entry.get("sections", {})
    for name, data in (("offsets", offsets_b), ("token_ids", ids_b), ("vectors", vectors_b)):
        declared = sections.get(name)
        if declared is not None and declared != hash_hex(payload_hash(data)):
            raise IntegrityError(f"manifest checksum mismatch for section '{name}' of {path}")
    if manifest.layer != layer or manifest.dim != dim:
        raise IntegrityError(
            f"manifest declares layer={manifest.layer} dim={manifest.dim}, "
            f"file has layer={layer} dim={dim}"
        )
    if len(manifest.languages) != 1:
        raise FormatError(f"dump manifest must declare exactly one language: {manifest.languages}")
    language = manifest.languages[0]

    offsets = np.frombuffer(offsets_b, dtype="<u8")
    if offsets[0] != 0 or np.any(np.diff(offsets.astype(np.int64)) <= 0) or offsets[-1] >= token_count:
        raise FormatError("sentence offsets are not strictly increasing from 0")
    ids = np.frombuffer(ids_b, dtype="<u4")
    vectors = np.frombuffer(vectors_b, dtype="<f4").reshape(token_count, dim)
    if not np.isfinite(vectors).all():
        raise DataError(f"non-finite vector payload in {path}")

    bounds = np.append(offsets, token_count).astype(np.int64)
    sentences = [
        SentenceRecord(
            token_ids=ids[bounds[i] : bounds[i + 1]],
            vectors=vectors[bounds[i] : bounds[i + 1]],
            language=language,
        )
        for i in range(sentence_count)
    ]
    dataset = EmbeddingDataset(
        layer=layer,
        dim=dim,
        sentences=tuple(sentences),
        special_token_ids=frozenset(manifest.special_token_ids),
    )
    declared_tokens = manifest.token_counts.get(language)
    declared_sentences = manifest.sentence_counts.get(language)
    if declared_tokens != dataset.token_count or declared_sentences != sentence_count:
        raise IntegrityError(
            f"manifest counts ({declared_sentences} sentences / {declared_tokens} tokens) "
            f"do not match file ({sentence_count} / {dataset.token_count})"
        )
    return dataset


def validate_dump(path: str | os.PathLike) -> CorpusManifest:
    """Fully load and cross-check a dump; returns its manifest on success."""
    load_dump(path)
    return CorpusManifest.from_json(manifest_path(path).read_text(encoding="utf-8"))


def write_vocabulary(vocab: Vocabulary, path: str | os.PathLike) -> None:
    """Write a vocabulary as TSV, rows sorted by token id."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for token_id in sorted(vocab.entries):
                f.write(f"{token_id}\t{vocab.entries[token_id]}\n")
    except OSError as exc:
        raise IoError(f"failed to write vocabulary {path}: {exc}") from exc


def read_vocabulary(path: str | os.PathLike, language: str) -> Vocabulary:
    """Read a TSV vocabulary file (``id<TAB>token`` per line)."""
    entries: dict[int, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'id<TAB>token', got {line!r}")
            try:
                token_id = int(parts[0])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer token id {parts[0]!r}") from exc
            if token_id in entries:
                raise ValidationError(f"{path}:{lineno}: duplicate token id {token_id}")
            entries[token_id] = parts[1]
    return Vocabulary(language=language, entries=entries, source="tsv")


def vocabulary_from_dataset(dataset: EmbeddingDataset, language: str) -> Vocabulary:
    """Build the observed token-id set of a language from a dataset.

    Token strings are not recoverable from a dump, so each entry's string is
    the decimal id; ``source`` is set to "observed".
    """
    ids: set[int] = set()
    for s in dataset.tokens_of(language):
        ids.update(int(i) for i in s.token_ids)
    if not ids:
        raise ValidationError(f"dataset contains no tokens of language {language!r}")
    return Vocabulary(language=language, entries={i: str(i) for i in ids}, source="observed")


def vocab_stats(a: Vocabulary, b: Vocabulary) -> VocabStats:
    """Sizes of two token sets and of their intersection (on token ids)."""
    ids_a, ids_b = a.ids, b.ids
    return VocabStats(len(ids_a), len(ids_b), len(ids_a & ids_b))
