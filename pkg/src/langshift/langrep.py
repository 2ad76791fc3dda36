"""Language means and the zero-mean / mean-difference-shift transforms.

A language's representation at a given layer is the arithmetic mean of every
token embedding of that language (every occurrence counts; no deduplication
of repeated subwords). Subtracting it moves embeddings into a shared
language-neutral space; adding a scaled difference of two language means
moves an embedding from one language's region to another's.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Literal, Mapping

import numpy as np

from ._binio import pack_u32, read_exact, read_u32
from .embedstore import EmbeddingDataset, SentenceRecord
from .errors import (
    EmptyLanguageError,
    FormatError,
    IoError,
    LayerMismatchError,
    MissingMeanError,
    ShapeError,
    ValidationError,
)

ShiftMode = Literal["zero_mean", "mds"]


@dataclass(frozen=True)
class LanguageMean:
    """Mean token embedding of one language at one layer.

    The vector is stored as float32 (accumulation happens in float64), which
    keeps file round trips bit-exact.
    """

    language: str
    layer: int
    vector: np.ndarray
    token_count: int

    def __post_init__(self) -> None:
        if not self.language:
            raise ValidationError("language code must be non-empty")
        if self.layer < 0:
            raise ValidationError(f"layer must be >= 0, got {self.layer}")
        if self.token_count < 1:
            raise ValidationError(f"token_count must be >= 1, got {self.token_count}")
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1:
            raise ValidationError(f"mean vector must be 1-D, got shape {vec.shape}")
        if not np.isfinite(vec).all():
            raise ValidationError("mean vector has non-finite components")
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class ShiftSpec:
    """Source/target/alpha/layer description of one embedding transform.

    ``source_language == target_language`` is permitted at construction (the
    zero-mean mode ignores the pair) but rejected when applying a
    mean-difference shift.
    """

    source_language: str
    target_language: str
    alpha: float
    layer: int

    def __post_init__(self) -> None:
        if not self.source_language or not self.target_language:
            raise ValidationError("shift languages must be non-empty codes")
        if not math.isfinite(self.alpha):
            raise ValidationError(f"alpha must be finite, got {self.alpha}")
        if self.layer < 0:
            raise ValidationError(f"layer must be >= 0, got {self.layer}")


def compute_language_mean(
    dataset: EmbeddingDataset,
    language: str,
    *,
    exclude_special: bool = False,
) -> LanguageMean:
    """Average all token embeddings of ``language`` in the dataset.

    Accumulates in float64, so the result is stable to summation order well
    below the 1e-6 relative tolerance the contract promises. With
    ``exclude_special`` the ids flagged in the dataset's manifest are skipped.
    """
    total = np.zeros(dataset.dim, dtype=np.float64)
    count = 0
    special = dataset.special_token_ids if exclude_special else frozenset()
    for sentence in dataset.tokens_of(language):
        vecs = sentence.vectors
        if special:
            keep = ~np.isin(sentence.token_ids, np.fromiter(special, dtype=np.uint32))
            vecs = vecs[keep]
        if vecs.shape[0]:
            total += vecs.sum(axis=0, dtype=np.float64)
            count += vecs.shape[0]
    if count == 0:
        raise EmptyLanguageError(f"no tokens of language {language!r} in dataset")
    return LanguageMean(
        language=language,
        layer=dataset.layer,
        vector=(total / count).astype(np.float32),
        token_count=count,
    )


def _check_dims(vector: np.ndarray, *means: LanguageMean) -> np.ndarray:
    v = np.asarray(vector)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {v.shape}")
    for m in means:
        if m.dim != v.shape[0]:
            raise ShapeError(f"vector dim {v.shape[0]} does not match mean dim {m.dim}")
    return v


def zero_mean(vector: np.ndarray, mean: LanguageMean) -> np.ndarray:
    """Remove language-specific information: ``vector - mean.vector``."""
    v = _check_dims(vector, mean)
    return v - mean.vector


def mds_shift(
    vector: np.ndarray,
    mean_src: LanguageMean,
    mean_tgt: LanguageMean,
    alpha: float,
) -> np.ndarray:
    """Mean-difference shift: ``vector + alpha * (mean_tgt - mean_src)``.

    ``alpha == 0`` returns the input bit-exactly. Shifting with the same mean
    on both sides is an exact identity (the difference vector is exactly
    zero).
    """
    v = _check_dims(vector, mean_src, mean_tgt)
    if mean_src.layer != mean_tgt.layer:
        raise LayerMismatchError(
            f"means come from layers {mean_src.layer} and {mean_tgt.layer}"
        )
    if not math.isfinite(alpha):
        raise ValidationError(f"alpha must be finite, got {alpha}")
    if alpha == 0.0:
        return v.copy()
    return v + alpha * (mean_tgt.vector - mean_src.vector)


def apply_shift_dataset(
    dataset: EmbeddingDataset,
    spec: ShiftSpec,
    means: Mapping[str, LanguageMean],
    mode: ShiftMode,
) -> EmbeddingDataset:
    """Transform every token vector of a dataset; the input is not modified.

    ``zero_mean`` subtracts each sentence's own language mean; ``mds`` adds
    ``alpha * (mean[target] - mean[source])`` uniformly. Arithmetic runs in
    float64 and is rounded back to the storage dtype once.
    """
    if mode not in ("zero_mean", "mds"):
        raise ValidationError(f"unknown shift mode {mode!r}")
    if spec.layer != dataset.layer:
        raise LayerMismatchError(
            f"spec targets layer {spec.layer}, dataset holds layer {dataset.layer}"
        )

    def _mean_of(language: str) -> np.ndarray:
        mean = means.get(language)
        if mean is None:
            raise MissingMeanError(f"no mean supplied for language {language!r}")
        if mean.layer != dataset.layer:
            raise LayerMismatchError(
                f"mean for {language!r} is from layer {mean.layer}, dataset is layer {dataset.layer}"
            )
        if mean.dim != dataset.dim:
            raise ShapeError(f"mean dim {mean.dim} does not match dataset dim {dataset.dim}")
        return mean.vector.astype(np.float64)

    if mode == "mds":
        if spec.source_language == spec.target_language:
            raise ValidationError("mds shift requires distinct source and target languages")
        delta = spec.alpha * (_mean_of(spec.target_language) - _mean_of(spec.source_language))
        shifted = [
            SentenceRecord(
                token_ids=s.token_ids,
                vectors=(s.vectors.astype(np.float64) + delta).astype(np.float32),
                language=s.language,
            )
            for s in dataset.sentences
        ]
    else:
        per_language = {lang: _mean_of(lang) for lang in dataset.languages}
        shifted = [
            SentenceRecord(
                token_ids=s.token_ids,
                vectors=(s.vectors.astype(np.float64) - per_language[s.language]).astype(
                    np.float32
                ),
                language=s.language,
            )
            for s in dataset.sentences
        ]
    return EmbeddingDataset(
        layer=dataset.layer,
        dim=dataset.dim,
        sentences=tuple(shifted),
        special_token_ids=dataset.special_token_ids,
    )


def save_mean(mean: LanguageMean, path: str | os.PathLike) -> None:
    """Write a mean file: u32 header length, JSON header, f32 LE vector blob."""
    header = json.dumps(
        {
            "language": mean.language,
            "layer": mean.layer,
            "token_count": mean.token_count,
            "dim": mean.dim,
        },
        sort_keys=True,
    ).encode("utf-8")
    try:
        with open(path, "wb") as f:
            f.write(pack_u32(len(header)))
            f.write(header)
            f.write(mean.vector.astype("<f4").tobytes())
    except OSError as exc:
        raise IoError(f"failed to write mean file {path}: {exc}") from exc


def load_mean(path: str | os.PathLike) -> LanguageMean:
    """Read a mean file written by :func:`save_mean`."""
    with open(path, "rb") as f:
        header_len = read_u32(f, "header length")
        header_b = read_exact(f, header_len, "header")
        blob = f.read()
    try:
        header = json.loads(header_b.decode("utf-8"))
        language = header["language"]
        layer = int(header["layer"])
        token_count = int(header["token_count"])
        dim = int(header["dim"])
    except (ValueError, KeyError) as exc:
        raise FormatError(f"bad mean-file header in {path}: {exc}") from exc
    if len(blob) != 4 * dim:
        raise FormatError(f"mean blob is {len(blob)} bytes, expected {4 * dim}")
    vector = np.frombuffer(blob, dtype="<f4")
    return LanguageMean(language=language, layer=layer, vector=vector, token_count=token_count)
