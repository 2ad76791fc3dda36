"""Synthetic bilingual embedding generator with controllable mean-estimation error.

Each sentence pair shares per-token semantic vectors; a language's tokens add
that language's fixed offset vector plus optional isotropic noise, so the
noiseless corpora satisfy ``v1 - offset1 == v2 - offset2`` exactly, token by
token. Estimating language means from finite samples then induces a measured
gap between the true offsets and the estimates, which is what the sensitivity
analysis quantifies.

All generated components are snapped to a 2**-10 grid so that float32 sums,
differences, and power-of-two-length averages are exact; the noiseless
identity above therefore holds bit-for-bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .embedstore import EmbeddingDataset, SentenceRecord, Vocabulary
from .errors import ConfigError, ValidationError
from .langrep import LanguageMean
from .retrieval import (
    SentenceEmbedding,
    cosine_diagnostics,
    pool_dataset,
    retrieve,
    tatoeba_accuracy,
)
from .tokentrans import DecodeTable

_GRID = 1024.0  # quantization grid: components are multiples of 2**-10

METHODS = ("original", "zero_mean", "mds")


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.round(np.asarray(x, dtype=np.float64) * _GRID) / _GRID


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic bilingual corpus.

    ``offset_norm`` scales a random direction per language unless explicit
    ``offsets`` are given. ``mean_sample_size`` tokens per language are used
    to estimate the language means; smaller samples mean larger estimation
    error. ``sentence_length`` should be a power of two if bit-exact pooled
    identities matter. A single seed drives every draw.
    """

    dim: int
    n_pairs: int
    languages: tuple[str, str] = ("aa", "bb")
    offset_norm: float = 5.0
    offsets: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    semantic_spread: float = 1.0
    noise_sigma: float = 0.1
    mean_sample_size: int = 100
    seed: int = 0
    sentence_length: int = 8
    n_types: int = 128
    layer: int = 8

    def __post_init__(self) -> None:
        if self.dim < 1 or self.n_pairs < 1 or self.sentence_length < 1 or self.n_types < 1:
            raise ValidationError("dim, n_pairs, sentence_length, n_types must all be >= 1")
        if len(self.languages) != 2 or self.languages[0] == self.languages[1]:
            raise ValidationError("languages must be two distinct codes")
        if self.semantic_spread < 0 or self.noise_sigma < 0 or self.offset_norm < 0:
            raise ValidationError("spreads and norms must be >= 0")
        if self.mean_sample_size < 1:
            raise ValidationError("mean_sample_size must be >= 1")
        if self.mean_sample_size > self.n_pairs * self.sentence_length:
            raise ValidationError(
                f"mean_sample_size {self.mean_sample_size} exceeds corpus tokens "
                f"({self.n_pairs * self.sentence_length} per language)"
            )
        if self.layer < 0:
            raise ValidationError("layer must be >= 0")
        if self.offsets is not None:
            offs = tuple(tuple(float(x) for x in o) for o in self.offsets)
            if len(offs) != 2 or any(len(o) != self.dim for o in offs):
                raise ValidationError("explicit offsets must be two dim-length vectors")
            object.__setattr__(self, "offsets", offs)
        object.__setattr__(self, "languages", tuple(self.languages))

    def to_json(self) -> str:
        raw = dict(self.__dict__)
        raw["languages"] = list(self.languages)
        if self.offsets is not None:
            raw["offsets"] = [list(o) for o in self.offsets]
        return json.dumps(raw, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, raw: Mapping) -> "SynthConfig":
        data = dict(raw)
        if "languages" in data:
            data["languages"] = tuple(data["languages"])
        if data.get("offsets") is not None:
            data["offsets"] = tuple(tuple(o) for o in data["offsets"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad synthetic-corpus config: {exc}") from exc

    @classmethod
    def from_json_file(cls, path: str | os.PathLike) -> "SynthConfig":
        with open(path, "r", encoding="utf-8") as f:
            try:
                raw = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)


@dataclass(frozen=True)
class SynthCorpus:
    """Generated corpora plus everything needed to evaluate against them."""

    config: SynthConfig
    datasets: dict[str, EmbeddingDataset]
    gold: dict[int, int]
    true_means: dict[str, LanguageMean]
    decode_tables: dict[str, DecodeTable]
    type_sequences: np.ndarray  # (n_pairs, sentence_length) semantic type ids

    def references(self, language: str) -> list[list[int]]:
        """Token-id sequences of this language's sentences (translation gold)."""
        return [list(map(int, s.token_ids)) for s in self.datasets[language].sentences]


@dataclass(frozen=True)
class SensitivityReport:
    """Measured estimation errors and their effect on pair cosines and retrieval."""

    languages: tuple[str, str]
    seed: int
    delta_norms: dict[str, float]  # per-language error norms plus their difference
    accuracies: dict[str, float]  # method -> top-1 retrieval accuracy
    cos_raw: np.ndarray
    cos_mds: np.ndarray
    cos_zero_mean: np.ndarray
    condition_flags: np.ndarray  # per pair: |v2| > |v2 - est_mean2| > max error norm
    condition_fraction: float
    mean_sample_size: int

    def to_dict(self) -> dict:
        return {
            "languages": list(self.languages),
            "seed": self.seed,
            "delta_norms": self.delta_norms,
            "accuracies": self.accuracies,
            "mean_cosines": {
                "raw": float(np.mean(self.cos_raw)),
                "mds": float(np.mean(self.cos_mds)),
                "zero_mean": float(np.mean(self.cos_zero_mean)),
            },
            "condition_fraction": self.condition_fraction,
            "mean_sample_size": self.mean_sample_size,
        }


def _language_ids(config: SynthConfig, side: int) -> np.ndarray:
    # language 0 owns ids [0, n_types), language 1 owns [n_types, 2*n_types)
    return np.arange(config.n_types, dtype=np.int64) + side * config.n_types


def generate(config: SynthConfig) -> SynthCorpus:
    """Generate the paired corpora, gold map, true means, and decode tables.

    Token ``i`` of pair ``p`` in a language is ``semantic[type] + offset +
    noise``; both languages see the same type sequence per pair, so sentence
    ``p`` translates sentence ``p``. Decode-table rows are the noise-free
    prototypes ``semantic[type] + offset``. Deterministic per seed.
    """
    rng = np.random.default_rng(config.seed)

    if config.offsets is not None:
        offsets = [_quantize(np.array(o)) for o in config.offsets]
        rng.normal(size=(2, config.dim))  # keep the draw sequence stable either way
    else:
        raw = rng.normal(size=(2, config.dim))
        offsets = [
            _quantize(config.offset_norm * raw[i] / np.linalg.norm(raw[i])) for i in range(2)
        ]

    semantics = _quantize(rng.normal(0.0, config.semantic_spread, size=(config.n_types, config.dim)))
    types = rng.integers(0, config.n_types, size=(config.n_pairs, config.sentence_length))
    noise = _quantize(
        rng.normal(0.0, config.noise_sigma, size=(2, config.n_pairs, config.sentence_length, config.dim))
        if config.noise_sigma > 0
        else np.zeros((2, config.n_pairs, config.sentence_length, config.dim))
    )

    datasets: dict[str, EmbeddingDataset] = {}
    tables: dict[str, DecodeTable] = {}
    true_means: dict[str, LanguageMean] = {}
    for side, language in enumerate(config.languages):
        ids = _language_ids(config, side)
        sentences = []
        for p in range(config.n_pairs):
            toks = types[p]
            vectors = semantics[toks] + offsets[side] + noise[side, p]
            sentences.append(
                SentenceRecord(token_ids=ids[toks], vectors=vectors, language=language)
            )
        datasets[language] = EmbeddingDataset(
            layer=config.layer, dim=config.dim, sentences=tuple(sentences)
        )
        vocab = Vocabulary(
            language=language,
            entries={int(i): f"{language}:{t}" for t, i in enumerate(ids)},
            source="synthetic",
        )
        tables[language] = DecodeTable(
            vocabulary=vocab, vectors=(semantics + offsets[side]).astype(np.float32)
        )
        true_means[language] = LanguageMean(
            language=language,
            layer=config.layer,
            vector=offsets[side].astype(np.float32),
            token_count=config.n_pairs * config.sentence_length,
        )

    return SynthCorpus(
        config=config,
        datasets=datasets,
        gold={p: p for p in range(config.n_pairs)},
        true_means=true_means,
        decode_tables=tables,
        type_sequences=types,
    )


def estimate_means(
    corpus: SynthCorpus, sample_size: int | None = None
) -> dict[str, LanguageMean]:
    """Estimate each language's mean from a seeded token subsample.

    Sampling is without replacement from that language's tokens; the draw is
    derived from the corpus seed, so reports stay reproducible.
    """
    config = corpus.config
    m = config.mean_sample_size if sample_size is None else sample_size
    rng = np.random.default_rng([config.seed, 0xE5])
    means: dict[str, LanguageMean] = {}
    for language in config.languages:
        dataset = corpus.datasets[language]
        all_vectors = np.concatenate([s.vectors for s in dataset.sentences])
        if not (1 <= m <= all_vectors.shape[0]):
            raise ValidationError(
                f"sample size {m} out of range for {all_vectors.shape[0]} tokens"
            )
        chosen = rng.choice(all_vectors.shape[0], size=m, replace=False)
        means[language] = LanguageMean(
            language=language,
            layer=config.layer,
            vector=all_vectors[chosen].mean(axis=0, dtype=np.float64).astype(np.float32),
            token_count=m,
        )
    return means


def estimation_errors(
    corpus: SynthCorpus, estimated: Mapping[str, LanguageMean]
) -> dict[str, np.ndarray]:
    """Per-language gap between true offset and estimated mean (true minus estimate)."""
    return {
        lang: corpus.true_means[lang].vector.astype(np.float64)
        - estimated[lang].vector.astype(np.float64)
        for lang in corpus.config.languages
    }


def _method_accuracy(
    pooled1: np.ndarray,
    pooled2: np.ndarray,
    mean1: np.ndarray,
    mean2: np.ndarray,
    gold: dict[int, int],
    method: str,
) -> float:
    if method == "original":
        q, c = pooled1, pooled2
    elif method == "zero_mean":
        q, c = pooled1 - mean1, pooled2 - mean2
    elif method == "mds":
        q, c = pooled1 - mean1 + mean2, pooled2
    else:
        raise ValidationError(f"unknown method {method!r}")
    queries = [SentenceEmbedding(v, i, "q") for i, v in enumerate(q)]
    candidates = [SentenceEmbedding(v, i, "c") for i, v in enumerate(c)]
    return tatoeba_accuracy(retrieve(queries, candidates, k=1), gold)


def inject_errors(
    corpus: SynthCorpus, errors: Mapping[str, np.ndarray]
) -> dict[str, LanguageMean]:
    """Build means with explicit per-language errors (real minus estimate).

    Formula-level tests use this instead of the naturally induced estimation
    error: the returned mean for language L is ``true_mean[L] - errors[L]``.
    """
    means: dict[str, LanguageMean] = {}
    for lang in corpus.config.languages:
        err = np.asarray(errors[lang], dtype=np.float64)
        if err.shape != (corpus.config.dim,):
            raise ValidationError(f"error vector for {lang!r} must have shape ({corpus.config.dim},)")
        true = corpus.true_means[lang]
        means[lang] = LanguageMean(
            language=lang,
            layer=true.layer,
            vector=(true.vector.astype(np.float64) - err).astype(np.float32),
            token_count=true.token_count,
        )
    return means


def run_sensitivity(
    config: SynthConfig,
    *,
    use_true_means: bool = False,
    injected_errors: Mapping[str, np.ndarray] | None = None,
) -> SensitivityReport:
    """Generate a corpus, estimate means, and measure the three methods.

    Records, per gold pair, the cosine under no shift / mean-difference shift
    / zero-mean, top-1 retrieval accuracy per method, and whether the norm
    chain ``|v2| > |v2 - est_mean2| > max(error norms)`` holds for that pair.
    By default the estimation error arises from the finite mean sample;
    ``injected_errors`` substitutes explicit per-language error vectors and
    ``use_true_means`` forces zero error.
    """
    corpus = generate(config)
    lang1, lang2 = config.languages
    if use_true_means:
        means: Mapping[str, LanguageMean] = corpus.true_means
    elif injected_errors is not None:
        means = inject_errors(corpus, injected_errors)
    else:
        means = estimate_means(corpus)
    errors = estimation_errors(corpus, means)
    delta1, delta2 = errors[lang1], errors[lang2]
    delta = delta1 - delta2
    delta_norms = {
        lang1: float(np.linalg.norm(delta1)),
        lang2: float(np.linalg.norm(delta2)),
        "difference": float(np.linalg.norm(delta)),
    }

    pooled1 = np.stack([e.vector for e in pool_dataset(corpus.datasets[lang1])])
    pooled2 = np.stack([e.vector for e in pool_dataset(corpus.datasets[lang2])])
    m1 = means[lang1].vector.astype(np.float64)
    m2 = means[lang2].vector.astype(np.float64)

    n = config.n_pairs
    cos_raw = np.empty(n)
    cos_mds = np.empty(n)
    cos_zm = np.empty(n)
    for p in range(n):
        diag = cosine_diagnostics(pooled1[p], pooled2[p], means[lang1], means[lang2])
        cos_raw[p], cos_mds[p], cos_zm[p] = diag.raw, diag.mds, diag.zero_mean

    max_err = max(delta_norms.values())
    v2_norms = np.linalg.norm(pooled2, axis=1)
    v2_shifted_norms = np.linalg.norm(pooled2 - m2, axis=1)
    condition = (v2_norms > v2_shifted_norms) & (v2_shifted_norms > max_err)

    accuracies = {
        method: _method_accuracy(pooled1, pooled2, m1, m2, corpus.gold, method)
        for method in METHODS
    }
    return SensitivityReport(
        languages=config.languages,
        seed=config.seed,
        delta_norms=delta_norms,
        accuracies=accuracies,
        cos_raw=cos_raw,
        cos_mds=cos_mds,
        cos_zero_mean=cos_zm,
        condition_flags=condition,
        condition_fraction=float(condition.mean()),
        mean_sample_size=config.mean_sample_size,
    )


def run_sensitivity_seeds(
    config: SynthConfig, n_seeds: int, *, use_true_means: bool = False
) -> list[SensitivityReport]:
    """Run the sensitivity pipeline for seeds ``config.seed .. config.seed+n-1``."""
    if n_seeds < 1:
        raise ValidationError("n_seeds must be >= 1")
    return [
        run_sensitivity(replace(config, seed=config.seed + i), use_true_means=use_true_means)
        for i in range(n_seeds)
    ]


def summarize_sensitivity(reports: list[SensitivityReport]) -> dict:
    """Seed-averaged accuracies, cosines, error norms, and condition rate."""
    if not reports:
        raise ValidationError("no reports to summarize")
    return {
        "n_seeds": len(reports),
        "mean_accuracy": {
            m: float(np.mean([r.accuracies[m] for r in reports])) for m in METHODS
        },
        "mean_cosine": {
            "raw": float(np.mean([r.cos_raw.mean() for r in reports])),
            "mds": float(np.mean([r.cos_mds.mean() for r in reports])),
            "zero_mean": float(np.mean([r.cos_zero_mean.mean() for r in reports])),
        },
        "mean_delta_norms": {
            key: float(np.mean([r.delta_norms[key] for r in reports]))
            for key in reports[0].delta_norms
        },
        "mean_condition_fraction": float(np.mean([r.condition_fraction for r in reports])),
    }
