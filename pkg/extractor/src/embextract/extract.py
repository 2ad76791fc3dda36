"""Run a pretrained encoder over text and dump per-layer token embeddings.

Layer 0 is the embedding output; layer ``l`` is the output of encoder block
``l``. Special tokens (classification/separator markers) are kept in the
dumps and flagged in the manifest so consumers can exclude them. Extraction
is deterministic for fixed model weights, inputs, and batch size.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .formats import write_decode_table, write_dump, write_vocab_tsv

log = logging.getLogger("embextract")


@dataclass
class ExtractionJob:
    model: str
    input_path: str
    language: str
    layers: list[int]
    out_dir: str
    batch_size: int = 8
    max_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.layers:
            raise ValueError("at least one layer index is required")
        if any(l < 0 for l in self.layers):
            raise ValueError("layer indices must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_tokens is not None and self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass
class ExtractionResult:
    dump_paths: dict[int, str]
    vocab_path: str
    n_sentences: int
    n_tokens: int
    n_truncated: int
    n_dropped_by_cap: int
    report: dict = field(default_factory=dict)


def _read_sentences(path: str) -> list[str]:
    lines = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
    sentences = [line for line in lines if line]
    if not sentences:
        raise ValueError(f"no sentences found in {path}")
    return sentences


def load_encoder(model_id: str):
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id, output_hidden_states=True)
    model.eval()
    return tokenizer, model


def extract(job: ExtractionJob) -> ExtractionResult:
    """Encode the input file and write one dump per requested layer."""
    tokenizer, model = load_encoder(job.model)
    depth = model.config.num_hidden_layers
    bad = [l for l in job.layers if l > depth]
    if bad:
        raise ValueError(f"layers {bad} exceed model depth ({depth} blocks)")

    sentences = _read_sentences(job.input_path)
    max_len = getattr(model.config, "max_position_embeddings", None)
    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    per_layer: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {l: [] for l in job.layers}
    n_tokens = 0
    n_truncated = 0
    n_used = 0
    dropped = 0

    with torch.no_grad():
        for start in range(0, len(sentences), job.batch_size):
            if job.max_tokens is not None and n_tokens >= job.max_tokens:
                dropped += len(sentences) - start
                break
            batch = sentences[start : start + job.batch_size]
            encoded = tokenizer(
                batch,
                return_tensors="pt",
                padding=True,
                truncation=True,
                max_length=max_len,
            )
            outputs = model(**encoded)
            hidden = outputs.hidden_states
            mask = encoded["attention_mask"]
            for i, sentence in enumerate(batch):
                n = int(mask[i].sum())
                if job.max_tokens is not None and n_tokens + n > job.max_tokens:
                    dropped += len(sentences) - (start + i)
                    break
                ids = encoded["input_ids"][i, :n].numpy().astype(np.uint32)
                if len(tokenizer(sentence, truncation=False)["input_ids"]) > n:
                    n_truncated += 1
                for layer in job.layers:
                    vecs = hidden[layer][i, :n].numpy().astype(np.float32)
                    per_layer[layer].append((ids, vecs))
                n_tokens += n
                n_used += 1
            else:
                continue
            break

    if n_used == 0:
        raise ValueError("token cap admitted no sentences")

    special_ids = sorted(int(i) for i in tokenizer.all_special_ids)
    dump_paths: dict[int, str] = {}
    for layer in job.layers:
        path = out_dir / f"{job.language}.l{layer}.embd"
        write_dump(
            path,
            language=job.language,
            layer=layer,
            sentences=per_layer[layer],
            special_token_ids=special_ids,
            model_id=job.model,
        )
        dump_paths[layer] = str(path)
        log.info("wrote %s (%d sentences, %d tokens)", path, n_used, n_tokens)

    vocab_path = out_dir / "vocab.tsv"
    id_to_token = {int(i): t for t, i in tokenizer.get_vocab().items()}
    write_vocab_tsv(vocab_path, id_to_token)

    report = {
        "model": job.model,
        "language": job.language,
        "layers": job.layers,
        "n_sentences_input": len(sentences),
        "n_sentences_used": n_used,
        "n_tokens": n_tokens,
        "n_truncated": n_truncated,
        "n_dropped_by_cap": dropped,
        "special_token_ids": special_ids,
    }
    report_path = out_dir / f"{job.language}.extraction.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return ExtractionResult(
        dump_paths=dump_paths,
        vocab_path=str(vocab_path),
        n_sentences=n_used,
        n_tokens=n_tokens,
        n_truncated=n_truncated,
        n_dropped_by_cap=dropped,
        report=report,
    )


def dump_decode_table(model_id: str, path: str | Path) -> None:
    """Export the model's output-embedding matrix as a decode table.

    Prefers an explicit masked-LM head (decoder weight plus bias); falls back
    to the input embeddings when the checkpoint has no head, which is correct
    for tied-embedding models.
    """
    from transformers import AutoModel, AutoModelForMaskedLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    weight = None
    bias = None
    try:
        mlm = AutoModelForMaskedLM.from_pretrained(model_id)
        head = mlm.get_output_embeddings()
        if head is not None:
            weight = head.weight.detach().numpy()
            if getattr(head, "bias", None) is not None:
                bias = head.bias.detach().numpy()
    except (OSError, ValueError) as exc:
        log.info("no masked-LM head available (%s); using input embeddings", exc)
    if weight is None:
        encoder = AutoModel.from_pretrained(model_id)
        weight = encoder.get_input_embeddings().weight.detach().numpy()

    id_to_token = {int(i): t for t, i in tokenizer.get_vocab().items()}
    if len(id_to_token) != weight.shape[0]:
        raise ValueError(
            f"vocabulary size {len(id_to_token)} does not match table rows {weight.shape[0]}"
        )
    write_decode_table(path, language="model", id_to_token=id_to_token, vectors=weight, bias=bias)
