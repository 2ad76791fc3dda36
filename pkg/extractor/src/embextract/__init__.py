"""Encoder-to-dump adapter: extracts per-layer token embeddings into the
langshift file formats."""

__version__ = "0.1.0"

from .extract import ExtractionJob, ExtractionResult, dump_decode_table, extract
from .formats import (
    read_decode_table,
    read_dump,
    write_decode_table,
    write_dump,
    write_vocab_tsv,
)
