"""Writers (and test readers) for the langshift on-disk formats.

Implemented against the published layouts rather than the langshift code, so
the files double as a conformance check between the two packages.

Dump layout (little-endian): magic ``EMBD`` | u32 version (1) | u32 layer |
u32 dim | u64 sentence_count | u64 token_count | u64 offsets x sentences |
u32 token ids x tokens | f32 vectors x tokens x dim | u64 payload hash
(64-bit BLAKE2b of offsets+ids+vectors). A JSON manifest
``<dump>.manifest.json`` carries language, per-section checksums, and counts.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EMBD"
TABLE_MAGIC = b"DTBL"
FORMAT_VERSION = 1


def content_hash(*chunks: bytes) -> int:
    h = hashlib.blake2b(digest_size=8)
    for chunk in chunks:
        h.update(chunk)
    return int.from_bytes(h.digest(), "little")


def hash_hex(value: int) -> str:
    return f"0x{value:016x}"


def write_dump(
    path: str | Path,
    language: str,
    layer: int,
    sentences: list[tuple[np.ndarray, np.ndarray]],
    special_token_ids: list[int],
    model_id: str,
) -> None:
    """Write one (language, layer) dump plus its manifest sidecar.

    ``sentences`` is a list of (token_ids, vectors) pairs; vectors are cast
    to float32.
    """
    if not sentences:
        raise ValueError("refusing to write an empty dump")
    dim = int(sentences[0][1].shape[1])
    offsets = []
    pos = 0
    for ids, vecs in sentences:
        if len(ids) != vecs.shape[0] or vecs.shape[1] != dim or len(ids) == 0:
            raise ValueError("malformed sentence passed to write_dump")
        offsets.append(pos)
        pos += len(ids)
    token_count = pos

    offsets_b = np.asarray(offsets, dtype="<u8").tobytes()
    ids_b = np.concatenate([np.asarray(ids, dtype="<u4") for ids, _ in sentences]).tobytes()
    vectors_b = np.concatenate(
        [np.asarray(vecs, dtype="<f4") for _, vecs in sentences]
    ).tobytes()
    digest = content_hash(offsets_b, ids_b, vectors_b)

    header = MAGIC + struct.pack(
        "<IIIQQ", FORMAT_VERSION, layer, dim, len(sentences), token_count
    )
    Path(path).write_bytes(header + offsets_b + ids_b + vectors_b + struct.pack("<Q", digest))

    manifest = {
        "format_version": FORMAT_VERSION,
        "layer": layer,
        "dim": dim,
        "languages": [language],
        "files": {
            Path(path).name: {
                "sections": {
                    "offsets": hash_hex(content_hash(offsets_b)),
                    "token_ids": hash_hex(content_hash(ids_b)),
                    "vectors": hash_hex(content_hash(vectors_b)),
                    "payload": hash_hex(digest),
                }
            }
        },
        "token_counts": {language: token_count},
        "sentence_counts": {language: len(sentences)},
        "special_token_ids": sorted(special_token_ids),
        "model": model_id,
    }
    Path(str(path) + ".manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_dump(path: str | Path) -> tuple[int, int, np.ndarray, np.ndarray, np.ndarray]:
    """Read a dump back: (layer, dim, offsets, token_ids, vectors)."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"bad magic in {path}")
    version, layer, dim, n_sentences, n_tokens = struct.unpack("<IIIQQ", raw[4:32])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported version {version}")
    pos = 32
    offsets = np.frombuffer(raw, dtype="<u8", count=n_sentences, offset=pos)
    pos += 8 * n_sentences
    ids = np.frombuffer(raw, dtype="<u4", count=n_tokens, offset=pos)
    pos += 4 * n_tokens
    vectors = np.frombuffer(raw, dtype="<f4", count=n_tokens * dim, offset=pos).reshape(
        n_tokens, dim
    )
    pos += 4 * n_tokens * dim
    (stored,) = struct.unpack("<Q", raw[pos : pos + 8])
    if stored != content_hash(offsets.tobytes(), ids.tobytes(), vectors.tobytes()):
        raise ValueError(f"payload hash mismatch in {path}")
    return layer, dim, offsets, ids, vectors


def _sanitize(token: str) -> str:
    return token.replace("\t", "\\t").replace("\n", "\\n") or "<empty>"


def write_vocab_tsv(path: str | Path, id_to_token: dict[int, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for token_id in sorted(id_to_token):
            f.write(f"{token_id}\t{_sanitize(id_to_token[token_id])}\n")


def write_decode_table(
    path: str | Path,
    language: str,
    id_to_token: dict[int, str],
    vectors: np.ndarray,
    bias: np.ndarray | None,
) -> None:
    """Write a decode table: rows must follow ascending token-id order."""
    ids = sorted(id_to_token)
    if len(ids) != vectors.shape[0]:
        raise ValueError("vector rows do not match vocabulary size")
    header = json.dumps(
        {
            "language": language,
            "source": "tsv",
            "dim": int(vectors.shape[1]),
            "count": len(ids),
            "has_bias": bias is not None,
        },
        sort_keys=True,
    ).encode("utf-8")
    tsv = "".join(f"{i}\t{_sanitize(id_to_token[i])}\n" for i in ids).encode("utf-8")
    vec_b = np.asarray(vectors, dtype="<f4").tobytes()
    bias_b = np.asarray(bias, dtype="<f4").tobytes() if bias is not None else b""
    digest = content_hash(tsv, vec_b, bias_b)
    with open(path, "wb") as f:
        f.write(TABLE_MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        f.write(header)
        f.write(struct.pack("<Q", len(tsv)))
        f.write(tsv)
        f.write(vec_b)
        f.write(bias_b)
        f.write(struct.pack("<Q", digest))


def read_decode_table(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Read a decode table back: (ids, vectors, bias)."""
    raw = Path(path).read_bytes()
    if raw[:4] != TABLE_MAGIC:
        raise ValueError(f"bad decode-table magic in {path}")
    version, header_len = struct.unpack("<II", raw[4:12])
    header = json.loads(raw[12 : 12 + header_len].decode("utf-8"))
    pos = 12 + header_len
    (tsv_len,) = struct.unpack("<Q", raw[pos : pos + 8])
    pos += 8
    tsv = raw[pos : pos + tsv_len].decode("utf-8")
    pos += tsv_len
    count, dim = header["count"], header["dim"]
    vectors = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=pos).reshape(count, dim)
    pos += 4 * count * dim
    bias = None
    if header["has_bias"]:
        bias = np.frombuffer(raw, dtype="<f4", count=count, offset=pos)
    ids = np.array([int(line.split("\t")[0]) for line in tsv.splitlines()], dtype=np.int64)
    return ids, vectors, bias
