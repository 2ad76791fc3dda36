"""Small binary-IO helpers shared by the on-disk formats.

Everything here is little-endian and position-independent; callers own the
file layout.
"""

from __future__ import annotations

import hashlib
import struct
from typing import BinaryIO

from .errors import FormatError

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


def payload_hash(*chunks: bytes) -> int:
    """64-bit content hash used for corruption detection in dump files."""
    h = hashlib.blake2b(digest_size=8)
    for chunk in chunks:
        h.update(chunk)
    return int.from_bytes(h.digest(), "little")


def hash_hex(value: int) -> str:
    return f"0x{value:016x}"


def read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: expected {n} bytes for {what}, got {len(data)}")
    return data


def read_u32(f: BinaryIO, what: str) -> int:
    return _U32.unpack(read_exact(f, 4, what))[0]


def read_u64(f: BinaryIO, what: str) -> int:
    return _U64.unpack(read_exact(f, 8, what))[0]


def pack_u32(value: int) -> bytes:
    return _U32.pack(value)


def pack_u64(value: int) -> bytes:
    return _U64.pack(value)
