"""FNV-1a content hashes and canonical JSON encoding."""

from __future__ import annotations

import json
from typing import Any

_FNV64_OFFSET = 0xCBF29CE484222325
_FNV64_PRIME = 0x100000001B3
_FNV32_OFFSET = 0x811C9DC5
_FNV32_PRIME = 0x01000193
_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


def fnv1a_64(data: bytes | str) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV64_PRIME) & _MASK64
    return h


def fnv1a_32(data: bytes | str) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV32_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV32_PRIME) & _MASK32
    return h


def fnv16(data: bytes | str) -> str:
    """64-bit FNV-1a as 16 lowercase hex chars."""
    return f"{fnv1a_64(data):016x}"


def fnv8(data: bytes | str) -> str:
    """32-bit FNV-1a as 8 lowercase hex chars."""
    return f"{fnv1a_32(data):08x}"


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
