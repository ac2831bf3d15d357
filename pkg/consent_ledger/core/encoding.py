"""Canonical byte encodings shared by signing, hashing and ledger storage."""

import hashlib
import json
from typing import Any, Iterable, Union

Part = Union[str, bytes, int]


def length_prefixed(parts: Iterable[Part]) -> bytes:
    """Concatenate parts, each preceded by its 8-byte big-endian length."""
    out = bytearray()
    for part in parts:
        if isinstance(part, bool):
            part = "1" if part else "0"
        if isinstance(part, int):
            part = str(part)
        data = part.encode("utf-8") if isinstance(part, str) else bytes(part)
        out += len(data).to_bytes(8, "big")
        out += data
    return bytes(out)


def canonical_json(value: Any) -> str:
    """Deterministic JSON text: sorted keys, no whitespace, ASCII only."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: Union[str, bytes]) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()
