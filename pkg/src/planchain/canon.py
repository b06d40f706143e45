"""Canonical JSON encoding and hashing shared by records and ledger blocks."""

import hashlib
import json

SIGNIFICANT_DIGITS = 12


def quantize(x: float) -> float:
    """Round a float to 12 significant digits for stable serialization."""
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def _normalize(obj):
    if isinstance(obj, float):
        return quantize(obj)
    if isinstance(obj, dict):
        return {k: _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    return obj


def canonical_json(obj) -> str:
    """Serialize with sorted keys, no insignificant whitespace, quantized floats."""
    return json.dumps(_normalize(obj), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)


def canonical_bytes(obj) -> bytes:
    return canonical_json(obj).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
