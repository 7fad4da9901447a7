"""Canonical JSON serialization and digests.

All legally significant documents (frames, envelopes, receipts, store dumps,
decision traces, gazette) serialize to one canonical form so that digests and
signatures are reproducible by independent parties:

* UTF-8 JSON, keys lexicographically sorted, no insignificant whitespace;
* integers decimal, no floats (rejected: not byte-stable across platforms);
* timestamps RFC 3339 UTC with seconds precision (``2026-06-01T12:00:00Z``);
* idempotent: canonicalizing parsed canonical bytes yields the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from datetime import datetime, timezone

Scalar = str | int | bool | None


def to_rfc3339(at: datetime) -> str:
    """Format a timezone-aware instant as RFC 3339 UTC, seconds precision."""
    if at.tzinfo is None:
        raise ValueError("naive datetime not allowed; instants must be timezone-aware")
    return at.astimezone(timezone.utc).replace(microsecond=0).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_rfc3339(text: str) -> datetime:
    """Parse an RFC 3339 UTC instant (``Z`` or numeric offset)."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    at = datetime.fromisoformat(text)
    if at.tzinfo is None:
        raise ValueError(f"instant {text!r} has no timezone")
    return at.astimezone(timezone.utc)


def _normalize(value):
    if isinstance(value, datetime):
        return to_rfc3339(value)
    if isinstance(value, float):
        raise ValueError("floats are not representable in canonical form")
    if isinstance(value, dict):
        out = {}
        for key, item in value.items():
            if not isinstance(key, str):
                raise ValueError("canonical objects require string keys")
            out[key] = _normalize(item)
        return out
    if isinstance(value, (list, tuple)):
        return [_normalize(item) for item in value]
    if isinstance(value, (set, frozenset)):
        raise ValueError("sets must be sorted into lists before canonicalization")
    if value is None or isinstance(value, (str, int, bool)):
        return value
    raise ValueError(f"value of type {type(value).__name__} is not canonicalizable")


def canonical_bytes(document) -> bytes:
    """Serialize a document to canonical JSON bytes."""
    normalized = _normalize(document)
    return json.dumps(
        normalized, sort_keys=True, separators=(",", ":"), ensure_ascii=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest(document) -> str:
    """SHA-256 hex digest of a document's canonical bytes."""
    return sha256_hex(canonical_bytes(document))
