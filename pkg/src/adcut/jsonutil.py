"""Canonical JSON helpers shared by every module that writes wire or file bytes.

Canonical form: UTF-8, no insignificant whitespace, keys emitted in the
order the producing code inserts them (never alphabetically re-sorted).
Identical values always produce identical bytes.
"""

import json
from typing import Any

__all__ = ["dumps_canonical", "loads"]


def dumps_canonical(obj: Any) -> bytes:
    """Serialize to canonical JSON bytes (compact, UTF-8, insertion order)."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def loads(data: bytes | str) -> Any:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return json.loads(data)
