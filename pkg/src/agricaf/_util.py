"""Small shared helpers: calendar arithmetic, seeding, atomic file output."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

MONTHS = range(1, 13)


def month_index(year: int, month: int) -> int:
    """Absolute month counter; consecutive months differ by exactly 1."""
    if not 1 <= month <= 12:
        raise ValueError(f"month {month} outside 1..12")
    return year * 12 + (month - 1)


def index_to_month(idx: int) -> tuple[int, int]:
    return idx // 12, idx % 12 + 1


def shift_month(year: int, month: int, delta: int) -> tuple[int, int]:
    return index_to_month(month_index(year, month) + delta)


def derive_seed(base: int, *parts) -> int:
    """Derive a stable 63-bit stream seed from a base seed and a key path.

    Uses SHA-256 of the repr of the key so results are identical across
    platforms and process layouts (workers inherit nothing stateful).
    """
    digest = hashlib.sha256(repr((int(base),) + tuple(parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, no locale-sensitive formatting."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via temp file + rename so interrupted runs never leave partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
