# internal/utils.py

# small helpers (no imports from other project files to avoid cycles)
from __future__ import annotations
import hashlib
from pathlib import Path
from typing import List, Sequence

HASH_CHUNK = 1 << 16


def tokenize(line: str) -> List[str]:
    """Input is pre-tokenized: whitespace split only."""
    return line.split()


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def sha256_file(path: str | Path) -> str:
    """Hex sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(HASH_CHUNK), b""):
            digest.update(chunk)
    return digest.hexdigest()


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in {"1", "true", "yes", "on"}:
        return True
    if t in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def default_max_out(source_len: int) -> int:
    """Output cap used when the caller gives none: 2 x source length + 10."""
    return 2 * source_len + 10
