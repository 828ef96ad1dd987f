# internal/checkpoint.py

# model file: magic, text metadata, then every parameter as (name, rank, extents, float32 data)
#
#   b"CTXNMT01"
#   u64 metadata length, metadata (utf-8 `key = value` lines)
#   per parameter, in store order:
#     u64 name length, name bytes, u64 rank, rank x u64 extents, row-major <f4 values

from __future__ import annotations
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .corpus import Vocabulary
from .errors import ConfigError, IntegrityError
from .model import StrategyConfig, TranslationModel
from .utils import sha256_file

MAGIC = b"CTXNMT01"
FORMAT_VERSION = "1"
U64 = np.dtype("<u8")
F32 = np.dtype("<f4")


def _u64(n: int) -> bytes:
    return np.array([n], dtype=U64).tobytes()


def vocab_paths(model_path: str | Path) -> Tuple[Path, Path]:
    """Vocabularies travel next to the model file."""
    model_path = Path(model_path)
    return (model_path.with_name(model_path.name + ".src.vocab"),
            model_path.with_name(model_path.name + ".tgt.vocab"))


def save_model(model: TranslationModel, path: str | Path, src_vocab: Optional[Vocabulary] = None,
               tgt_vocab: Optional[Vocabulary] = None) -> None:
    path = Path(path)
    metadata: Dict[str, str] = {"format_version": FORMAT_VERSION}
    metadata.update(model.config.as_dict())
    metadata["seed"] = str(model.seed)
    metadata["n_params"] = str(len(model.store))
    if src_vocab is not None and tgt_vocab is not None:
        for side, vocab, vpath in zip(("src", "tgt"), (src_vocab, tgt_vocab), vocab_paths(path)):
            vocab.save(vpath)
            metadata[f"{side}_vocab"] = vpath.name
            metadata[f"{side}_vocab_sha256"] = sha256_file(vpath)
    meta_bytes = "".join(f"{k} = {v}\n" for k, v in metadata.items()).encode("utf-8")

    chunks = [MAGIC, _u64(len(meta_bytes)), meta_bytes]
    for name, entry in model.store.items():
        encoded = name.encode("utf-8")
        value = entry.value
        chunks += [_u64(len(encoded)), encoded, _u64(value.ndim)]
        chunks += [_u64(n) for n in value.shape]
        chunks.append(np.ascontiguousarray(value, dtype=F32).tobytes())
    path.write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, data: bytes, path: Path) -> None:
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if n < 0 or self.offset + n > len(self.data):
            raise IntegrityError(f"{self.path}: truncated {what} at offset {self.offset}")
        out = self.data[self.offset:self.offset + n]
        self.offset += n
        return out

    def u64(self, what: str) -> int:
        return int(np.frombuffer(self.take(8, what), dtype=U64)[0])


def load_model(path: str | Path, precision: int = 32) -> Tuple[TranslationModel, Dict[str, str]]:
    """Rebuild the model from its file; returns (model, metadata)."""
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except OSError as exc:
        raise IntegrityError(f"cannot read model {path}: {exc.strerror}") from None
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise IntegrityError(f"{path}: bad magic at offset 0 (not a model file or unsupported version)")
    meta_len = reader.u64("metadata length")
    meta_offset = reader.offset
    metadata = _parse_metadata(reader.take(meta_len, "metadata"), path, meta_offset)
    if metadata.get("format_version") != FORMAT_VERSION:
        raise IntegrityError(f"{path}: unsupported format version {metadata.get('format_version')!r}")
    try:
        config = StrategyConfig.from_dict(metadata)
        model = TranslationModel(config, seed=int(metadata.get("seed", "0")), precision=precision)
    except (ConfigError, ValueError) as exc:
        raise IntegrityError(f"{path}: metadata at offset {meta_offset} describes no valid model ({exc})") from None

    expected = list(model.store)
    if int(metadata.get("n_params", len(expected))) != len(expected):
        raise IntegrityError(f"{path}: file holds {metadata['n_params']} parameters, model needs {len(expected)}")
    for name in expected:
        start = reader.offset
        length = reader.u64("parameter name length")
        found = reader.take(length, "parameter name").decode("utf-8", errors="replace")
        if found != name:
            raise IntegrityError(f"{path}: expected parameter {name!r} at offset {start}, found {found!r}")
        rank = reader.u64(f"rank of {name}")
        shape = tuple(reader.u64(f"extent of {name}") for _ in range(rank))
        if shape != model.store.value(name).shape:
            raise IntegrityError(f"{path}: parameter {name!r} at offset {start} has shape {shape}, "
                                 f"expected {model.store.value(name).shape}")
        count = int(np.prod(shape))
        values = np.frombuffer(reader.take(count * F32.itemsize, f"values of {name}"), dtype=F32)
        model.store.set_value(name, values.reshape(shape))
    if reader.offset != len(reader.data):
        raise IntegrityError(f"{path}: {len(reader.data) - reader.offset} trailing bytes at offset {reader.offset}")
    return model, metadata


def _parse_metadata(raw: bytes, path: Path, offset: int) -> Dict[str, str]:
    values: Dict[str, str] = {}
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise IntegrityError(f"{path}: metadata at offset {offset} is not UTF-8") from None
    for line in text.splitlines():
        if not line.strip():
            continue
        if "=" not in line:
            raise IntegrityError(f"{path}: malformed metadata line {line!r} in block at offset {offset}")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key] = value
    return values


def load_vocabularies(model_path: str | Path, metadata: Dict[str, str]) -> Tuple[Vocabulary, Vocabulary]:
    """Load the vocabularies stored next to the model and check them against the recorded hashes."""
    out = []
    for side, vpath in zip(("src", "tgt"), vocab_paths(model_path)):
        recorded = metadata.get(f"{side}_vocab_sha256")
        if recorded is None:
            raise IntegrityError(f"{model_path}: no {side} vocabulary recorded in the model file")
        if not vpath.exists():
            raise IntegrityError(f"{model_path}: missing vocabulary file {vpath}")
        if sha256_file(vpath) != recorded:
            raise IntegrityError(f"{vpath}: sha256 does not match the hash recorded in {model_path}")
        out.append(Vocabulary.load(vpath))
    return out[0], out[1]
