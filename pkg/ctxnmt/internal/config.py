# internal/config.py

# run configuration: flat `key = value` text, `#` comments, named size profiles

from __future__ import annotations
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Dict, Mapping, Optional

from .errors import ConfigError, ParseError
from .model import Strategy, StrategyConfig

SEED_ENV = "CTXNMT_SEED"

# size defaults of the toy profile; everything else keeps its default
PROFILES: Dict[str, Dict[str, object]] = {
    "default": {},
    "toy": {
        "emb_dim": 32, "enc_hidden": 64, "dec_hidden": 64, "d_ctx": 64, "attn_dim": 64,
        "readout_dim": 32, "batch_size": 32, "src_vocab_cap": 200, "tgt_vocab_cap": 200,
        "lr": 0.002, "epochs": 30,
    },
}


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or not raw.strip():
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class RunConfig:
    profile: str = "default"
    strategy: str = Strategy.BASELINE.value
    K: int = 3
    emb_dim: int = 600
    enc_hidden: int = 1000
    dec_hidden: int = 1000
    d_ctx: int = 1000
    attn_dim: int = 1000
    readout_dim: int = 600
    src_vocab_cap: int = 35000
    tgt_vocab_cap: int = 35000
    max_len: int = 80
    batch_size: int = 80
    lr: float = 0.001
    clip_norm: float = 1.0
    epochs: int = 20
    patience: int = 5
    beam: int = 1
    seed: int = 0
    precision: int = 32

    def __post_init__(self) -> None:
        if self.profile not in PROFILES:
            raise ConfigError(f"unknown profile {self.profile!r} (expected one of {', '.join(PROFILES)})")
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy).value)
        for name in ("src_vocab_cap", "tgt_vocab_cap"):
            if getattr(self, name) < 5:
                raise ConfigError(f"{name} must be >= 5, got {getattr(self, name)}")
        for name in ("batch_size", "epochs", "beam"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.patience < 0:
            raise ConfigError(f"patience must be >= 0, got {self.patience}")
        if self.lr <= 0 or self.clip_norm <= 0:
            raise ConfigError(f"lr and clip_norm must be positive, got {self.lr} / {self.clip_norm}")
        if self.precision not in (32, 64):
            raise ConfigError(f"precision must be 32 or 64, got {self.precision}")

    def strategy_config(self, src_vocab_size: int, tgt_vocab_size: int) -> StrategyConfig:
        return StrategyConfig(
            strategy=Strategy.parse(self.strategy), K=self.K, emb_dim=self.emb_dim,
            enc_hidden=self.enc_hidden, dec_hidden=self.dec_hidden, d_ctx=self.d_ctx,
            attn_dim=self.attn_dim, readout_dim=self.readout_dim,
            src_vocab_size=src_vocab_size, tgt_vocab_size=tgt_vocab_size, max_len=self.max_len)

    def with_overrides(self, **values) -> "RunConfig":
        return replace(self, **{k: v for k, v in values.items() if v is not None})


def _coerce(name: str, raw: str, kind) -> object:
    if kind in (str, "str"):
        return raw
    try:
        if kind in (int, "int"):
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"{name}: expected {'an integer' if kind in (int, 'int') else 'a number'}, got {raw!r}") from None


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def config_from_mapping(values: Mapping[str, object], base: Optional[RunConfig] = None) -> RunConfig:
    """Build a RunConfig: defaults (seed from the environment) < profile < explicit values."""
    unknown = sorted(set(values) - set(_FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    typed = {k: _coerce(k, v, _FIELD_TYPES[k]) if isinstance(v, str) else v for k, v in values.items()}
    start = base if base is not None else RunConfig(seed=default_seed())
    profile = str(typed.get("profile", start.profile))
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r} (expected one of {', '.join(PROFILES)})")
    merged = {**asdict(start), **PROFILES[profile], **typed, "profile": profile}
    return RunConfig(**merged)


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    values: Dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(f"{source}:{number}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if not key or not value:
            raise ParseError(f"{source}:{number}: empty key or value in {line.strip()!r}")
        if key in values:
            raise ParseError(f"{source}:{number}: duplicate key {key!r}")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{number}: unknown config key {key!r}")
        values[key] = value
    return values


def load_config(path: str | Path, profile: Optional[str] = None) -> RunConfig:
    """A `profile` replaces the file's profile; keys the file sets explicitly still win over it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    values: Dict[str, object] = dict(parse_config_text(text, str(path)))
    if profile:
        values["profile"] = profile
    try:
        return config_from_mapping(values)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def dump_config(config: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(config).items())


def save_config(config: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dump_config(config), encoding="utf-8")
