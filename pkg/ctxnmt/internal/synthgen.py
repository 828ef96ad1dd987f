# internal/synthgen.py

# synthetic document corpus whose correct translation needs cross-sentence context:
# the first sentence names a topic, later ambiguous words translate by that topic

from __future__ import annotations
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .corpus import DocumentCorpus, format_documents
from .errors import ConfigError, ContractError, ParseError

TOPIC = "topic_{}"
AMBIGUOUS = "amb_{}"
FILLER = "w{}"
SENSE = "SENSE_{}_{}"  # ambiguous index, topic index
SENSE_PREFIX = "SENSE_"
KEY_HEADER = "# docs="


@dataclass(frozen=True)
class SynthSpec:
    n_docs: int = 100
    sentences_per_doc: int = 4
    n_topics: int = 2
    n_ambiguous: int = 4
    filler_vocab: int = 50
    ambiguity_rate: float = 0.5
    seed: int = 0
    min_len: int = 4
    max_len: int = 8
    repeat_rate: float = 0.0  # chance an ambiguous sentence reuses the previous ambiguous word

    def __post_init__(self) -> None:
        minimum = {"n_docs": 1, "sentences_per_doc": 2, "n_topics": 2, "n_ambiguous": 1, "filler_vocab": 1, "min_len": 1}
        for name, low in minimum.items():
            if getattr(self, name) < low:
                raise ConfigError(f"{name} must be >= {low}, got {getattr(self, name)}")
        if self.max_len < self.min_len:
            raise ConfigError(f"max_len ({self.max_len}) < min_len ({self.min_len})")
        for name in ("ambiguity_rate", "repeat_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {getattr(self, name)}")


@dataclass(frozen=True)
class KeyEntry:
    doc: int
    sentence: int
    position: int
    sense: str

    @property
    def word(self) -> int:
        """Index of the ambiguous word this entry resolves."""
        return int(self.sense.split("_")[1])


@dataclass
class AnswerKey:
    n_docs: int
    entries: List[KeyEntry] = field(default_factory=list)

    def positions(self) -> set:
        return {(e.doc, e.sentence, e.position) for e in self.entries}

    def to_text(self) -> str:
        lines = [f"{KEY_HEADER}{self.n_docs}"]
        lines += [f"{e.doc} {e.sentence} {e.position} {e.sense}" for e in self.entries]
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AnswerKey":
        n_docs: Optional[int] = None
        entries: List[KeyEntry] = []
        for number, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            if line.startswith(KEY_HEADER):
                n_docs = int(line[len(KEY_HEADER):])
                continue
            parts = line.split()
            if len(parts) != 4 or not parts[3].startswith(SENSE_PREFIX):
                raise ParseError(f"{path}:{number}: expected 'doc sentence position sense', got {line!r}")
            try:
                entries.append(KeyEntry(int(parts[0]), int(parts[1]), int(parts[2]), parts[3]))
            except ValueError:
                raise ParseError(f"{path}:{number}: non-integer index in {line!r}") from None
        if n_docs is None:
            raise ParseError(f"{path}: missing '{KEY_HEADER}N' header")
        return cls(n_docs, entries)


@dataclass
class SynthCorpus:
    source: List[List[List[str]]]
    target: List[List[List[str]]]
    key: AnswerKey

    def as_corpus(self) -> DocumentCorpus:
        return DocumentCorpus([list(zip(s, t)) for s, t in zip(self.source, self.target)])

    def write(self, prefix: str | Path) -> Tuple[Path, Path, Path]:
        """<prefix>.src, <prefix>.tgt, <prefix>.key"""
        prefix = Path(prefix)
        paths = tuple(prefix.with_name(prefix.name + ext) for ext in (".src", ".tgt", ".key"))
        paths[0].write_text(format_documents(self.source), encoding="utf-8")
        paths[1].write_text(format_documents(self.target), encoding="utf-8")
        self.key.save(paths[2])
        return paths


def generate(spec: SynthSpec) -> SynthCorpus:
    """
    Deterministic in spec.seed. Sentence 0 of every document carries the
    topic marker; ambiguous words only ever appear in later sentences, so
    their sense is recoverable from context alone.
    """
    rng = np.random.default_rng(spec.seed)
    source: List[List[List[str]]] = []
    target: List[List[List[str]]] = []
    key = AnswerKey(spec.n_docs)
    for d in range(spec.n_docs):
        topic = int(rng.integers(spec.n_topics))
        src_doc, tgt_doc = [], []
        previous: Optional[int] = None
        for s in range(spec.sentences_per_doc):
            length = int(rng.integers(spec.min_len, spec.max_len + 1))
            src = [FILLER.format(int(i)) for i in rng.integers(spec.filler_vocab, size=length)]
            tgt = list(src)
            if s == 0:
                pos = int(rng.integers(length))
                src[pos] = TOPIC.format(topic)
                tgt[pos] = src[pos].upper()
            elif rng.random() < spec.ambiguity_rate:
                pos = int(rng.integers(length))
                if previous is not None and rng.random() < spec.repeat_rate:
                    word = previous
                else:
                    word = int(rng.integers(spec.n_ambiguous))
                previous = word
                src[pos] = AMBIGUOUS.format(word)
                tgt[pos] = SENSE.format(word, topic)
                key.entries.append(KeyEntry(d, s, pos, tgt[pos]))
            src_doc.append(src)
            tgt_doc.append(tgt)
        source.append(src_doc)
        target.append(tgt_doc)
    return SynthCorpus(source, target, key)


# ================================ scoring ================================
def _check_alignment(hyps: Sequence[Sequence[Sequence[str]]], key: AnswerKey) -> None:
    if len(hyps) != key.n_docs:
        raise ContractError(f"{len(hyps)} hypothesis documents but the key covers {key.n_docs}")


def _correct(hyps, entry: KeyEntry) -> bool:
    """The hypothesis sentence contains the expected sense somewhere (position-free)."""
    if entry.sentence >= len(hyps[entry.doc]):
        return False
    return entry.sense in hyps[entry.doc][entry.sentence]


def score_senses(hyps: Sequence[Sequence[Sequence[str]]], key: AnswerKey) -> float:
    """Fraction of key entries whose sense appears in the hypothesis sentence (1.0 for an empty key)."""
    _check_alignment(hyps, key)
    if not key.entries:
        return 1.0
    return sum(_correct(hyps, e) for e in key.entries) / len(key.entries)


def _chosen_sense(hyps, entry: KeyEntry) -> Optional[str]:
    """First sense of the entry's ambiguous word in the hypothesis sentence, if any."""
    if entry.sentence >= len(hyps[entry.doc]):
        return None
    prefix = f"{SENSE_PREFIX}{entry.word}_"
    return next((tok for tok in hyps[entry.doc][entry.sentence] if tok.startswith(prefix)), None)


def repeated_groups(key: AnswerKey) -> List[List[KeyEntry]]:
    """Key entries grouped by (document, ambiguous word), groups of two or more only."""
    groups: Dict[Tuple[int, int], List[KeyEntry]] = defaultdict(list)
    for entry in key.entries:
        groups[(entry.doc, entry.word)].append(entry)
    return [g for _, g in sorted(groups.items()) if len(g) > 1]


def _consistent(hyps, group: Sequence[KeyEntry]) -> bool:
    """Every occurrence of the word got the same sense, and it is the correct one."""
    return {_chosen_sense(hyps, e) for e in group} == {group[0].sense}


def score_consistency(hyps: Sequence[Sequence[Sequence[str]]], key: AnswerKey) -> Optional[float]:
    """
    Fraction of repeated ambiguous words translated with the one correct
    sense throughout their document. None when no word repeats.
    """
    _check_alignment(hyps, key)
    groups = repeated_groups(key)
    if not groups:
        return None
    return sum(_consistent(hyps, g) for g in groups) / len(groups)


@dataclass(frozen=True)
class ErrorCounts:
    total: int  # errors of the reference system
    fixed: int  # reference wrong, compared system right
    new: int    # reference right, compared system wrong


def error_analysis(baseline_hyps, system_hyps, key: AnswerKey) -> Dict[str, ErrorCounts]:
    """Ambiguity and inconsistency errors of a baseline, and how many a second system fixes or adds."""
    _check_alignment(baseline_hyps, key)
    _check_alignment(system_hyps, key)

    def tally(items, ok) -> ErrorCounts:
        total = fixed = new = 0
        for item in items:
            base_ok, sys_ok = ok(baseline_hyps, item), ok(system_hyps, item)
            total += not base_ok
            fixed += (not base_ok) and sys_ok
            new += base_ok and not sys_ok
        return ErrorCounts(total, fixed, new)

    ambiguity = tally(key.entries, _correct)
    inconsistency = tally(repeated_groups(key), _consistent)
    return {
        "ambiguity": ambiguity,
        "inconsistency": inconsistency,
        "all": ErrorCounts(ambiguity.total + inconsistency.total,
                           ambiguity.fixed + inconsistency.fixed,
                           ambiguity.new + inconsistency.new),
    }
