# internal/corpus.py

# document-aware parallel corpus: parsing, vocabularies, context windows, batching

from __future__ import annotations
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .context import ContextWindow
from .errors import ConfigError, ContractError, ParseError
from .log import dprint
from .utils import detokenize, tokenize

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")
MIN_VOCAB_CAP = len(RESERVED) + 1

Sentence = List[str]
Document = List[Sentence]


# ================================ vocabulary ================================
@dataclass
class Vocabulary:
    itos: List[str]
    coverage: float = 1.0  # fraction of running tokens the vocabulary keeps
    stoi: Dict[str, int] = field(init=False)

    def __post_init__(self) -> None:
        if tuple(self.itos[:len(RESERVED)]) != RESERVED:
            raise ContractError("vocabulary must start with the reserved tokens")
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.stoi.get(tok, UNK) for tok in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        """ids -> tokens, dropping pad/bos/eos."""
        return [self.itos[i] for i in ids if i not in (PAD, BOS, EOS)]

    def save(self, path: str | Path) -> None:
        """One token per line, the 4 reserved tokens first; id = line index (0-based)."""
        Path(path).write_text("".join(tok + "\n" for tok in self.itos), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = _read_lines(path)
        if tuple(lines[:len(RESERVED)]) != RESERVED:
            raise ParseError(f"{path}:1: vocabulary must start with {' '.join(RESERVED)}")
        for number, tok in enumerate(lines, start=1):
            if not tok or len(tokenize(tok)) != 1 or tok != tok.strip():
                raise ParseError(f"{path}:{number}: malformed vocabulary entry {tok!r}")
        if len(set(lines)) != len(lines):
            raise ParseError(f"{path}: duplicate vocabulary entries")
        return cls(lines)


def build_vocab(sentences: Iterable[Sequence[str]], cap: int) -> Vocabulary:
    """Reserved tokens + the (cap - 4) most frequent tokens; ties broken lexicographically."""
    if cap < MIN_VOCAB_CAP:
        raise ConfigError(f"vocabulary cap must be >= {MIN_VOCAB_CAP}, got {cap}")
    counts: Counter = Counter()
    for sentence in sentences:
        counts.update(sentence)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [tok for tok, _ in ranked if tok not in RESERVED][:cap - len(RESERVED)]
    total = sum(counts.values())
    covered = sum(counts[tok] for tok in kept)
    coverage = covered / total if total else 1.0
    return Vocabulary(list(RESERVED) + kept, coverage=coverage)


# ================================ corpus ================================
@dataclass
class DocumentCorpus:
    """Documents of aligned (source tokens, target tokens) pairs, order preserved."""
    documents: List[List[Tuple[Sentence, Sentence]]]

    @property
    def n_documents(self) -> int:
        return len(self.documents)

    @property
    def n_pairs(self) -> int:
        return sum(len(doc) for doc in self.documents)

    @property
    def doc_sizes(self) -> List[int]:
        return [len(doc) for doc in self.documents]

    def side(self, which: str) -> List[Document]:
        index = {"source": 0, "target": 1}[which]
        return [[pair[index] for pair in doc] for doc in self.documents]

    def sentences(self, which: str) -> Iterator[Sentence]:
        for doc in self.side(which):
            yield from doc


def _read_lines(path: str | Path) -> List[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc})") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # final newline
    return lines


def _segment(lines: Sequence[str], path: str | Path) -> List[Tuple[int, Document]]:
    """Blank-line separated documents -> [(first line number, sentences)]."""
    documents: List[Tuple[int, Document]] = []
    current: Document = []
    start = 1
    for number, line in enumerate(lines, start=1):
        if line.strip():
            if not current:
                start = number
            current.append(tokenize(line))
            continue
        if not current:
            raise ParseError(f"{path}:{number}: empty document (consecutive or leading blank line)")
        documents.append((start, current))
        current = []
    if current:
        documents.append((start, current))
    return documents


def parse_documents(path: str | Path) -> List[Document]:
    """One side of the corpus format (used for translation input and references)."""
    return [doc for _, doc in _segment(_read_lines(path), path)]


def parse_parallel(src_path: str | Path, tgt_path: str | Path) -> DocumentCorpus:
    """
    One tokenized sentence per line, a single blank line ends a document, and
    blank lines must sit on the same line numbers in both files.
    """
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    for number, (s, t) in enumerate(zip(src_lines, tgt_lines), start=1):
        if bool(s.strip()) != bool(t.strip()):
            blank, other = (src_path, tgt_path) if not s.strip() else (tgt_path, src_path)
            raise ParseError(f"line {number}: document boundary misaligned "
                             f"(blank in {blank}, sentence in {other})")

    src_docs = _segment(src_lines, src_path)
    tgt_docs = _segment(tgt_lines, tgt_path)
    for index in range(max(len(src_docs), len(tgt_docs))):
        if index >= len(src_docs) or index >= len(tgt_docs):
            raise ParseError(f"document {index}: present in only one of {src_path}, {tgt_path}")
        (s_start, s_doc), (t_start, t_doc) = src_docs[index], tgt_docs[index]
        if len(s_doc) != len(t_doc):
            raise ParseError(
                f"document {index}: {len(s_doc)} source sentences (lines {s_start}-{s_start + len(s_doc) - 1}) "
                f"vs {len(t_doc)} target sentences (lines {t_start}-{t_start + len(t_doc) - 1})")

    documents = [list(zip(s_doc, t_doc)) for (_, s_doc), (_, t_doc) in zip(src_docs, tgt_docs)]
    return DocumentCorpus(documents)


def format_documents(documents: Sequence[Sequence[Sequence[str]]]) -> str:
    """Inverse of parse_documents: blank line between documents, none after the last."""
    blocks = ["\n".join(detokenize(sentence) for sentence in doc) for doc in documents]
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def write_parallel(corpus: DocumentCorpus, src_path: str | Path, tgt_path: str | Path) -> None:
    Path(src_path).write_text(format_documents(corpus.side("source")), encoding="utf-8")
    Path(tgt_path).write_text(format_documents(corpus.side("target")), encoding="utf-8")


# ================================ examples & windows ================================
def frame_source(ids: Sequence[int]) -> Tuple[int, ...]:
    """Encoder input convention: sentence ids followed by </s>."""
    return tuple(ids) + (EOS,)


def frame_target(ids: Sequence[int]) -> Tuple[int, ...]:
    return (BOS,) + tuple(ids) + (EOS,)


def window_for(doc_ids: Sequence[Sequence[int]], m: int, K: int, max_len: int) -> ContextWindow:
    """Up to K preceding source sentences of sentence m, each cut to max_len and </s>-terminated."""
    sentences = tuple(frame_source(doc_ids[j][:max_len]) for j in range(max(0, m - K), m))
    return ContextWindow(sentences=sentences, K=K)


@dataclass(frozen=True)
class TrainingExample:
    source: Tuple[int, ...]  # ids + </s>
    target: Tuple[int, ...]  # <s> ids </s>
    window: ContextWindow
    doc_index: int
    sent_index: int

    @property
    def window_indices(self) -> Tuple[int, ...]:
        """Sentence indices (within the document) of the window sentences."""
        count = len(self.window.sentences)
        return tuple(range(self.sent_index - count, self.sent_index))


def make_examples(corpus: DocumentCorpus, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                  K: int, max_len: int) -> List[TrainingExample]:
    """
    One example per pair within max_len. Filtering removes examples, never
    history: an over-length sentence still appears in its successors' windows.
    """
    examples: List[TrainingExample] = []
    skipped = 0
    for d, doc in enumerate(corpus.documents):
        src_ids = [src_vocab.encode(src) for src, _ in doc]
        for m, (src, tgt) in enumerate(doc):
            if len(src) > max_len or len(tgt) > max_len:
                skipped += 1
                continue
            examples.append(TrainingExample(
                source=frame_source(src_ids[m]),
                target=frame_target(tgt_vocab.encode(tgt)),
                window=window_for(src_ids, m, K, max_len),
                doc_index=d,
                sent_index=m,
            ))
    if skipped:
        dprint(f"[corpus] warning: skipped {skipped} pair(s) longer than {max_len} tokens", file_only=True)
    return examples


# ================================ batching ================================
@dataclass(frozen=True)
class Batch:
    """
    Padded arrays for a group of examples. Masks are 1.0 on real tokens.
    ctx holds every window sentence of the batch; slot_index[b, k] points
    at the k-th (oldest first) window sentence of example b.
    Target arrays are None for inference batches.
    """
    src: np.ndarray
    src_mask: np.ndarray
    ctx: np.ndarray
    ctx_mask: np.ndarray
    slot_index: np.ndarray
    slot_mask: np.ndarray
    tgt_in: Optional[np.ndarray] = None
    tgt_out: Optional[np.ndarray] = None
    tgt_mask: Optional[np.ndarray] = None
    examples: Tuple[TrainingExample, ...] = ()

    @property
    def size(self) -> int:
        return int(self.src.shape[0])

    @property
    def n_tokens(self) -> int:
        return 0 if self.tgt_mask is None else int(self.tgt_mask.sum())


def _pad(seqs: Sequence[Sequence[int]]) -> Tuple[np.ndarray, np.ndarray]:
    width = max((len(s) for s in seqs), default=0)
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    mask = np.zeros((len(seqs), width))
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return ids, mask


def collate_sources(sources: Sequence[Sequence[int]], windows: Sequence[ContextWindow]) -> Batch:
    if not sources:
        raise ContractError("cannot collate an empty batch")
    if any(len(s) == 0 for s in sources):
        raise ContractError("empty source sentence in batch")
    src, src_mask = _pad(sources)
    flat: List[Sequence[int]] = []
    k_max = max(len(w.sentences) for w in windows)
    slot_index = np.zeros((len(sources), k_max), dtype=np.int64)
    slot_mask = np.zeros((len(sources), k_max))
    for b, window in enumerate(windows):
        for k, sentence in enumerate(window.sentences):
            slot_index[b, k] = len(flat)
            slot_mask[b, k] = 1.0
            flat.append(sentence)
    ctx, ctx_mask = _pad(flat)
    return Batch(src=src, src_mask=src_mask, ctx=ctx, ctx_mask=ctx_mask,
                 slot_index=slot_index, slot_mask=slot_mask)


def collate(examples: Sequence[TrainingExample]) -> Batch:
    base = collate_sources([e.source for e in examples], [e.window for e in examples])
    tgt_in, _ = _pad([e.target[:-1] for e in examples])
    tgt_out, tgt_mask = _pad([e.target[1:] for e in examples])
    return Batch(src=base.src, src_mask=base.src_mask, ctx=base.ctx, ctx_mask=base.ctx_mask,
                 slot_index=base.slot_index, slot_mask=base.slot_mask,
                 tgt_in=tgt_in, tgt_out=tgt_out, tgt_mask=tgt_mask, examples=tuple(examples))


@dataclass
class BatchStream:
    """Seeded reshuffle every epoch; the stream of epoch n only depends on (seed, n)."""
    examples: Sequence[TrainingExample]
    batch_size: int
    seed: int = 0

    def __len__(self) -> int:
        return -(-len(self.examples) // self.batch_size)

    def order(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.seed, epoch]).permutation(len(self.examples))

    def epoch(self, epoch: int) -> Iterator[Batch]:
        order = self.order(epoch)
        for start in range(0, len(order), self.batch_size):
            yield collate([self.examples[i] for i in order[start:start + self.batch_size]])

    def __iter__(self) -> Iterator[Batch]:
        return self.epoch(0)


def batch(examples: Sequence[TrainingExample], batch_size: int, seed: int = 0) -> BatchStream:
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    if len(examples) == 0:
        raise ContractError("cannot batch an empty example list")
    return BatchStream(list(examples), batch_size, seed)
