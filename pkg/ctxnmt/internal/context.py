# internal/context.py

# hierarchical summary of the preceding source sentences:
# a sentence-level GRU reduces each sentence to one vector, a document-level
# GRU reduces the sequence of sentence vectors to the document summary D

from __future__ import annotations
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from . import numerics as nx
from .errors import ContractError
from .layers import Embedding, GruCell, gru_step
from .numerics import ParameterStore, Tensor


@dataclass(frozen=True)
class ContextWindow:
    """Up to K previous source sentences (token ids, oldest first)."""
    sentences: Tuple[Tuple[int, ...], ...] = ()
    K: int = 0

    def __post_init__(self) -> None:
        if self.K < 0:
            raise ContractError(f"window size K must be >= 0, got {self.K}")
        if len(self.sentences) > self.K:
            raise ContractError(f"window holds {len(self.sentences)} sentences but K = {self.K}")

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass
class ContextSummary:
    D: Tensor
    sentence_summaries: List[Tensor] = field(default_factory=list)


@dataclass(frozen=True)
class ContextEncoder:
    """The two context GRUs; word vectors come from the shared source embedding."""
    embeddings: Embedding
    sentence_rnn: GruCell
    document_rnn: GruCell

    @classmethod
    def create(cls, store: ParameterStore, name: str, embeddings: Embedding, d_ctx: int) -> "ContextEncoder":
        return cls(embeddings,
                   GruCell.create(store, f"{name}.sent", embeddings.dim, d_ctx),
                   GruCell.create(store, f"{name}.doc", d_ctx, d_ctx))

    @property
    def d_ctx(self) -> int:
        return self.document_rnn.hidden_dim

    @property
    def store(self) -> ParameterStore:
        return self.document_rnn.store


def summarize_sentence(tokens: Sequence[int], embeddings: Embedding, sentence_rnn: GruCell) -> Tensor:
    """Final state of the sentence GRU run from zero over the sentence."""
    if len(tokens) == 0:
        raise ContractError("summarize_sentence: empty sentence")
    h = sentence_rnn.store.zeros((sentence_rnn.hidden_dim,))
    for token in tokens:
        h = gru_step(sentence_rnn, embeddings.lookup(int(token)), h)
    return h


def summarize_context(window: ContextWindow, embeddings: Embedding, sentence_rnn: GruCell,
                      document_rnn: GruCell) -> ContextSummary:
    """An empty window (first sentence of a document) summarizes to D = 0."""
    D = document_rnn.store.zeros((document_rnn.hidden_dim,))
    summaries = [summarize_sentence(s, embeddings, sentence_rnn) for s in window.sentences]
    for S in summaries:
        D = gru_step(document_rnn, S, D)
    return ContextSummary(D=D, sentence_summaries=summaries)


def summarize_batch(encoder: ContextEncoder, ctx: np.ndarray, ctx_mask: np.ndarray,
                    slot_index: np.ndarray, slot_mask: np.ndarray) -> Tensor:
    """
    Batched summarize_context. ctx [M, T] holds every window sentence of the
    batch (right padded); slot_index [B, K] selects example b's k-th sentence
    and slot_mask marks which slots exist. Returns D [B, d_ctx].
    """
    batch = slot_index.shape[0]
    D = encoder.store.zeros((batch, encoder.d_ctx))
    if ctx.shape[0] == 0 or slot_index.shape[1] == 0:
        return D

    h = encoder.store.zeros((ctx.shape[0], encoder.d_ctx))
    full = bool(ctx_mask.all())
    for t in range(ctx.shape[1]):
        h = gru_step(encoder.sentence_rnn, encoder.embeddings.lookup(ctx[:, t]), h,
                     None if full else ctx_mask[:, t])

    for k in range(slot_index.shape[1]):
        column = slot_mask[:, k]
        S_k = nx.take(h, slot_index[:, k])
        D = gru_step(encoder.document_rnn, S_k, D, None if column.all() else column)
    return D
