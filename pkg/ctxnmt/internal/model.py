# internal/model.py

# attention encoder-decoder with optional document context, in seven wirings

from __future__ import annotations
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import numerics as nx
from .context import ContextEncoder, ContextSummary, ContextWindow, summarize_batch, summarize_context
from .corpus import BOS, EOS, Batch, TrainingExample, collate, collate_sources
from .errors import ConfigError, ContractError
from .layers import (AttentionLayer, BiEncoder, ContextGate, Embedding, GruCell, Readout, attend,
                     encode_bidirectional, gate_forward, gru_step, output_logits, stack_annotations)
from .numerics import ParameterStore, Tensor


class Strategy(str, Enum):
    BASELINE = "Baseline"
    INIT_ENC = "InitEnc"
    INIT_DEC = "InitDec"
    INIT_BOTH = "InitBoth"
    AUX = "Aux"
    GATED_AUX = "GatedAux"
    INIT_BOTH_GATED_AUX = "InitBothGatedAux"

    @classmethod
    def parse(cls, text: Union[str, "Strategy"]) -> "Strategy":
        if isinstance(text, Strategy):
            return text
        for member in cls:
            if member.value.lower() == str(text).strip().lower():
                return member
        names = ", ".join(m.value for m in cls)
        raise ConfigError(f"unknown strategy {text!r} (expected one of {names})")

    @property
    def uses_context(self) -> bool:
        return self is not Strategy.BASELINE

    @property
    def init_encoder(self) -> bool:
        return self in (Strategy.INIT_ENC, Strategy.INIT_BOTH, Strategy.INIT_BOTH_GATED_AUX)

    @property
    def init_decoder(self) -> bool:
        return self in (Strategy.INIT_DEC, Strategy.INIT_BOTH, Strategy.INIT_BOTH_GATED_AUX)

    @property
    def auxiliary(self) -> bool:
        return self in (Strategy.AUX, Strategy.GATED_AUX, Strategy.INIT_BOTH_GATED_AUX)

    @property
    def gated(self) -> bool:
        return self in (Strategy.GATED_AUX, Strategy.INIT_BOTH_GATED_AUX)


@dataclass(frozen=True)
class StrategyConfig:
    strategy: Strategy = Strategy.BASELINE
    K: int = 3
    emb_dim: int = 600
    enc_hidden: int = 1000
    dec_hidden: int = 1000
    d_ctx: int = 1000
    attn_dim: int = 1000
    readout_dim: int = 600
    src_vocab_size: int = 35000
    tgt_vocab_size: int = 35000
    max_len: int = 80

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        for f in fields(self):
            if f.name != "strategy" and int(getattr(self, f.name)) != getattr(self, f.name):
                raise ConfigError(f"{f.name} must be an integer, got {getattr(self, f.name)!r}")
        for name in ("emb_dim", "enc_hidden", "dec_hidden", "d_ctx", "attn_dim", "readout_dim", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("src_vocab_size", "tgt_vocab_size"):
            if getattr(self, name) < 5:
                raise ConfigError(f"{name} must be >= 5, got {getattr(self, name)}")
        if self.K < 0:
            raise ConfigError(f"K must be >= 0, got {self.K}")
        if self.strategy.uses_context and self.K < 1:
            raise ConfigError(f"{self.strategy.value} needs a context window K >= 1")
        if self.strategy.init_encoder and self.d_ctx != self.enc_hidden:
            raise ConfigError(f"{self.strategy.value} initializes the encoder with D: "
                              f"d_ctx ({self.d_ctx}) must equal enc_hidden ({self.enc_hidden})")

    @property
    def annotation_dim(self) -> int:
        return 2 * self.enc_hidden

    def as_dict(self) -> Dict[str, str]:
        out = {k: str(v) for k, v in asdict(self).items()}
        out["strategy"] = self.strategy.value
        return out

    @classmethod
    def from_dict(cls, values: Dict[str, str]) -> "StrategyConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in values:
                continue
            raw = values[f.name]
            try:
                kwargs[f.name] = Strategy.parse(raw) if f.name == "strategy" else int(raw)
            except ValueError:
                raise ConfigError(f"{f.name}: not an integer: {raw!r}") from None
        return cls(**kwargs)


@dataclass(frozen=True)
class DecoderState:
    """Decoder hidden state plus everything constant over the sentence's decoding steps."""
    s: Tensor                    # [B, dec_hidden]
    step: int
    D: Tensor                    # [B, d_ctx]
    annotations: Tensor          # [B, T, 2 enc_hidden]
    keys: Tensor                 # attention keys of the annotations
    mask: Optional[np.ndarray]   # [B, T] source mask, None when nothing is padded


class TranslationModel:
    """
    Bidirectional GRU encoder, additive attention, conditional GRU decoder.
    The strategy decides where the document summary D enters: encoder
    initial states, decoder initial state, and/or every decoder step.
    """

    def __init__(self, config: StrategyConfig, seed: int = 0, precision: int = 32) -> None:
        self.config = config
        self.seed = seed
        self.store = ParameterStore(seed=seed, precision=precision)
        self.force_gate: Optional[float] = None           # fixed z for every gate component
        self.gate_trace: Optional[List[np.ndarray]] = None  # when a list, gate values are appended per step

        c, s = config, self.store
        strategy = c.strategy
        self.src_emb = Embedding.create(s, "src_emb", c.src_vocab_size, c.emb_dim)
        self.tgt_emb = Embedding.create(s, "tgt_emb", c.tgt_vocab_size, c.emb_dim)
        self.encoder = BiEncoder.create(s, "enc", c.emb_dim, c.enc_hidden)
        self.context = ContextEncoder.create(s, "ctx", self.src_emb, c.d_ctx) if strategy.uses_context else None
        s.add("init.W_s", (c.annotation_dim, c.dec_hidden))
        if strategy.init_decoder:
            s.add("init.W_D", (c.d_ctx, c.dec_hidden))
        self.attention = AttentionLayer.create(s, "att", c.dec_hidden, c.annotation_dim, c.attn_dim)
        blocks = (c.emb_dim, c.annotation_dim) + ((c.d_ctx,) if strategy.auxiliary else ())
        self.decoder = GruCell.create(s, "dec", blocks, c.dec_hidden)
        self.gate = (ContextGate.create(s, "gate", c.dec_hidden, c.emb_dim, c.annotation_dim, c.d_ctx)
                     if strategy.gated else None)
        self.readout = Readout.create(s, "out", c.dec_hidden, c.emb_dim, c.annotation_dim,
                                      c.readout_dim, c.tgt_vocab_size)

    @property
    def strategy(self) -> Strategy:
        return self.config.strategy

    def __repr__(self) -> str:
        return (f"TranslationModel({self.strategy.value}, K={self.config.K}, "
                f"params={len(self.store)}, weights={self.store.n_weights()})")

    # ---------------------------------- context ----------------------------------
    def summarize(self, window: Optional[ContextWindow]) -> ContextSummary:
        """Document summary of one window; D = 0 for Baseline or an empty window."""
        if self.context is None or window is None or len(window) == 0:
            return ContextSummary(D=self.store.zeros((self.config.d_ctx,)))
        return summarize_context(window, self.src_emb, self.context.sentence_rnn, self.context.document_rnn)

    def context_batch(self, batch: Batch) -> Tensor:
        if self.context is None:
            return self.store.zeros((batch.size, self.config.d_ctx))
        return summarize_batch(self.context, batch.ctx, batch.ctx_mask, batch.slot_index, batch.slot_mask)

    # ---------------------------------- encoder ----------------------------------
    def _check_ids(self, ids, vocab_size: int, what: str) -> None:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= vocab_size):
            raise ContractError(f"{what}: token id outside the vocabulary [0, {vocab_size})")

    def encode_source(self, source: Sequence[int],
                      D: Union[ContextSummary, Tensor, None] = None) -> Tuple[List[Tensor], Tensor]:
        """
        Annotations of one source sentence (ids, already </s>-terminated) and
        h_N, the annotation of the final token. InitEnc-style strategies start
        both directions from D; the others from zero.
        """
        if len(source) == 0:
            raise ContractError("encode_source: empty source sentence")
        self._check_ids(source, self.config.src_vocab_size, "encode_source")
        d = D.D if isinstance(D, ContextSummary) else D
        if self.strategy.init_encoder and d is not None:
            init = d
        else:
            init = self.store.zeros((self.config.enc_hidden,))
        embeddings = [self.src_emb.lookup(int(tok)) for tok in source]
        annotations = encode_bidirectional(self.encoder, embeddings, init, init)
        return annotations, annotations[-1]

    def encode_batch(self, batch: Batch, D: Tensor) -> Tuple[Tensor, Tensor]:
        """Batched encode_source -> (annotations [B, T, 2h], h_N [B, 2h])."""
        self._check_ids(batch.src, self.config.src_vocab_size, "encode_batch")
        init = D if self.strategy.init_encoder else self.store.zeros((batch.size, self.config.enc_hidden))
        mask = None if batch.src_mask.all() else batch.src_mask
        embeddings = [self.src_emb.lookup(batch.src[:, t]) for t in range(batch.src.shape[1])]
        H = stack_annotations(encode_bidirectional(self.encoder, embeddings, init, init, mask))
        if mask is None:
            return H, nx.reshape(nx.narrow(H, 1, H.shape[1] - 1, 1), (batch.size, H.shape[2]))
        last = np.zeros(batch.src_mask.shape, dtype=self.store.dtype)
        last[np.arange(batch.size), batch.src_mask.sum(axis=1).astype(np.int64) - 1] = 1.0
        selector = self.store.constant(last.reshape(batch.size, -1, 1))
        return H, nx.sum(selector * H, axis=1)

    def init_decoder(self, h_N: Tensor, D: Optional[Tensor] = None) -> Tensor:
        """s_0 = tanh(W_s h_N [+ W_D D])."""
        vector = h_N.ndim == 1
        rows = (lambda t: nx.reshape(t, (1, t.shape[0]))) if vector else (lambda t: t)
        pre = nx.matmul(rows(h_N), self.store.param("init.W_s"))
        if self.strategy.init_decoder:
            if D is None:
                raise ContractError(f"{self.strategy.value} needs the document summary to initialize the decoder")
            pre = pre + nx.matmul(rows(D), self.store.param("init.W_D"))
        s0 = nx.tanh(pre)
        return nx.reshape(s0, (s0.shape[-1],)) if vector else s0

    # ---------------------------------- decoder ----------------------------------
    def context_gate(self, s_prev: Tensor, y_emb: Tensor, c: Tensor) -> Tensor:
        if self.force_gate is not None:
            z = self.store.full((s_prev.shape[0], self.config.d_ctx), self.force_gate)
        else:
            z = gate_forward(self.gate, s_prev, y_emb, c)
        if self.gate_trace is not None:
            self.gate_trace.append(z.numpy())
        return z

    def advance(self, state: DecoderState, y_prev) -> Tuple[DecoderState, Tensor]:
        """One decoder step from previous target ids y_prev [B] -> (state with s_i, logits [B, V])."""
        ids = np.asarray(y_prev, dtype=np.int64).reshape(-1)
        self._check_ids(ids, self.config.tgt_vocab_size, "decoder_step")
        y_emb = self.tgt_emb.lookup(ids)
        c, _ = attend(self.attention, state.s, state.annotations, state.mask, state.keys)
        parts = [y_emb, c]
        if self.strategy.auxiliary:
            if self.strategy.gated:
                parts.append(self.context_gate(state.s, y_emb, c) * state.D)
            else:
                parts.append(state.D)
        s_i = gru_step(self.decoder, parts, state.s)
        logits = output_logits(self.readout, s_i, y_emb, c)
        return replace(state, s=s_i, step=state.step + 1), logits

    def decoder_step(self, state: DecoderState, y_prev) -> Tuple[DecoderState, Tensor]:
        """Returns (new state, probabilities [B, V])."""
        new_state, logits = self.advance(state, y_prev)
        return new_state, nx.softmax(logits, axis=-1)

    def start_batch(self, batch: Batch) -> DecoderState:
        D = self.context_batch(batch)
        H, h_N = self.encode_batch(batch, D)
        s0 = self.init_decoder(h_N, D)
        mask = None if batch.src_mask.all() else batch.src_mask
        return DecoderState(s=s0, step=0, D=D, annotations=H, keys=self.attention.keys(H), mask=mask)

    def start(self, source: Sequence[int], window: Optional[ContextWindow] = None) -> DecoderState:
        """Decoder state for one source sentence (</s>-terminated ids) and its window."""
        return self.start_batch(collate_sources([tuple(source)], [window or ContextWindow()]))

    # ---------------------------------- losses ----------------------------------
    def batch_nll(self, batch: Batch) -> Tuple[Tensor, int]:
        """Summed negative log-likelihood over real target tokens, and their count."""
        if batch.tgt_in is None:
            raise ContractError("batch has no targets")
        state = self.start_batch(batch)
        total = None
        for t in range(batch.tgt_in.shape[1]):
            state, logits = self.advance(state, batch.tgt_in[:, t])
            picked = nx.pick(nx.log_softmax(logits, axis=-1), batch.tgt_out[:, t])
            column = batch.tgt_mask[:, t]
            if not column.all():
                picked = picked * self.store.constant(column)
            term = nx.sum(picked)
            total = term if total is None else total + term
        return nx.neg(total), batch.n_tokens

    def batch_loss(self, batch: Batch) -> Tensor:
        """Mean per-token negative log-likelihood of a batch."""
        total, n_tokens = self.batch_nll(batch)
        return total * (1.0 / n_tokens)

    def sentence_loss(self, example: TrainingExample) -> Tensor:
        """Σ_i −log p(y_i | y_<i, x, D) for one sentence, </s> included."""
        src_len, tgt_len = len(example.source) - 1, len(example.target) - 2
        if src_len > self.config.max_len or tgt_len > self.config.max_len:
            raise ContractError(f"sentence_loss: lengths {src_len}/{tgt_len} exceed max_len {self.config.max_len}")
        if example.target[0] != BOS or example.target[-1] != EOS:
            raise ContractError("sentence_loss: target must be framed as <s> ... </s>")
        total, _ = self.batch_nll(collate([example]))
        return total
