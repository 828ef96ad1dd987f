# internal/layers.py

# differentiable building blocks: embeddings, GRU cell, bidirectional encoder,
# additive attention, the context gate and the output readout

from __future__ import annotations
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import numerics as nx
from .errors import ContractError, DimensionError
from .numerics import ParameterStore, Tensor

GRU_GATES = ("z", "r", "h")  # update gate, reset gate, candidate
MASKED_SCORE = -1e9  # added to attention scores of padded positions


def _check_width(what: str, t: Tensor, width: int) -> None:
    if t.ndim not in (1, 2, 3) or t.shape[-1] != width:
        raise DimensionError(f"{what}: expected last dimension {width}, got shape {t.shape}")


def _rows(t: Tensor) -> Tensor:
    """Promote a vector [d] to a batch of one [1, d]."""
    return nx.reshape(t, (1, t.shape[0])) if t.ndim == 1 else t


def _unrows(t: Tensor, vector: bool) -> Tensor:
    return nx.reshape(t, (t.shape[-1],)) if vector else t


def _mask_pair(store: ParameterStore, mask) -> Tuple[Tensor, Tensor]:
    """mask [B] of 1 (real step) / 0 (padding) -> (keep-new, keep-old) columns."""
    m = np.asarray(mask, dtype=store.dtype).reshape(-1, 1)
    return store.constant(m), store.constant(1.0 - m)


# ================================ Embedding ================================
@dataclass(frozen=True)
class Embedding:
    store: ParameterStore
    name: str
    vocab_size: int
    dim: int

    @classmethod
    def create(cls, store: ParameterStore, name: str, vocab_size: int, dim: int) -> "Embedding":
        store.add(f"{name}.E", (vocab_size, dim))
        return cls(store, name, vocab_size, dim)

    def lookup(self, ids) -> Tensor:
        """ids (int or int array) -> embedding rows."""
        return nx.take(self.store.param(f"{self.name}.E"), ids)


# ================================ GRU ================================
@dataclass(frozen=True)
class GruCell:
    """
    z = σ(W_z x + U_z h + b_z), r = σ(W_r x + U_r h + b_r),
    h~ = tanh(W_h x + U_h (r ⊙ h) + b_h), h' = (1 - z) ⊙ h + z ⊙ h~.

    The input may arrive as several blocks (e.g. [y ; c ; D] in the decoder);
    W_* then has one row block per input block.
    """
    store: ParameterStore
    name: str
    input_dims: Tuple[int, ...]
    hidden_dim: int

    @classmethod
    def create(cls, store: ParameterStore, name: str, input_dims: Union[int, Sequence[int]],
               hidden_dim: int) -> "GruCell":
        dims = (int(input_dims),) if isinstance(input_dims, (int, np.integer)) else tuple(int(d) for d in input_dims)
        cell = cls(store, name, dims, int(hidden_dim))
        for gate in GRU_GATES:
            store.add(f"{name}.W_{gate}", (cell.input_dim, cell.hidden_dim))
            store.add(f"{name}.U_{gate}", (cell.hidden_dim, cell.hidden_dim), init="orthogonal")
            store.add(f"{name}.b_{gate}", (cell.hidden_dim,))
        return cell

    @property
    def input_dim(self) -> int:
        return sum(self.input_dims)

    def p(self, local: str) -> Tensor:
        return self.store.param(f"{self.name}.{local}")

    def project(self, gate: str, parts: Sequence[Tensor]) -> Tensor:
        """Σ_k x_k · W_gate[rows of block k]."""
        W = self.p(f"W_{gate}")
        if len(parts) == 1:
            return nx.matmul(parts[0], W)
        out = None
        offset = 0
        for part, width in zip(parts, self.input_dims):
            term = nx.matmul(part, nx.narrow(W, 0, offset, width))
            out = term if out is None else out + term
            offset += width
        return out


def gru_step(cell: GruCell, x: Union[Tensor, Sequence[Tensor]], h_prev: Tensor, mask=None) -> Tensor:
    """
    One GRU update. `x` is a tensor or a list of input blocks matching
    cell.input_dims. With `mask` (per batch row, 1 = real token) padded rows
    carry h_prev through unchanged.
    """
    parts = list(x) if isinstance(x, (list, tuple)) else [x]
    if len(parts) != len(cell.input_dims):
        raise ContractError(f"{cell.name}: expected {len(cell.input_dims)} input blocks, got {len(parts)}")
    vector = h_prev.ndim == 1
    _check_width(f"{cell.name} hidden", h_prev, cell.hidden_dim)
    for part, width in zip(parts, cell.input_dims):
        _check_width(f"{cell.name} input", part, width)
        if (part.ndim == 1) != vector:
            raise DimensionError(f"{cell.name}: input {part.shape} and state {h_prev.shape} disagree on batching")
    parts = [_rows(part) for part in parts]
    h = _rows(h_prev)

    z = nx.sigmoid(cell.project("z", parts) + nx.matmul(h, cell.p("U_z")) + cell.p("b_z"))
    r = nx.sigmoid(cell.project("r", parts) + nx.matmul(h, cell.p("U_r")) + cell.p("b_r"))
    h_tilde = nx.tanh(cell.project("h", parts) + nx.matmul(r * h, cell.p("U_h")) + cell.p("b_h"))
    h_new = (1.0 - z) * h + z * h_tilde
    if mask is not None:
        keep_new, keep_old = _mask_pair(cell.store, mask)
        h_new = keep_new * h_new + keep_old * h
    return _unrows(h_new, vector)


# ================================ bidirectional encoder ================================
@dataclass(frozen=True)
class BiEncoder:
    forward_cell: GruCell
    backward_cell: GruCell

    @classmethod
    def create(cls, store: ParameterStore, name: str, input_dim: int, hidden_dim: int) -> "BiEncoder":
        return cls(GruCell.create(store, f"{name}.fwd", input_dim, hidden_dim),
                   GruCell.create(store, f"{name}.bwd", input_dim, hidden_dim))

    @property
    def hidden_dim(self) -> int:
        return self.forward_cell.hidden_dim


def encode_bidirectional(encoder: BiEncoder, embeddings: Sequence[Tensor], init_fwd: Tensor,
                         init_bwd: Tensor, mask: Optional[np.ndarray] = None) -> List[Tensor]:
    """
    Annotation j = [forward state at j ; backward state at j]. The forward
    GRU starts from init_fwd (left to right), the backward one from init_bwd
    (right to left). mask [B, T]: right padding, so the backward pass stays
    at init_bwd until it reaches the last real token.
    """
    if len(embeddings) == 0:
        raise ContractError("encode_bidirectional: empty input sequence")
    h = encoder.hidden_dim
    if init_fwd.shape[-1] != h or init_bwd.shape[-1] != h:
        raise ContractError(f"encoder init states must have dimension {h}, got {init_fwd.shape} / {init_bwd.shape}")
    steps = len(embeddings)
    column = (lambda t: None) if mask is None else (lambda t: mask[:, t])

    forward_states: List[Tensor] = []
    state = init_fwd
    for t in range(steps):
        state = gru_step(encoder.forward_cell, embeddings[t], state, column(t))
        forward_states.append(state)

    backward_states: List[Optional[Tensor]] = [None] * steps
    state = init_bwd
    for t in reversed(range(steps)):
        state = gru_step(encoder.backward_cell, embeddings[t], state, column(t))
        backward_states[t] = state

    return [nx.concat([forward_states[t], backward_states[t]], axis=-1) for t in range(steps)]


# ================================ attention ================================
@dataclass(frozen=True)
class AttentionLayer:
    """Single-layer additive attention: e_j = v_aᵀ tanh(W_a s + U_a h_j)."""
    store: ParameterStore
    name: str
    dec_hidden: int
    annotation_dim: int
    attn_dim: int

    @classmethod
    def create(cls, store: ParameterStore, name: str, dec_hidden: int, annotation_dim: int,
               attn_dim: int) -> "AttentionLayer":
        store.add(f"{name}.W_a", (dec_hidden, attn_dim))
        store.add(f"{name}.U_a", (annotation_dim, attn_dim))
        store.add(f"{name}.v_a", (attn_dim, 1))
        return cls(store, name, dec_hidden, annotation_dim, attn_dim)

    def p(self, local: str) -> Tensor:
        return self.store.param(f"{self.name}.{local}")

    def keys(self, annotations: Tensor) -> Tensor:
        """U_a h_j for every position; constant over decoding steps, so computed once."""
        return nx.matmul(annotations, self.p("U_a"))


def stack_annotations(annotations: Union[Tensor, Sequence[Tensor]]) -> Tensor:
    """List of [B, 2h] (or [2h]) annotations -> [B, T, 2h]."""
    if isinstance(annotations, Tensor):
        return annotations
    if len(annotations) == 0:
        raise ContractError("attend: no annotations")
    return nx.stack([_rows(a) for a in annotations], axis=1)


def attend(layer: AttentionLayer, s_prev: Tensor, annotations: Union[Tensor, Sequence[Tensor]],
           mask: Optional[np.ndarray] = None, keys: Optional[Tensor] = None) -> Tuple[Tensor, Tensor]:
    """Returns (c, weights): the intra-sentence context vector and the attention weights."""
    vector = s_prev.ndim == 1
    H = stack_annotations(annotations)
    if H.ndim != 3 or H.shape[1] == 0:
        raise ContractError(f"attend: annotations must be non-empty [B, T, d], got {H.shape}")
    _check_width("attend annotations", H, layer.annotation_dim)
    _check_width("attend query", s_prev, layer.dec_hidden)
    batch, steps = H.shape[0], H.shape[1]
    if keys is None:
        keys = layer.keys(H)

    query = nx.reshape(nx.matmul(_rows(s_prev), layer.p("W_a")), (batch, 1, layer.attn_dim))
    scores = nx.reshape(nx.matmul(nx.tanh(keys + query), layer.p("v_a")), (batch, steps))
    if mask is not None:
        penalty = (1.0 - np.asarray(mask, dtype=layer.store.dtype)) * MASKED_SCORE
        scores = scores + layer.store.constant(penalty)
    weights = nx.softmax(scores, axis=-1)
    c = nx.sum(nx.reshape(weights, (batch, steps, 1)) * H, axis=1)
    if vector:
        return _unrows(c, True), nx.reshape(weights, (steps,))
    return c, weights


# ================================ context gate ================================
@dataclass(frozen=True)
class ContextGate:
    """z_i = σ(U_z s_{i-1} + W_z y_{i-1} + C_z c_i); no bias."""
    store: ParameterStore
    name: str
    dec_hidden: int
    emb_dim: int
    annotation_dim: int
    d_ctx: int

    @classmethod
    def create(cls, store: ParameterStore, name: str, dec_hidden: int, emb_dim: int,
               annotation_dim: int, d_ctx: int) -> "ContextGate":
        store.add(f"{name}.U_z", (dec_hidden, d_ctx))
        store.add(f"{name}.W_z", (emb_dim, d_ctx))
        store.add(f"{name}.C_z", (annotation_dim, d_ctx))
        return cls(store, name, dec_hidden, emb_dim, annotation_dim, d_ctx)

    def p(self, local: str) -> Tensor:
        return self.store.param(f"{self.name}.{local}")


def gate_forward(gate: ContextGate, s_prev: Tensor, y_prev_emb: Tensor, c: Tensor) -> Tensor:
    _check_width("gate s_prev", s_prev, gate.dec_hidden)
    _check_width("gate y_prev", y_prev_emb, gate.emb_dim)
    _check_width("gate c", c, gate.annotation_dim)
    vector = s_prev.ndim == 1
    pre = (nx.matmul(_rows(s_prev), gate.p("U_z"))
           + nx.matmul(_rows(y_prev_emb), gate.p("W_z"))
           + nx.matmul(_rows(c), gate.p("C_z")))
    return _unrows(nx.sigmoid(pre), vector)


# ================================ readout ================================
@dataclass(frozen=True)
class Readout:
    """logits = W_o tanh(U_o s_i + V_o y_{i-1} + C_o c_i)."""
    store: ParameterStore
    name: str
    dec_hidden: int
    emb_dim: int
    annotation_dim: int
    readout_dim: int
    vocab_size: int

    @classmethod
    def create(cls, store: ParameterStore, name: str, dec_hidden: int, emb_dim: int,
               annotation_dim: int, readout_dim: int, vocab_size: int) -> "Readout":
        store.add(f"{name}.U_o", (dec_hidden, readout_dim))
        store.add(f"{name}.V_o", (emb_dim, readout_dim))
        store.add(f"{name}.C_o", (annotation_dim, readout_dim))
        store.add(f"{name}.W_o", (readout_dim, vocab_size))
        return cls(store, name, dec_hidden, emb_dim, annotation_dim, readout_dim, vocab_size)

    def p(self, local: str) -> Tensor:
        return self.store.param(f"{self.name}.{local}")


def output_logits(readout: Readout, s_i: Tensor, y_prev_emb: Tensor, c_i: Tensor) -> Tensor:
    _check_width("readout s_i", s_i, readout.dec_hidden)
    _check_width("readout y_prev", y_prev_emb, readout.emb_dim)
    _check_width("readout c_i", c_i, readout.annotation_dim)
    vector = s_i.ndim == 1
    hidden = nx.tanh(nx.matmul(_rows(s_i), readout.p("U_o"))
                     + nx.matmul(_rows(y_prev_emb), readout.p("V_o"))
                     + nx.matmul(_rows(c_i), readout.p("C_o")))
    return _unrows(nx.matmul(hidden, readout.p("W_o")), vector)


def output_distribution(readout: Readout, s_i: Tensor, y_prev_emb: Tensor, c_i: Tensor) -> Tensor:
    """Probabilities over the target vocabulary (softmax of output_logits)."""
    return nx.softmax(output_logits(readout, s_i, y_prev_emb, c_i), axis=-1)
