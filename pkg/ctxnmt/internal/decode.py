# internal/decode.py

# greedy and beam search over a trained model, sentence by sentence or a whole document

from __future__ import annotations
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np

from .context import ContextWindow
from .corpus import BOS, EOS, PAD, frame_source, window_for
from .errors import ContractError
from .utils import default_max_out

if TYPE_CHECKING:
    from .model import DecoderState

NEVER_EMITTED = (PAD, BOS)


@dataclass(frozen=True)
class Hypothesis:
    tokens: Tuple[int, ...]  # emitted ids, </s> included once finished
    score: float             # summed log-probability
    state: Optional[DecoderState] = None

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS

    def normalized(self, alpha: float) -> float:
        """Length-normalized score; the length counts </s>."""
        return self.score / (len(self.tokens) ** alpha)


def _log_probs(probs) -> np.ndarray:
    p = np.asarray(probs.data if hasattr(probs, "data") else probs, dtype=np.float64).reshape(-1)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    logp[list(NEVER_EMITTED)] = -np.inf
    return logp


def _step(model, state, y_prev: int, first: bool = False):
    new_state, probs = model.decoder_step(state, y_prev)
    logp = _log_probs(probs)
    if first:
        logp[EOS] = -np.inf  # outputs hold at least one token
    return new_state, logp


def greedy_search(model, state, max_out: int) -> List[int]:
    """
    Arg-max decoding; </s> is forced at step max_out and barred at the first
    step (unless max_out = 1). Ties go to the lower id.
    """
    tokens: List[int] = []
    y_prev = BOS
    for i in range(max_out):
        state, logp = _step(model, state, y_prev, first=(i == 0 and max_out > 1))
        y_prev = EOS if i == max_out - 1 else int(np.argmax(logp))
        if y_prev == EOS:
            break
        tokens.append(y_prev)
    return tokens


def _beam_pass(model, state: DecoderState, width: int, max_out: int, alpha: float) -> List[Hypothesis]:
    """Finished hypotheses of one beam pass at a fixed width."""
    live = [Hypothesis(tokens=(), score=0.0, state=state)]
    completed: List[Hypothesis] = []
    for i in range(max_out):
        last = i == max_out - 1
        candidates: List[Hypothesis] = []
        for hyp in live:
            new_state, logp = _step(model, hyp.state, hyp.tokens[-1] if hyp.tokens else BOS,
                                    first=(i == 0 and max_out > 1))
            if last:
                choices = [EOS]
            else:
                # only a hypothesis' own top `width` continuations can survive the cut
                order = np.lexsort((np.arange(logp.size), -logp))
                choices = [int(t) for t in order[:width] if np.isfinite(logp[t])]
            candidates.extend(Hypothesis(hyp.tokens + (tok,), hyp.score + float(logp[tok]), new_state)
                              for tok in choices)
        candidates.sort(key=lambda h: (-h.normalized(alpha), h.tokens))
        live = []
        for cand in candidates[:width]:
            (completed if cand.finished else live).append(cand)
        if not live:
            break
    return completed


def beam_search(model, state: DecoderState, width: int, max_out: int, alpha: float = 1.0) -> List[int]:
    """
    Keep the `width` best partial hypotheses; a hypothesis leaves the beam
    once it emits </s>. Candidates are ranked by length-normalized score,
    ties going to the lexicographically smaller token sequence.

    The answer is the best finished hypothesis over the passes at widths
    1..width, so a wider beam never returns a worse-scoring translation and
    width 1 is exactly greedy decoding.
    """
    completed = [h for w in range(1, width + 1) for h in _beam_pass(model, state, w, max_out, alpha)]
    best = min(completed, key=lambda h: (-h.normalized(alpha), h.tokens))
    return list(best.tokens[:-1])


def translate_sentence(model, source: Sequence[int], window: Optional[ContextWindow] = None,
                       beam: int = 1, max_out: Optional[int] = None, alpha: float = 1.0) -> List[int]:
    """
    Target ids (without </s>) for one source sentence given as raw ids; the
    </s> terminator is appended here. beam = 1 is greedy decoding.
    """
    if beam < 1:
        raise ContractError(f"beam width must be >= 1, got {beam}")
    if len(source) == 0:
        raise ContractError("translate_sentence: empty source sentence")
    if max_out is None:
        max_out = default_max_out(len(source))
    if max_out < 1:
        raise ContractError(f"max_out must be >= 1, got {max_out}")
    with model.store.no_grad():
        state = model.start(frame_source(source), window)
        if beam == 1:
            return greedy_search(model, state, max_out)
        return beam_search(model, state, beam, max_out, alpha)


def translate_document(model, document: Sequence[Sequence[int]], beam: int = 1,
                       max_out: Optional[int] = None, alpha: float = 1.0,
                       window_sizes: Optional[List[int]] = None) -> List[List[int]]:
    """
    Translate sentences in order. Sentence m sees the K preceding *source*
    sentences of the document, never earlier outputs. Window sizes are
    appended to `window_sizes` when a list is given.
    """
    if len(document) == 0:
        raise ContractError("translate_document: empty document")
    K, max_len = model.config.K, model.config.max_len
    outputs: List[List[int]] = []
    for m, source in enumerate(document):
        window = window_for(document, m, K, max_len)
        if window_sizes is not None:
            window_sizes.append(len(window))
        outputs.append(translate_sentence(model, source, window, beam=beam, max_out=max_out, alpha=alpha))
    return outputs
