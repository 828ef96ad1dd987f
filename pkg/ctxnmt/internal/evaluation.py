# internal/evaluation.py

# corpus BLEU, smoothed sentence BLEU, the paired sign test and context-gate statistics

from __future__ import annotations
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from sacrebleu.metrics import BLEU
from scipy import stats

from .corpus import collate
from .errors import ContractError
from .utils import detokenize

MAX_ORDER = 4
GATE_BINS = 10
SIGNIFICANT = 0.01  # p-value below which a difference is marked significant

Tokens = Sequence[str]
TextOrTokens = Union[str, Tokens]


def _line(x: TextOrTokens) -> str:
    # input is pre-tokenized, sacrebleu runs with tokenize="none"
    return x if isinstance(x, str) else detokenize(x)


@lru_cache(maxsize=None)
def _metric(lowercase: bool, smooth_method: str = "none") -> BLEU:
    return BLEU(lowercase=lowercase, tokenize="none", smooth_method=smooth_method, max_ngram_order=MAX_ORDER,
                effective_order=smooth_method != "none", force=True)


def _reference_streams(refs: Sequence[Sequence[TextOrTokens]]) -> List[List[Optional[str]]]:
    """Per-sentence reference sets -> sacrebleu streams; None pads sentences with fewer references."""
    width = max(len(r) for r in refs)
    return [[_line(r[k]) if k < len(r) else None for r in refs] for k in range(width)]


@dataclass(frozen=True)
class BleuResult:
    bleu: float                       # in [0, 1]
    precisions: Tuple[float, ...]     # modified n-gram precisions p_1 .. p_4
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    def as_report(self) -> Dict[str, str]:
        report = {"bleu": f"{100.0 * self.bleu:.2f}"}
        for n, p in enumerate(self.precisions, start=1):
            report[f"p{n}"] = f"{p:.4f}"
        report["bp"] = f"{self.brevity_penalty:.4f}"
        report["hyp_len"] = str(self.hyp_len)
        report["ref_len"] = str(self.ref_len)
        return report


def corpus_bleu(hyps: Sequence[TextOrTokens], refs: Sequence[Sequence[TextOrTokens]],
                lowercase: bool = True) -> BleuResult:
    """
    Corpus-level BLEU-4: clipped n-gram counts pooled over the corpus,
    uniform weights, brevity penalty from the closest reference lengths
    (ties go to the shorter one). refs[i] lists the references of hyps[i].
    """
    if len(hyps) != len(refs):
        raise ContractError(f"corpus_bleu: {len(hyps)} hypotheses but {len(refs)} reference sets")
    if not hyps:
        raise ContractError("corpus_bleu: no hypotheses")
    if any(len(ref_set) == 0 for ref_set in refs):
        raise ContractError("corpus_bleu: sentence without references")

    score = _metric(lowercase).corpus_score([_line(h) for h in hyps], _reference_streams(refs))
    if not any(score.counts):
        # sacrebleu short-circuits to bp 0 when nothing matches
        bp = BLEU.compute_bp(score.sys_len, score.ref_len)
    else:
        bp = score.bp
    return BleuResult(bleu=score.score / 100.0, precisions=tuple(p / 100.0 for p in score.precisions),
                      brevity_penalty=bp, hyp_len=score.sys_len, ref_len=score.ref_len)


def sentence_bleu_smoothed(hyp: TextOrTokens, refs: Sequence[TextOrTokens], lowercase: bool = True) -> float:
    """
    Add-one smoothed sentence BLEU: counts of orders >= 2 get +1 in numerator
    and denominator (sacrebleu "add-k", k = 1). Unigrams are smoothed the same
    way only when none match, so a disjoint pair stays slightly above zero.
    """
    if not refs:
        raise ContractError("sentence_bleu_smoothed: no references")
    line = _line(hyp)
    if not line.split():
        return 0.0
    stats_ = _metric(lowercase, "add-k").sentence_score(line, [_line(r) for r in refs])
    correct, total = list(stats_.counts), list(stats_.totals)
    if correct[0] == 0:
        correct[0], total[0] = 1, total[0] + 1
    smoothed = BLEU.compute_bleu(correct, total, stats_.sys_len, stats_.ref_len, smooth_method="add-k",
                                 smooth_value=1, effective_order=False, max_ngram_order=MAX_ORDER)
    return smoothed.score / 100.0




# ================================ sign test ================================
@dataclass(frozen=True)
class SignTestResult:
    wins: int     # sentences where system A scores higher
    losses: int
    ties: int
    p_value: float

    @property
    def n(self) -> int:
        return self.wins + self.losses

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANT

    def as_report(self) -> Dict[str, str]:
        return {"wins": str(self.wins), "losses": str(self.losses), "ties": str(self.ties),
                "p_value": str(round(self.p_value, 6))}


def sign_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> SignTestResult:
    """Two-sided exact binomial test on per-sentence wins vs losses, ties excluded."""
    if len(scores_a) != len(scores_b):
        raise ContractError(f"sign_test: {len(scores_a)} vs {len(scores_b)} scores")
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    wins = int(np.sum(a > b))
    losses = int(np.sum(a < b))
    ties = len(a) - wins - losses
    if wins + losses == 0:
        return SignTestResult(wins, losses, ties, 1.0)
    p = stats.binomtest(wins, wins + losses, 0.5, alternative="two-sided").pvalue
    return SignTestResult(wins, losses, ties, min(1.0, float(p)))


def sentence_scores(hyps: Sequence[TextOrTokens], refs: Sequence[Sequence[TextOrTokens]],
                    lowercase: bool = True) -> List[float]:
    if len(hyps) != len(refs):
        raise ContractError(f"sentence_scores: {len(hyps)} hypotheses but {len(refs)} reference sets")
    return [sentence_bleu_smoothed(h, r, lowercase) for h, r in zip(hyps, refs)]


# ================================ system comparison ================================
@dataclass(frozen=True)
class SystemScores:
    name: str
    bleu: Tuple[float, ...]                    # one corpus BLEU per test set
    versus_baseline: Optional[SignTestResult] = None

    @property
    def average(self) -> float:
        return float(np.mean(self.bleu)) if self.bleu else 0.0


def compare_systems(systems: Sequence[SystemScores], set_names: Sequence[str]) -> str:
    """
    Plain-text table: one row per system with BLEU x 100 per test set, the
    average and its difference to the first (baseline) row. Rows whose sign
    test against the baseline has p < 0.01 carry †.
    """
    if not systems:
        raise ContractError("compare_systems: no systems")
    header = ["system"] + list(set_names) + ["avg", "delta"]
    rows = [header]
    base = systems[0].average
    for system in systems:
        if len(system.bleu) != len(set_names):
            raise ContractError(f"{system.name}: {len(system.bleu)} scores for {len(set_names)} test sets")
        mark = "†" if system.versus_baseline is not None and system.versus_baseline.significant else ""
        rows.append([system.name + mark] + [f"{100.0 * b:.2f}" for b in system.bleu]
                    + [f"{100.0 * system.average:.2f}", f"{100.0 * (system.average - base):+.2f}"])
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows) + "\n"


# ================================ context gate statistics ================================
@dataclass
class GateStats:
    per_step: List[Tuple[int, float, float, float]] = field(default_factory=list)  # (step, mean, min, max)
    histogram: List[int] = field(default_factory=list)
    mean: float = 0.0
    keyed_mean: Optional[float] = None   # steps producing an answer-key position
    other_mean: Optional[float] = None

    def as_report(self) -> Dict[str, str]:
        report = {"gate_mean": f"{self.mean:.6f}"}
        for step, mean, low, high in self.per_step:
            report[f"step_{step}"] = f"mean {mean:.6f} min {low:.6f} max {high:.6f}"
        report["histogram"] = " ".join(str(c) for c in self.histogram)
        if self.keyed_mean is not None:
            report["keyed_mean"] = f"{self.keyed_mean:.6f}"
        if self.other_mean is not None:
            report["other_mean"] = f"{self.other_mean:.6f}"
        return report


def gate_stats(model, examples: Sequence, batch_size: int = 32,
               key_positions: Optional[Set[Tuple[int, int, int]]] = None) -> GateStats:
    """
    Teacher-forced pass over `examples` recording every gate value. Step i is
    the step producing target token i; padded steps are ignored.
    key_positions holds (document, sentence, position) triples whose steps
    are averaged separately from the rest.
    """
    if not model.strategy.gated:
        raise ContractError(f"gate statistics need a gated strategy, not {model.strategy.value}")
    if len(examples) == 0:
        raise ContractError("gate_stats: no examples")
    sums: Dict[int, float] = {}
    counts: Dict[int, int] = {}
    lows: Dict[int, float] = {}
    highs: Dict[int, float] = {}
    histogram = np.zeros(GATE_BINS, dtype=np.int64)
    keyed, other = [], []
    previous_trace = model.gate_trace
    try:
        for start in range(0, len(examples), batch_size):
            chunk = list(examples[start:start + batch_size])
            batch = collate(chunk)
            model.gate_trace = []
            with model.store.no_grad():
                model.batch_nll(batch)
            for step, z in enumerate(model.gate_trace):
                for b, example in enumerate(chunk):
                    if batch.tgt_mask[b, step] == 0:
                        continue
                    row = z[b].astype(np.float64)
                    sums[step] = sums.get(step, 0.0) + float(row.sum())
                    counts[step] = counts.get(step, 0) + row.size
                    lows[step] = min(lows.get(step, np.inf), float(row.min()))
                    highs[step] = max(highs.get(step, -np.inf), float(row.max()))
                    histogram += np.histogram(row, bins=GATE_BINS, range=(0.0, 1.0))[0]
                    if key_positions is not None:
                        target = keyed if (example.doc_index, example.sent_index, step) in key_positions else other
                        target.append(float(row.mean()))
    finally:
        model.gate_trace = previous_trace

    result = GateStats(histogram=[int(c) for c in histogram])
    result.per_step = [(s, sums[s] / counts[s], lows[s], highs[s]) for s in sorted(sums)]
    result.mean = sum(sums.values()) / sum(counts.values())
    if key_positions is not None:
        result.keyed_mean = float(np.mean(keyed)) if keyed else None
        result.other_mean = float(np.mean(other)) if other else None
    return result
