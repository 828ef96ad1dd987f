# ctxnmt/tests/integration/test_acceptance.py
#
# Synthetic disambiguation experiments. The full runs take minutes per
# training and only run with CTXNMT_ACCEPTANCE=1; the smoke test always runs.

import os
from typing import List, NamedTuple, Optional

import pytest

from ctxnmt.internal.config import config_from_mapping
from ctxnmt.internal.corpus import build_vocab, make_examples
from ctxnmt.internal.evaluation import GateStats, corpus_bleu, gate_stats, sentence_scores, sign_test
from ctxnmt.internal.model import Strategy, TranslationModel
from ctxnmt.internal.synthgen import SynthSpec, generate, score_senses
from ctxnmt.internal.train import Trainer
from ctxnmt.internal.utils import parse_bool

FULL = parse_bool(os.environ.get("CTXNMT_ACCEPTANCE", "0") or "0")
SEEDS = (0, 1, 2)


class Run(NamedTuple):
    accuracy: float          # sense accuracy on the answer key
    bleu: float
    scores: List[float]      # smoothed sentence BLEU, for the sign test
    token_accuracy: float    # position-wise token matches over reference tokens
    gates: Optional[GateStats]


def _token_accuracy(hyps, refs) -> float:
    matched = sum(h == r for hyp, ref in zip(hyps, refs) for h, r in zip(hyp, ref))
    return matched / sum(len(ref) for ref in refs)


def run_experiment(strategy, seed, train_docs, test_docs, epochs, dims=None, filler=50, min_len=4, max_len=8,
                   ambiguity_rate=0.5) -> Run:
    """Train one strategy on a fresh synthetic corpus and score it on a held-out test corpus."""
    common = dict(sentences_per_doc=4, n_topics=2, n_ambiguous=4, filler_vocab=filler,
                  ambiguity_rate=ambiguity_rate, min_len=min_len, max_len=max_len)
    train = generate(SynthSpec(n_docs=train_docs, seed=seed, **common)).as_corpus()
    dev = generate(SynthSpec(n_docs=max(test_docs // 2, 2), seed=seed + 100, **common)).as_corpus()
    test = generate(SynthSpec(n_docs=test_docs, seed=seed + 200, **common))

    values = {"profile": "toy", "strategy": strategy, "K": "3", "seed": str(seed), "epochs": str(epochs),
              "patience": "5", "batch_size": "32", "lr": "0.002"}
    values.update({k: str(v) for k, v in (dims or {}).items()})
    config = config_from_mapping(values)
    src_vocab = build_vocab(train.sentences("source"), config.src_vocab_cap)
    tgt_vocab = build_vocab(train.sentences("target"), config.tgt_vocab_cap)
    model = TranslationModel(config.strategy_config(len(src_vocab), len(tgt_vocab)), seed=seed)
    trainer = Trainer(model, config, src_vocab, tgt_vocab)
    trainer.fit(make_examples(train, src_vocab, tgt_vocab, config.K, config.max_len), dev)

    test_corpus = test.as_corpus()
    hyps = trainer.translate_corpus(test_corpus.side("source"))
    flat = [s for doc in hyps for s in doc]
    refs = list(test_corpus.sentences("target"))
    gates = None
    if Strategy.parse(strategy).gated and test.key.entries:
        examples = make_examples(test_corpus, src_vocab, tgt_vocab, config.K, config.max_len)
        gates = gate_stats(model, examples, key_positions=test.key.positions())
    return Run(score_senses(hyps, test.key), corpus_bleu(flat, [[r] for r in refs]).bleu,
               sentence_scores(flat, [[r] for r in refs]), _token_accuracy(flat, refs), gates)


# ========================== smoke ==========================
def test_scaled_down_experiment_runs_end_to_end():
    dims = {"emb_dim": 8, "enc_hidden": 8, "dec_hidden": 8, "d_ctx": 8, "attn_dim": 8, "readout_dim": 8}
    run = run_experiment("GatedAux", seed=0, train_docs=6, test_docs=2, epochs=1,
                         dims=dims, filler=6, min_len=2, max_len=3)
    assert 0.0 <= run.accuracy <= 1.0
    assert 0.0 <= run.bleu <= 1.0
    assert 0.0 <= run.token_accuracy <= 1.0
    assert len(run.scores) == 2 * 4


# ========================== full runs ==========================
@pytest.fixture(scope="module")
def results():
    table = {}
    for strategy in ("Baseline", "GatedAux", "InitBothGatedAux"):
        for seed in SEEDS:
            table[strategy, seed] = run_experiment(strategy, seed, train_docs=2000, test_docs=200, epochs=30)
    return table


def _majority(checks):
    return sum(bool(c) for c in checks) >= 2


@pytest.mark.skipif(not FULL, reason="set CTXNMT_ACCEPTANCE=1 to run the synthetic experiments")
def test_context_resolves_ambiguity(results):
    assert _majority(results["Baseline", s].accuracy <= 0.65 for s in SEEDS), "baseline cannot see the topic"
    assert _majority(results["GatedAux", s].accuracy >= 0.90 for s in SEEDS)
    assert _majority(results["InitBothGatedAux", s].accuracy >= results["GatedAux", s].accuracy - 0.02
                     for s in SEEDS)


@pytest.mark.skipif(not FULL, reason="set CTXNMT_ACCEPTANCE=1 to run the synthetic experiments")
def test_context_improves_bleu_significantly(results):
    for strategy in ("GatedAux", "InitBothGatedAux"):
        gains = [100.0 * (results[strategy, s].bleu - results["Baseline", s].bleu) for s in SEEDS]
        assert _majority(g >= 5.0 for g in gains), f"{strategy}: BLEU gains {gains}"
    p_values = [sign_test(results["GatedAux", s].scores, results["Baseline", s].scores).p_value for s in SEEDS]
    assert _majority(p < 0.01 for p in p_values), f"p-values {p_values}"


@pytest.mark.skipif(not FULL, reason="set CTXNMT_ACCEPTANCE=1 to run the synthetic experiments")
def test_gate_opens_wider_on_ambiguous_words(results):
    gates = [results["GatedAux", s].gates for s in SEEDS]
    assert _majority(g.keyed_mean > g.other_mean for g in gates), \
        f"keyed/other means {[(g.keyed_mean, g.other_mean) for g in gates]}"


@pytest.mark.skipif(not FULL, reason="set CTXNMT_ACCEPTANCE=1 to run the synthetic experiments")
def test_copy_task_is_learned():
    run = run_experiment("Baseline", seed=0, train_docs=2000, test_docs=200, epochs=30, ambiguity_rate=0.0)
    assert run.token_accuracy >= 0.99
