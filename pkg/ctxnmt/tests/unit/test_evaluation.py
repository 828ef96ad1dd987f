# ctxnmt/tests/unit/test_evaluation.py

import math

import numpy as np
import pytest
import sacrebleu

from ctxnmt.internal.context import ContextWindow
from ctxnmt.internal.corpus import BOS, TrainingExample
from ctxnmt.internal.errors import ContractError
from ctxnmt.internal.evaluation import (
    GATE_BINS,
    SignTestResult,
    SystemScores,
    compare_systems,
    corpus_bleu,
    gate_stats,
    sentence_bleu_smoothed,
    sentence_scores,
    sign_test,
)
from ctxnmt.internal.model import StrategyConfig, TranslationModel

REFS = [
    "the cat is on the mat",
    "there is a cat on the mat",
    "a quick brown fox jumps over the lazy dog",
]


def _single(refs):
    return [[r] for r in refs]


# ============================== test corpus_bleu ==============================

def test_identical_corpus_scores_one():
    result = corpus_bleu(REFS, _single(REFS))
    assert result.bleu == pytest.approx(1.0)
    assert result.brevity_penalty == 1.0
    assert result.as_report()["bleu"] == "100.00"


def test_clipped_unigram_precision():
    result = corpus_bleu(["the the the the the the the"], [["the cat is on the mat"]])
    assert result.precisions[0] == pytest.approx(2 / 7)
    assert result.bleu == 0.0, "no bigram matches, so corpus BLEU is zero"


def test_no_four_gram_overlap_gives_zero():
    result = corpus_bleu(["the cat sat on a mat"], [["a cat sat upon the mat"]])
    assert result.precisions[3] == 0.0
    assert result.bleu == 0.0


def test_brevity_penalty_for_short_output():
    result = corpus_bleu(["the cat is on the"], [["the cat is on the mat"]])
    assert result.brevity_penalty == pytest.approx(math.exp(1 - 6 / 5))
    assert result.bleu == pytest.approx(result.brevity_penalty)


def test_closest_reference_length_ties_go_to_shorter():
    result = corpus_bleu(["a b c d e"], [["a b c d", "a b c d e f"]])
    assert result.ref_len == 4


def test_multi_reference_clipping_uses_max_count():
    one = corpus_bleu(["the the cat"], [["the cat sat"]])
    two = corpus_bleu(["the the cat"], [["the cat sat", "the the dog"]])
    assert one.precisions[0] == pytest.approx(2 / 3)
    assert two.precisions[0] == pytest.approx(1.0)


def test_corpus_bleu_ignores_sentence_order():
    hyps = ["the cat is on a mat", "there is one cat on the mat", "a brown fox jumps over the dog"]
    forward = corpus_bleu(hyps, _single(REFS)).bleu
    backward = corpus_bleu(hyps[::-1], _single(REFS[::-1])).bleu
    assert forward == pytest.approx(backward)
    assert 0.0 < forward < 1.0


def test_lowercase_flag_matches_lowercased_inputs():
    hyps = ["The Cat is on THE mat"]
    refs = [["the cat IS on the Mat"]]
    folded = corpus_bleu(hyps, refs, lowercase=True)
    manual = corpus_bleu([h.lower() for h in hyps], [[r.lower() for r in rs] for rs in refs], lowercase=False)
    assert folded == manual
    assert corpus_bleu(hyps, refs, lowercase=False).bleu < folded.bleu


def test_agrees_with_sacrebleu_on_pretokenized_text():
    hyps = ["the cat is on a mat", "there is one cat on the mat", "a brown fox jumps over the dog"]
    expected = sacrebleu.corpus_bleu(hyps, [REFS], tokenize="none", lowercase=True, smooth_method="none")
    result = corpus_bleu(hyps, _single(REFS))
    assert result.bleu == pytest.approx(expected.score / 100.0)
    assert (result.hyp_len, result.ref_len) == (expected.sys_len, expected.ref_len)


def test_token_lists_and_strings_score_the_same():
    as_tokens = [h.split() for h in REFS]
    assert corpus_bleu(as_tokens, _single(REFS)) == corpus_bleu(REFS, _single(REFS))


def test_sentences_may_have_different_numbers_of_references():
    hyps = ["the the cat", "a quick brown fox"]
    refs = [["the cat sat", "the the dog"], ["a quick brown fox"]]
    result = corpus_bleu(hyps, refs)
    assert result.precisions[0] == pytest.approx(1.0)
    assert result.ref_len == 3 + 4


def test_brevity_penalty_reported_when_nothing_matches():
    result = corpus_bleu(["x y"], [["a b c d"]])
    assert result.bleu == 0.0
    assert result.brevity_penalty == pytest.approx(math.exp(1 - 4 / 2))


def test_report_keys():
    report = corpus_bleu(REFS, _single(REFS)).as_report()
    assert list(report) == ["bleu", "p1", "p2", "p3", "p4", "bp", "hyp_len", "ref_len"]


@pytest.mark.parametrize("hyps, refs", [(["a"], []), (["a"], [[]])])
def test_corpus_bleu_contract_errors(hyps, refs):
    with pytest.raises(ContractError):
        corpus_bleu(hyps, refs)


# ============================== test sentence_bleu_smoothed ==============================

def test_smoothed_identical_is_one():
    assert sentence_bleu_smoothed(REFS[2], [REFS[2]]) == pytest.approx(1.0)


def test_smoothed_disjoint_is_small_but_positive():
    hyp = " ".join(f"h{i}" for i in range(30))
    ref = " ".join(f"r{i}" for i in range(30))
    score = sentence_bleu_smoothed(hyp, [ref])
    assert score == pytest.approx((1 / (31 * 30 * 29 * 28)) ** 0.25)
    assert 0.0 < score < 0.05


def test_longer_hypothesis_with_same_matches_scores_no_higher():
    ref = ["the cat is on the mat"]
    short = sentence_bleu_smoothed("the cat is on the mat", ref)
    longer = sentence_bleu_smoothed("the cat is on the mat today again", ref)
    assert longer <= short


def test_sentence_scores_one_per_pair():
    scores = sentence_scores(REFS, _single(REFS))
    assert scores == pytest.approx([1.0, 1.0, 1.0])


# ============================== test sign_test ==============================

def test_all_wins():
    result = sign_test([1.0] * 10, [0.0] * 10)
    assert (result.wins, result.losses, result.ties) == (10, 0, 0)
    assert result.p_value == pytest.approx(2 * 0.5 ** 10)
    assert result.significant


def test_eight_wins_two_losses_is_exact():
    a = [1.0] * 8 + [0.0] * 2
    b = [0.0] * 8 + [1.0] * 2
    assert sign_test(a, b).p_value == pytest.approx(112 / 1024, abs=1e-12)


def test_balanced_outcome_is_capped_at_one():
    a = [1.0] * 5 + [0.0] * 5
    assert sign_test(a, a[::-1]).p_value == 1.0


def test_all_ties():
    result = sign_test([0.3, 0.4], [0.3, 0.4])
    assert (result.n, result.ties, result.p_value) == (0, 2, 1.0)
    assert result.as_report()["p_value"] == "1.0"


def test_monotonic_transform_leaves_result_unchanged():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(size=15), rng.uniform(size=15)
    assert sign_test(a, b) == sign_test(np.exp(3 * a), np.exp(3 * b))


def test_sign_test_length_mismatch():
    with pytest.raises(ContractError):
        sign_test([1.0], [1.0, 2.0])


# ============================== test compare_systems ==============================

def test_compare_systems_table():
    significant = SignTestResult(wins=10, losses=0, ties=0, p_value=0.002)
    table = compare_systems(
        [SystemScores("Baseline", (0.20, 0.30)), SystemScores("GatedAux", (0.25, 0.33), significant)],
        ["dev", "test"],
    )
    lines = table.splitlines()
    assert lines[0].split() == ["system", "dev", "test", "avg", "delta"]
    assert lines[1].split() == ["Baseline", "20.00", "30.00", "25.00", "+0.00"]
    assert lines[2].split() == ["GatedAux†", "25.00", "33.00", "29.00", "+4.00"]


def test_compare_systems_needs_a_score_per_set():
    with pytest.raises(ContractError):
        compare_systems([SystemScores("Baseline", (0.2,))], ["dev", "test"])


# ============================== test gate_stats ==============================

def _gated(strategy="GatedAux"):
    config = StrategyConfig(strategy=strategy, K=2, emb_dim=4, enc_hidden=5, dec_hidden=6, d_ctx=5,
                            attn_dim=4, readout_dim=3, src_vocab_size=9, tgt_vocab_size=9, max_len=10)
    return TranslationModel(config, seed=0, precision=64)


def _examples():
    return [
        TrainingExample((4, 5, 3), (BOS, 6, 7, 3), ContextWindow(((4, 6, 3),), 2), doc_index=0, sent_index=1),
        TrainingExample((7, 3), (BOS, 8, 3), ContextWindow(((4, 3), (5, 3)), 2), doc_index=0, sent_index=2),
    ]


def test_zero_weight_gate_reports_one_half():
    model = _gated()
    for name in model.store:
        if name.startswith("gate."):
            model.store.set_value(name, np.zeros_like(model.store.value(name)))
    stats = gate_stats(model, _examples())

    assert stats.mean == 0.5
    assert [(s, m, lo, hi) for s, m, lo, hi in stats.per_step] == [(0, 0.5, 0.5, 0.5), (1, 0.5, 0.5, 0.5),
                                                                 (2, 0.5, 0.5, 0.5)]
    assert len(stats.histogram) == GATE_BINS
    assert sum(stats.histogram) == (3 + 2) * 5, "padded steps are ignored"


def test_forced_open_gate_reports_one():
    model = _gated()
    model.force_gate = 1.0
    stats = gate_stats(model, _examples(), batch_size=1)
    assert stats.mean == 1.0
    assert all(m == lo == hi == 1.0 for _, m, lo, hi in stats.per_step)
    assert stats.histogram[-1] == sum(stats.histogram)


def test_keyed_positions_are_split_out():
    stats = gate_stats(_gated(), _examples(), key_positions={(0, 1, 0)})
    assert stats.keyed_mean is not None and stats.other_mean is not None
    assert "keyed_mean" in stats.as_report()


def test_gate_trace_is_restored():
    model = _gated()
    gate_stats(model, _examples())
    assert model.gate_trace is None


def test_ungated_strategy_is_rejected():
    with pytest.raises(ContractError):
        gate_stats(_gated("Aux"), _examples())
