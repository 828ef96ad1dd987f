# internal/cli.py

# argument parsing + one handler per command + key: value report rendering

from __future__ import annotations
import argparse
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .checkpoint import load_model, load_vocabularies, save_model
from .config import RunConfig, config_from_mapping, default_seed, load_config
from .corpus import (TrainingExample, build_vocab, format_documents, frame_source, frame_target,
                     make_examples, parse_documents, parse_parallel, window_for)
from .decode import translate_document
from .errors import ContractError
from .evaluation import (SystemScores, compare_systems, corpus_bleu, gate_stats, sentence_scores,
                         sign_test)
from .log import dprint, logging_to
from .model import Strategy, StrategyConfig, TranslationModel
from .numerics import check_gradients
from .synthgen import AnswerKey, SynthSpec, error_analysis, generate, score_consistency, score_senses
from .train import Trainer, log_path_for

SPLITS = ("train", "dev", "test")
GRADCHECK_TOL = 1e-6
GRADCHECK_SAMPLE = 16  # entries per parameter


def format_report(report: Mapping[str, object]) -> str:
    """One `key: value` per line, keys in insertion order."""
    return "".join(f"{k}: {v}\n" for k, v in report.items())


def display_report(report: Mapping[str, object]) -> None:
    dprint(format_report(report), end="")


def _flatten(documents) -> List[List[str]]:
    return [sentence for doc in documents for sentence in doc]


# ================================ gen-synth ================================
def cmd_gensynth(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sizes = {"train": args.train_docs, "dev": args.dev_docs, "test": args.test_docs}
    report: Dict[str, object] = {}
    for offset, split in enumerate(SPLITS):
        spec = SynthSpec(n_docs=sizes[split], sentences_per_doc=args.sentences, n_topics=args.topics,
                         n_ambiguous=args.ambiguous, filler_vocab=args.filler, ambiguity_rate=args.ambiguity_rate,
                         seed=args.seed + offset, min_len=args.min_len, max_len=args.max_len,
                         repeat_rate=args.repeat_rate)
        corpus = generate(spec)
        corpus.write(out / split)
        report[f"{split}_docs"] = spec.n_docs
        report[f"{split}_keyed"] = len(corpus.key.entries)
    display_report(report)
    return 0


# ================================ build-vocab ================================
def cmd_buildvocab(args: argparse.Namespace) -> int:
    sentences = [s for path in args.inputs for doc in parse_documents(path) for s in doc]
    vocab = build_vocab(sentences, args.cap)
    vocab.save(args.out)
    display_report({"size": len(vocab), "coverage": f"{vocab.coverage:.4f}"})
    return 0


# ================================ train ================================
def _run_config(args: argparse.Namespace) -> RunConfig:
    profile = getattr(args, "profile", None)
    if args.config:
        config = load_config(args.config, profile=profile)
    else:
        config = config_from_mapping({"profile": profile} if profile else {})
    return config.with_overrides(strategy=getattr(args, "strategy", None), seed=getattr(args, "seed", None),
                                 epochs=getattr(args, "epochs", None), patience=getattr(args, "patience", None))


def cmd_train(args: argparse.Namespace) -> int:
    config = _run_config(args)
    train = parse_parallel(args.train_src, args.train_tgt)
    dev = parse_parallel(args.dev_src, args.dev_tgt)
    src_vocab = build_vocab(train.sentences("source"), config.src_vocab_cap)
    tgt_vocab = build_vocab(train.sentences("target"), config.tgt_vocab_cap)
    model = TranslationModel(config.strategy_config(len(src_vocab), len(tgt_vocab)),
                             seed=config.seed, precision=config.precision)
    examples = make_examples(train, src_vocab, tgt_vocab, model.config.K, config.max_len)
    if not examples:
        raise ContractError(f"no training pairs within max_len {config.max_len}")

    with logging_to(log_path_for(args.out)):
        dprint(f"[train] source vocab {len(src_vocab)} coverage {src_vocab.coverage:.4f}")
        dprint(f"[train] target vocab {len(tgt_vocab)} coverage {tgt_vocab.coverage:.4f}")
        skipped = train.n_pairs - len(examples)
        if skipped:
            dprint(f"[train] skipped {skipped} over-length pair(s)")
        trainer = Trainer(model, config, src_vocab, tgt_vocab,
                          on_best=lambda t: save_model(t.model, args.out, src_vocab, tgt_vocab))
        trainer.fit(examples, dev)
    return 0


# ================================ translate ================================
def cmd_translate(args: argparse.Namespace) -> int:
    model, metadata = load_model(args.model)
    src_vocab, tgt_vocab = load_vocabularies(args.model, metadata)
    documents = parse_documents(args.input)
    sizes: List[int] = []
    outputs = []
    for doc in documents:
        ids = [src_vocab.encode(sentence) for sentence in doc]
        hyps = translate_document(model, ids, beam=args.beam, window_sizes=sizes)
        outputs.append([tgt_vocab.decode(h) for h in hyps])
    Path(args.out).write_text(format_documents(outputs), encoding="utf-8")
    if args.windows:
        Path(args.windows).write_text("".join(f"{n}\n" for n in sizes), encoding="utf-8")
    display_report({"documents": len(outputs), "sentences": len(sizes)})
    return 0


# ================================ bleu / signtest ================================
def _references(paths: Sequence[str]) -> List[List[List[str]]]:
    """Per sentence, the list of its references (one per reference file)."""
    sides = [_flatten(parse_documents(p)) for p in paths]
    for path, side in zip(paths[1:], sides[1:]):
        if len(side) != len(sides[0]):
            raise ContractError(f"{path}: {len(side)} sentences, {paths[0]} has {len(sides[0])}")
    return [list(refs) for refs in zip(*sides)]


def cmd_bleu(args: argparse.Namespace) -> int:
    sets = [(args.hyp, args.refs)] + [(h, [r]) for h, r in (args.extra or [])]
    report: Dict[str, object] = {}
    scores = []
    for index, (hyp_path, ref_paths) in enumerate(sets):
        result = corpus_bleu(_flatten(parse_documents(hyp_path)), _references(ref_paths),
                             lowercase=not args.case_sensitive)
        scores.append(result.bleu)
        prefix = "" if index == 0 else f"set{index + 1}_"
        report.update({prefix + k: v for k, v in result.as_report().items()})
    if len(sets) > 1:
        report["bleu_avg"] = f"{100.0 * float(np.mean(scores)):.2f}"
    display_report(report)
    return 0


def cmd_signtest(args: argparse.Namespace) -> int:
    refs = _references(args.refs)
    scores_a = sentence_scores(_flatten(parse_documents(args.hyp_a)), refs)
    scores_b = sentence_scores(_flatten(parse_documents(args.hyp_b)), refs)
    display_report(sign_test(scores_a, scores_b).as_report())
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    """BLEU per system and test set, sign test of every system against the first one."""
    refs = [_references([r]) for r in args.refs]
    set_names = [Path(r).stem for r in args.refs]
    systems = []
    baseline_scores = None
    for spec in args.systems:
        name, _, joined = spec.partition("=")
        hyp_paths = joined.split(",")
        if len(hyp_paths) != len(refs):
            raise ContractError(f"{name}: {len(hyp_paths)} hypothesis files for {len(refs)} test sets")
        hyps = [_flatten(parse_documents(p)) for p in hyp_paths]
        bleu = tuple(corpus_bleu(h, r).bleu for h, r in zip(hyps, refs))
        per_sentence = [s for h, r in zip(hyps, refs) for s in sentence_scores(h, r)]
        versus = None if baseline_scores is None else sign_test(per_sentence, baseline_scores)
        baseline_scores = baseline_scores or per_sentence
        systems.append(SystemScores(name, bleu, versus))
    dprint(compare_systems(systems, set_names), end="")
    return 0


# ================================ senses ================================
def cmd_senses(args: argparse.Namespace) -> int:
    key = AnswerKey.load(args.key)
    hyps = parse_documents(args.hyp)
    report: Dict[str, object] = {"sense_accuracy": f"{score_senses(hyps, key):.4f}"}
    consistency = score_consistency(hyps, key)
    report["consistency"] = "n/a" if consistency is None else f"{consistency:.4f}"
    if args.baseline:
        for category, counts in error_analysis(parse_documents(args.baseline), hyps, key).items():
            report[f"{category}_total"] = counts.total
            report[f"{category}_fixed"] = counts.fixed
            report[f"{category}_new"] = counts.new
    display_report(report)
    return 0


# ================================ gate-stats ================================
def cmd_gatestats(args: argparse.Namespace) -> int:
    model, metadata = load_model(args.model)
    src_vocab, tgt_vocab = load_vocabularies(args.model, metadata)
    corpus = parse_parallel(args.src, args.tgt)
    examples = make_examples(corpus, src_vocab, tgt_vocab, model.config.K, model.config.max_len)
    key = AnswerKey.load(args.key).positions() if args.key else None
    display_report(gate_stats(model, examples, key_positions=key).as_report())
    return 0


# ================================ grad-check ================================
def gradcheck_example(config: StrategyConfig, rng: np.random.Generator, history: int = 2) -> TrainingExample:
    """A random example whose window holds `history` sentences."""
    low, v_src, v_tgt = 4, config.src_vocab_size, config.tgt_vocab_size
    doc = [[int(t) for t in rng.integers(low, v_src, size=int(rng.integers(2, 4)))] for _ in range(history + 1)]
    target = [int(t) for t in rng.integers(low, v_tgt, size=int(rng.integers(2, 4)))]
    return TrainingExample(source=frame_source(doc[-1]), target=frame_target(target),
                           window=window_for(doc, history, max(config.K, history), config.max_len),
                           doc_index=0, sent_index=history)


def cmd_gradcheck(args: argparse.Namespace) -> int:
    strategies = [Strategy.parse(s) for s in args.strategies] if args.strategies else list(Strategy)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    report: Dict[str, object] = {}
    for strategy in strategies:
        d = args.dims
        config = StrategyConfig(strategy=strategy, K=3, emb_dim=d, enc_hidden=d, dec_hidden=d, d_ctx=d,
                                attn_dim=d, readout_dim=d, src_vocab_size=args.vocab, tgt_vocab_size=args.vocab)
        model = TranslationModel(config, seed=args.seed, precision=64)
        example = gradcheck_example(config, rng)
        result = check_gradients(lambda: model.sentence_loss(example), model.store,
                                 max_entries=args.max_entries or None, seed=args.seed)
        worst = max(worst, result.max_error)
        report[strategy.value] = f"{result.max_error:.3e} ({result.worst})"
    report["max_relative_error"] = f"{worst:.3e}"
    display_report(report)
    return 0 if worst <= GRADCHECK_TOL else 1


# ================================ parser ================================
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxnmt", description="Document-context neural machine translation")
    parser.add_argument("--quiet", action="store_true", help="no console output (log files are still written)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write synthetic train/dev/test corpora with an answer key")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--train-docs", type=int, default=2000)
    p.add_argument("--dev-docs", type=int, default=200)
    p.add_argument("--test-docs", type=int, default=200)
    p.add_argument("--sentences", type=int, default=4)
    p.add_argument("--topics", type=int, default=2)
    p.add_argument("--ambiguous", type=int, default=4)
    p.add_argument("--filler", type=int, default=50)
    p.add_argument("--ambiguity-rate", type=float, default=0.5)
    p.add_argument("--repeat-rate", type=float, default=0.0)
    p.add_argument("--min-len", type=int, default=4)
    p.add_argument("--max-len", type=int, default=8)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gensynth)

    p = sub.add_parser("build-vocab", help="frequency-ranked vocabulary of one corpus side")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--cap", type=int, default=35000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_buildvocab)

    p = sub.add_parser("train", help="train one strategy with early stopping on dev BLEU")
    p.add_argument("--config")
    p.add_argument("--profile")
    p.add_argument("--strategy")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--train-src", required=True)
    p.add_argument("--train-tgt", required=True)
    p.add_argument("--dev-src", required=True)
    p.add_argument("--dev-tgt", required=True)
    p.add_argument("--out", required=True, help="model file; <out>.log and vocabularies are written next to it")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="document-aware translation")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=1)
    p.add_argument("--windows", help="write the context window size of every sentence here")
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("bleu", help="case-insensitive corpus BLEU")
    p.add_argument("hyp")
    p.add_argument("refs", nargs="+")
    p.add_argument("--extra", nargs=2, action="append", metavar=("HYP", "REF"),
                   help="additional test set (repeatable); the average is reported too")
    p.add_argument("--case-sensitive", action="store_true")
    p.set_defaults(func=cmd_bleu)

    p = sub.add_parser("signtest", help="sign test on smoothed sentence BLEU of two systems")
    p.add_argument("hyp_a")
    p.add_argument("hyp_b")
    p.add_argument("--refs", nargs="+", required=True)
    p.set_defaults(func=cmd_signtest)

    p = sub.add_parser("compare", help="BLEU table over systems and test sets")
    p.add_argument("--refs", nargs="+", required=True, help="one reference file per test set")
    p.add_argument("systems", nargs="+", metavar="NAME=HYP[,HYP...]", help="first system is the baseline")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("score-senses", help="sense accuracy and consistency against an answer key")
    p.add_argument("hyp")
    p.add_argument("--key", required=True)
    p.add_argument("--baseline", help="baseline hypotheses for the fixed/new error table")
    p.set_defaults(func=cmd_senses)

    p = sub.add_parser("gate-stats", help="context gate activations under teacher forcing")
    p.add_argument("--model", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    p.add_argument("--key")
    p.set_defaults(func=cmd_gatestats)

    p = sub.add_parser("grad-check", help="finite-difference check of every strategy's gradients")
    p.add_argument("--strategies", nargs="*")
    p.add_argument("--dims", type=int, default=8)
    p.add_argument("--vocab", type=int, default=12)
    p.add_argument("--max-entries", type=int, default=GRADCHECK_SAMPLE,
                   help="seeded sample of entries per parameter (0 checks every entry)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", 0) is None and args.command != "train":
        args.seed = default_seed()
    return args
