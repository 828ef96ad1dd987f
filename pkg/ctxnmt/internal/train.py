# internal/train.py

# epoch loop with Adam, greedy dev BLEU after every epoch and early stopping

from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from .config import RunConfig
from .corpus import BatchStream, DocumentCorpus, TrainingExample, Vocabulary, batch
from .decode import translate_document
from .evaluation import BleuResult, corpus_bleu
from .log import dprint
from .model import TranslationModel
from .numerics import backward, sgd_adam_step


@dataclass
class EpochRecord:
    epoch: int
    loss: float      # mean per-token training loss
    dev_bleu: float  # in [0, 1]
    improved: bool


@dataclass
class Trainer:
    model: TranslationModel
    config: RunConfig
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    on_best: Optional[Callable[["Trainer"], None]] = None  # e.g. write the checkpoint
    history: List[EpochRecord] = field(default_factory=list)
    best_bleu: float = -1.0
    best_epoch: int = 0
    best_snapshot: Optional[Dict[str, np.ndarray]] = None

    def train_epoch(self, stream: BatchStream, epoch: int) -> float:
        """One pass over the shuffled stream; returns the mean per-token loss."""
        store = self.model.store
        total, tokens = 0.0, 0
        for b in stream.epoch(epoch):
            loss = self.model.batch_loss(b)
            value = loss.item()
            backward(loss, store)
            sgd_adam_step(store, self.config.lr, self.config.clip_norm)
            total += value * b.n_tokens
            tokens += b.n_tokens
        return total / max(tokens, 1)

    def translate_corpus(self, documents: Sequence[Sequence[Sequence[str]]], beam: int = 1) -> List[List[List[str]]]:
        """Token documents in, token documents out."""
        out = []
        for doc in documents:
            ids = [self.src_vocab.encode(sentence) for sentence in doc]
            hyps = translate_document(self.model, ids, beam=beam)
            out.append([self.tgt_vocab.decode(h) for h in hyps])
        return out

    def evaluate(self, dev: DocumentCorpus) -> BleuResult:
        hyps = [s for doc in self.translate_corpus(dev.side("source")) for s in doc]
        refs = [[s] for s in dev.sentences("target")]
        return corpus_bleu(hyps, refs, lowercase=True)

    def fit(self, examples: Sequence[TrainingExample], dev: DocumentCorpus) -> List[EpochRecord]:
        """
        Train until `patience` epochs pass without a better dev BLEU (patience 0
        stops after the first epoch) or `epochs` run out. The best parameters
        are restored at the end.
        """
        stream = batch(examples, self.config.batch_size, self.config.seed)
        dprint(f"[train] strategy {self.model.strategy.value} examples {len(examples)} "
               f"batches/epoch {len(stream)} weights {self.model.store.n_weights()}")
        since_best = 0
        for epoch in range(1, self.config.epochs + 1):
            loss = self.train_epoch(stream, epoch)
            bleu = self.evaluate(dev).bleu
            improved = bleu > self.best_bleu
            self.history.append(EpochRecord(epoch, loss, bleu, improved))
            dprint(f"[train] epoch {epoch} loss {loss:.6f} dev_bleu {100.0 * bleu:.2f}" + (" *" if improved else ""))
            if improved:
                self.best_bleu, self.best_epoch = bleu, epoch
                self.best_snapshot = self.model.store.snapshot()
                since_best = 0
                if self.on_best is not None:
                    self.on_best(self)
            else:
                since_best += 1
            if since_best >= self.config.patience:
                dprint(f"[train] stopping after epoch {epoch}: no improvement for {since_best} epoch(s)")
                break
        if self.best_snapshot is not None:
            self.model.store.restore(self.best_snapshot)
        dprint(f"[train] best epoch {self.best_epoch} dev_bleu {100.0 * self.best_bleu:.2f}")
        return self.history


def log_path_for(model_path: str | Path) -> Path:
    model_path = Path(model_path)
    return model_path.with_name(model_path.name + ".log")
