"""SGD training with dev-decay, for the ML, RAML and alpha-DiMT objectives."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import model as M
from .augment import AugmentConfig, AugmentedSample, augment_pairs
from .errors import ConfigError
from .objectives import ObjectiveConfig, normalize_weights, raw_log_weight, sequence_weights
from .rewards import corpus_bleu
from .seqcore import ParallelCorpus, Vocab, batches

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    lr0: float = 1.0
    lr_min: float = 0.05
    decay: float = 0.5
    batch_size: int = 32
    max_epochs: int = 30
    clip_norm: float = 5.0
    seed: int = 0
    checkpoint_dir: str | None = None

    def validate(self) -> None:
        if not 0 < self.lr_min <= self.lr0:
            raise ConfigError("need 0 < lr_min <= lr0")
        if not 0 < self.decay < 1:
            raise ConfigError("decay must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be >= 1")
        if not self.clip_norm > 0:
            raise ConfigError("clip_norm must be > 0")
        self.augment.validate()


class DevDecay:
    """Multiply the learning rate by ``decay`` after each epoch that fails to beat the best dev score."""

    def __init__(self, lr0: float, decay: float, lr_min: float):
        self.lr, self.decay, self.lr_min = lr0, decay, lr_min
        self.best = -math.inf

    def update(self, score: float) -> bool:
        """Record one epoch's dev score; True if it is a new best."""
        if score > self.best:
            self.best = score
            return True
        self.lr *= self.decay
        return False

    @property
    def stopped(self) -> bool:
        return self.lr < self.lr_min


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    mean_loss: float
    dev_bleu: float
    lr: float
    wall_time: float = field(default=0.0, compare=False)


@dataclass
class TrainReport:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_bleu: float = -math.inf

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, delimiter="\t", lineterminator="\n")
            w.writerow(["epoch", "mean_loss", "dev_bleu", "lr", "wall_time", "best"])
            for r in self.epochs:
                w.writerow([r.epoch, repr(r.mean_loss), repr(r.dev_bleu), repr(r.lr), f"{r.wall_time:.3f}",
                            int(r.epoch == self.best_epoch)])

    @classmethod
    def load(cls, path: str | Path) -> "TrainReport":
        report = cls()
        with open(path, encoding="utf-8", newline="") as f:
            for row in csv.DictReader(f, delimiter="\t"):
                rec = EpochRecord(int(row["epoch"]), float(row["mean_loss"]), float(row["dev_bleu"]),
                                  float(row["lr"]), float(row["wall_time"]))
                report.epochs.append(rec)
                if row["best"] == "1":
                    report.best_epoch, report.best_dev_bleu = rec.epoch, rec.dev_bleu
        return report


def decode_corpus(params: M.Params, sources: Sequence, search: str = "greedy", beam: int = 10,
                  max_len: int = 30, chunk: int = 256) -> list:
    if search == "greedy":
        out = []
        for i in range(0, len(sources), chunk):
            out.extend(M.greedy_decode_batch(params, sources[i : i + chunk], max_len)[0])
        return out
    if search == "beam":
        return [M.beam_decode(params, x, beam, max_len) for x in sources]
    raise ValueError(f"unknown search {search!r}")


def evaluate(params: M.Params, corpus: ParallelCorpus, search: str = "greedy", beam: int = 10,
             max_len: int = 30) -> float:
    """Corpus BLEU of decoded sources against the corpus targets."""
    if len(corpus) == 0:
        raise ValueError("cannot evaluate on an empty corpus")
    hyps = decode_corpus(params, corpus.sources, search, beam, max_len)
    return corpus_bleu(hyps, corpus.targets)


def global_clip(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(math.fsum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def batch_objective(
    params: M.Params,
    corpus: ParallelCorpus,
    pair_ids: Sequence[int],
    samples: Sequence[AugmentedSample] | None,
    objective: ObjectiveConfig,
):
    """Surrogate loss and gradient for one batch.

    ``samples`` holds the proposal draws for ``pair_ids`` grouped by pair
    (ignored for ML). Weights come from the current parameters and are
    then held fixed.
    """
    if objective.kind == "ml":
        srcs = [corpus.pairs[i][0] for i in pair_ids]
        tgts = [corpus.pairs[i][1] for i in pair_ids]
        fc = M.forward(params, srcs, tgts)
        coef = np.full(len(pair_ids), 1.0 / len(pair_ids))
        weighted = None
    else:
        ctx_of = {pid: c for c, pid in enumerate(pair_ids)}
        srcs = [corpus.pairs[i][0] for i in pair_ids]
        tgts = [s.y_tilde for s in samples]
        src_index = [ctx_of[s.pair_id] for s in samples]
        fc = M.forward(params, srcs, tgts, src_index)
        u = raw_log_weight(fc.seq_log_probs, [s.reward for s in samples], [s.log_q0 for s in samples], objective)
        weighted = normalize_weights(u, src_index, samples=samples)
        coef = sequence_weights(weighted)
    nz = coef != 0
    loss = -math.fsum(coef[nz] * fc.seq_log_probs[nz])
    return loss, M.backward(params, fc, coef), fc, weighted


def train(
    train_corpus: ParallelCorpus,
    dev_corpus: ParallelCorpus,
    vocab: Vocab,
    model_cfg: M.ModelConfig,
    cfg: TrainConfig,
    augmented: Sequence[AugmentedSample] | None = None,
    params: M.Params | None = None,
) -> tuple[M.Params, TrainReport]:
    """Train and return the parameters of the best-dev-BLEU epoch.

    ``augmented`` is a persisted sample set reused every epoch; without it,
    fresh proposal draws are made per epoch from (seed, pair, epoch) streams.
    """
    cfg.validate()
    if len(dev_corpus) == 0:
        raise ConfigError("dev split must be nonempty")
    params = M.init_params(model_cfg) if params is None else {k: v.copy() for k, v in params.items()}
    by_pair: dict[int, list[AugmentedSample]] | None = None
    if augmented is not None:
        by_pair = {}
        for s in augmented:
            by_pair.setdefault(s.pair_id, []).append(s)

    report = TrainReport()
    best = {k: v.copy() for k, v in params.items()}
    schedule = DevDecay(cfg.lr0, cfg.decay, cfg.lr_min)
    for epoch in range(1, cfg.max_epochs + 1):
        start = time.perf_counter()
        lr = schedule.lr
        losses = []
        for bi, batch in enumerate(batches(train_corpus, cfg.batch_size, seed=[cfg.seed, epoch])):
            ids = batch.pair_ids.tolist()
            samples = None
            if cfg.objective.kind != "ml":
                if by_pair is not None:
                    samples = [s for pid in ids for s in by_pair[pid]]
                else:
                    samples = augment_pairs(train_corpus, vocab, cfg.augment, ids, epoch)
            loss, grads, _, _ = batch_objective(params, train_corpus, ids, samples, cfg.objective)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {bi}")
            global_clip(grads, cfg.clip_norm)
            for name, g in grads.items():
                params[name] -= lr * g
            losses.append(loss)
        dev_bleu = evaluate(params, dev_corpus, "greedy", max_len=model_cfg.max_decode_len)
        rec = EpochRecord(epoch, math.fsum(losses) / len(losses), dev_bleu, lr, time.perf_counter() - start)
        report.epochs.append(rec)
        log.info("epoch %d loss %.4f dev BLEU %.2f lr %g", epoch, rec.mean_loss, dev_bleu, lr)
        if schedule.update(dev_bleu):
            report.best_dev_bleu, report.best_epoch = dev_bleu, epoch
            best = {k: v.copy() for k, v in params.items()}
            if cfg.checkpoint_dir:
                Path(cfg.checkpoint_dir).mkdir(parents=True, exist_ok=True)
                M.save_checkpoint(best, Path(cfg.checkpoint_dir) / "best.ckpt")
        elif schedule.stopped:
            break
    return best, report


def lr_schedule(dev_scores: Sequence[float], lr0: float = 1.0, decay: float = 0.5, lr_min: float = 0.05) -> list[float]:
    """Learning rate used in each epoch for a given dev BLEU series, up to the stop."""
    schedule = DevDecay(lr0, decay, lr_min)
    lrs = []
    for score in dev_scores:
        lrs.append(schedule.lr)
        if not schedule.update(score) and schedule.stopped:
            break
    return lrs
