"""Hamming-ball data augmentation: the proposal distribution q0.

A draw around a target y* of length m picks an edit count e uniformly from
{0, ..., E} with E = floor(edit_fraction * m), then e distinct positions
uniformly, then for each position a replacement uniformly among the V - 1
content tokens that differ from the original. Every sentence in the ball has
a unique (positions, tokens) decomposition, so

    q0(y | y*) = 1/(E+1) * 1/C(m, e) * 1/(V-1)^e,   e = d_H(y, y*).
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .rewards import RewardFn, hamming_reward
from .seqcore import ParallelCorpus, Sentence, Vocab

DEFAULT_BALL_CAP = 200_000
TSV_COLUMNS = ("pair_id", "e", "reward", "log_q0", "target")


@dataclass(frozen=True)
class AugmentConfig:
    tau: float = 3.0
    samples_per_pair: int = 8
    edit_fraction: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if not self.tau > 0:
            raise ConfigError("tau must be > 0")
        if self.samples_per_pair < 1:
            raise ConfigError("samples_per_pair must be >= 1")
        if not 0 <= self.edit_fraction < 1:
            raise ConfigError("edit_fraction must be in [0, 1)")


@dataclass(frozen=True)
class AugmentedSample:
    pair_id: int
    y_tilde: Sentence
    e: int
    reward: float
    log_q0: float


def max_edits(m: int, edit_fraction: float = 0.2) -> int:
    if m < 1:
        raise ValueError("sentence length must be >= 1")
    # exact rational arithmetic: 0.2 * 35 must floor to 7, not 6
    return math.floor(Fraction(str(edit_fraction)) * m)


def hamming_distance(a: Sequence[int], b: Sequence[int]) -> int:
    return sum(x != y for x, y in zip(a, b))


def log_q0(
    y_tilde: Sequence[int],
    y_star: Sequence[int],
    content_size: int,
    edit_fraction: float = 0.2,
    radius: int | None = None,
) -> float:
    """Natural-log proposal probability of ``y_tilde`` around ``y_star``.

    ``radius`` overrides the ball radius floor(edit_fraction * m).
    """
    m = len(y_star)
    if len(y_tilde) != m:
        raise ValueError("proposal support only contains sentences of the target's length")
    E = max_edits(m, edit_fraction) if radius is None else radius
    e = hamming_distance(y_tilde, y_star)
    if e > E:
        raise ValueError(f"Hamming distance {e} exceeds ball radius {E}: outside proposal support")
    return -math.log(E + 1) - math.log(math.comb(m, e)) - e * math.log(content_size - 1)


def _replacement(original: int, content: Sequence[int], k: int) -> int:
    """k-th content token (0-based) skipping ``original``."""
    idx = content.index(original)
    return content[k] if k < idx else content[k + 1]


def draw_sample(
    y_star: Sentence,
    vocab: Vocab,
    cfg: AugmentConfig,
    rng: np.random.Generator,
    pair_id: int = 0,
    reward_fn: RewardFn = hamming_reward,
) -> AugmentedSample:
    content = vocab.content_ids
    V = len(content)
    if V < 2:
        raise ConfigError("augmentation needs at least 2 content tokens")
    m = len(y_star)
    E = max_edits(m, cfg.edit_fraction)
    e = int(rng.integers(0, E + 1))
    y = list(y_star)
    if e:
        positions = rng.choice(m, size=e, replace=False)
        picks = rng.integers(0, V - 1, size=e)
        for pos, k in zip(positions, picks):
            y[pos] = _replacement(y_star[pos], content, int(k))
    y_tilde = tuple(y)
    return AugmentedSample(
        pair_id=pair_id,
        y_tilde=y_tilde,
        e=e,
        reward=float(reward_fn(y_tilde, y_star)),
        log_q0=log_q0(y_tilde, y_star, V, cfg.edit_fraction),
    )


def pair_rng(seed: int, pair_id: int, epoch: int) -> np.random.Generator:
    """Independent stream per (seed, pair, epoch), so results do not depend on scheduling."""
    return np.random.default_rng([seed, pair_id, epoch])


def augment_pairs(
    corpus: ParallelCorpus,
    vocab: Vocab,
    cfg: AugmentConfig,
    pair_ids: Iterable[int],
    epoch: int = 0,
    reward_fn: RewardFn = hamming_reward,
) -> list[AugmentedSample]:
    """K proposal draws for each listed pair, grouped by pair in the given order."""
    out = []
    for pid in pair_ids:
        pid = int(pid)
        rng = pair_rng(cfg.seed, pid, epoch)
        y_star = corpus.pairs[pid][1]
        out.extend(draw_sample(y_star, vocab, cfg, rng, pid, reward_fn) for _ in range(cfg.samples_per_pair))
    return out


def augment_corpus(corpus: ParallelCorpus, vocab: Vocab, cfg: AugmentConfig, epoch: int = 0) -> list[AugmentedSample]:
    cfg.validate()
    return augment_pairs(corpus, vocab, cfg, range(len(corpus)), epoch)


def ball_size(m: int, content_size: int, radius: int) -> int:
    return sum(math.comb(m, e) * (content_size - 1) ** e for e in range(radius + 1))


def enumerate_ball(
    y_star: Sentence, vocab: Vocab, radius: int, cap: int = DEFAULT_BALL_CAP
) -> list[tuple[Sentence, int]]:
    """Every sentence within Hamming distance ``radius`` of ``y_star``, with its distance."""
    content = vocab.content_ids
    m = len(y_star)
    size = ball_size(m, len(content), radius)
    if size > cap:
        raise ValueError(f"Hamming ball has {size} sentences (cap {cap}); use a smaller toy instance")
    out = [(tuple(y_star), 0)]
    for e in range(1, radius + 1):
        for positions in itertools.combinations(range(m), e):
            choices = [[t for t in content if t != y_star[p]] for p in positions]
            for tokens in itertools.product(*choices):
                y = list(y_star)
                for p, t in zip(positions, tokens):
                    y[p] = t
                out.append((tuple(y), e))
    return out


def save_augmented(samples: Sequence[AugmentedSample], vocab: Vocab, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, delimiter="\t", lineterminator="\n")
        w.writerow(TSV_COLUMNS)
        for s in samples:
            w.writerow([s.pair_id, s.e, repr(s.reward), f"{s.log_q0:.17g}", " ".join(vocab.decode(s.y_tilde))])


def load_augmented(path: str | Path, vocab: Vocab) -> list[AugmentedSample]:
    try:
        f = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with f:
        rows = list(csv.reader(f, delimiter="\t"))
    if not rows or tuple(rows[0]) != TSV_COLUMNS:
        raise DataError(f"{path}: expected header {' '.join(TSV_COLUMNS)}")
    out = []
    for lineno, row in enumerate(rows[1:], 2):
        if len(row) != len(TSV_COLUMNS):
            raise DataError(f"{path}:{lineno}: expected {len(TSV_COLUMNS)} columns")
        pid, e, reward, lq, target = row
        out.append(AugmentedSample(int(pid), vocab.encode(target.split()), int(e), float(reward), float(lq)))
    return out
