"""Vocabularies, sentences, parallel corpora, synthetic tasks and batching.

Sentences are plain tuples of integer token ids holding content tokens only;
BOS/EOS are added by the model layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError

PAD, BOS, EOS = 0, 1, 2
RESERVED_TOKENS = ("<pad>", "<bos>", "<eos>")

Sentence = tuple[int, ...]


class Vocab:
    """Token <-> id mapping with the reserved tokens at ids 0, 1, 2."""

    def __init__(self, content_tokens: Sequence[str]):
        tokens = list(RESERVED_TOKENS) + list(content_tokens)
        if len(set(tokens)) != len(tokens):
            raise ConfigError("vocabulary tokens must be distinct")
        self.tokens: tuple[str, ...] = tuple(tokens)
        self._index = {tok: i for i, tok in enumerate(self.tokens)}

    @classmethod
    def build(cls, sentences: Sequence[Sequence[str]]) -> "Vocab":
        """Vocabulary of every token seen, in first-occurrence order."""
        seen: dict[str, None] = {}
        for sent in sentences:
            for tok in sent:
                if tok not in RESERVED_TOKENS:
                    seen.setdefault(tok)
        return cls(list(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def __repr__(self) -> str:
        return f"Vocab(size={len(self)})"

    @property
    def content_ids(self) -> tuple[int, ...]:
        return tuple(range(len(RESERVED_TOKENS), len(self.tokens)))

    @property
    def content_size(self) -> int:
        return len(self.tokens) - len(RESERVED_TOKENS)

    def id(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise DataError(f"token {token!r} not in vocabulary") from None

    def encode(self, tokens: Sequence[str]) -> Sentence:
        return tuple(self.id(t) for t in tokens)

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise DataError(f"{path}: vocab must start with {' '.join(RESERVED_TOKENS)}")
        return cls(lines[len(RESERVED_TOKENS):])


def check_sentence(ids: Sequence[int], vocab_size: int) -> Sentence:
    sent = tuple(int(i) for i in ids)
    if not sent:
        raise DataError("empty sentence")
    for i in sent:
        if i == PAD or not 0 <= i < vocab_size:
            raise DataError(f"invalid token id {i} (vocab size {vocab_size})")
    return sent


@dataclass(frozen=True)
class ParallelCorpus:
    """Source/target sentence pairs; the pair id is the list index."""

    pairs: tuple[tuple[Sentence, Sentence], ...]
    split: str = "train"
    vocab: Vocab | None = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.pairs)

    def __getitem__(self, pair_id: int) -> tuple[Sentence, Sentence]:
        return self.pairs[pair_id]

    @property
    def sources(self) -> list[Sentence]:
        return [s for s, _ in self.pairs]

    @property
    def targets(self) -> list[Sentence]:
        return [t for _, t in self.pairs]


@dataclass(frozen=True)
class SyntheticTaskSpec:
    kind: str = "reverse"
    content_vocab: int = 12
    min_len: int = 5
    max_len: int = 10
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in ("copy", "reverse"):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.content_vocab < 2:
            raise ConfigError("content_vocab must be >= 2")
        if self.min_len < 1 or self.min_len > self.max_len:
            raise ConfigError("need 1 <= min_len <= max_len")
        if min(self.n_train, self.n_dev, self.n_test) < 0:
            raise ConfigError("split sizes must be non-negative")


def synthetic_vocab(content_vocab: int) -> Vocab:
    width = len(str(content_vocab - 1))
    return Vocab([f"t{i:0{width}d}" for i in range(content_vocab)])


def generate_synthetic(spec: SyntheticTaskSpec) -> tuple[Vocab, ParallelCorpus, ParallelCorpus, ParallelCorpus]:
    """Generate (vocab, train, dev, test) for a copy or reversal task.

    Each split draws from its own child stream of ``spec.seed`` so the
    output is a pure function of the spec.
    """
    spec.validate()
    vocab = synthetic_vocab(spec.content_vocab)
    content = np.asarray(vocab.content_ids)
    streams = np.random.SeedSequence(spec.seed).spawn(3)
    splits = []
    for name, count, ss in zip(("train", "dev", "test"), (spec.n_train, spec.n_dev, spec.n_test), streams):
        rng = np.random.default_rng(ss)
        pairs = []
        for _ in range(count):
            m = int(rng.integers(spec.min_len, spec.max_len + 1))
            src = tuple(int(t) for t in content[rng.integers(0, len(content), size=m)])
            tgt = src if spec.kind == "copy" else src[::-1]
            pairs.append((src, tgt))
        splits.append(ParallelCorpus(tuple(pairs), name, vocab))
    return vocab, splits[0], splits[1], splits[2]


def save_corpus(corpus: ParallelCorpus, src_path: str | Path, tgt_path: str | Path, vocab: Vocab | None = None) -> None:
    vocab = vocab or corpus.vocab
    if vocab is None:
        raise DataError("saving a corpus requires a vocabulary")
    with open(src_path, "w", encoding="utf-8") as fs, open(tgt_path, "w", encoding="utf-8") as ft:
        for src, tgt in corpus.pairs:
            fs.write(" ".join(vocab.decode(src)) + "\n")
            ft.write(" ".join(vocab.decode(tgt)) + "\n")


def _read_lines(path: str | Path) -> list[list[str]]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    out = []
    for lineno, line in enumerate(lines, 1):
        toks = line.split()
        if not toks:
            raise DataError(f"{path}:{lineno}: empty line")
        out.append(toks)
    return out


def load_corpus(
    src_path: str | Path, tgt_path: str | Path, vocab: Vocab | None = None, split: str = "train"
) -> ParallelCorpus:
    """Read a whitespace-tokenized parallel corpus.

    With ``vocab=None`` a vocabulary is built from the files and attached to
    the returned corpus; otherwise every token must already be in ``vocab``.
    """
    src_lines, tgt_lines = _read_lines(src_path), _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise DataError(f"line count mismatch: {src_path} has {len(src_lines)}, {tgt_path} has {len(tgt_lines)}")
    if vocab is None:
        vocab = Vocab.build(src_lines + tgt_lines)
    pairs = tuple((vocab.encode(s), vocab.encode(t)) for s, t in zip(src_lines, tgt_lines))
    return ParallelCorpus(pairs, split, vocab)


@dataclass
class Batch:
    pair_ids: np.ndarray  # (B,)
    src: np.ndarray  # (B, S) padded with PAD
    src_len: np.ndarray  # (B,)
    tgt: np.ndarray  # (B, T) padded with PAD
    tgt_len: np.ndarray  # (B,)

    def __len__(self) -> int:
        return len(self.pair_ids)


def pad(seqs: Sequence[Sequence[int]], pad_id: int = PAD) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), int(lengths.max(initial=0))), pad_id, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out, lengths


def make_batch(corpus: ParallelCorpus, pair_ids: Sequence[int]) -> Batch:
    src, src_len = pad([corpus.pairs[i][0] for i in pair_ids])
    tgt, tgt_len = pad([corpus.pairs[i][1] for i in pair_ids])
    return Batch(np.asarray(pair_ids, dtype=np.int64), src, src_len, tgt, tgt_len)


def batches(corpus: ParallelCorpus, batch_size: int, seed: int | Sequence[int] | None = 0) -> Iterator[Batch]:
    """One shuffled epoch of padded batches; ``seed=None`` keeps corpus order."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    if len(corpus) == 0:
        raise DataError("cannot batch an empty corpus")
    order = np.arange(len(corpus)) if seed is None else np.random.default_rng(seed).permutation(len(corpus))
    for start in range(0, len(order), batch_size):
        yield make_batch(corpus, order[start : start + batch_size].tolist())
