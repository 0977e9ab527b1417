"""Sequence rewards: negative Hamming distance for training, corpus BLEU for evaluation."""

from __future__ import annotations

import math
from collections import Counter
from typing import Callable, Sequence

RewardFn = Callable[[Sequence[int], Sequence[int]], float]


def hamming_reward(y: Sequence[int], y_star: Sequence[int]) -> int:
    if len(y) != len(y_star):
        raise ValueError(f"hamming reward needs equal lengths, got {len(y)} and {len(y_star)}")
    return -sum(a != b for a, b in zip(y, y_star))


def _ngrams(seq: Sequence, n: int) -> Counter:
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def bleu_stats(hypotheses: Sequence[Sequence], references: Sequence[Sequence], max_n: int = 4):
    """Corpus totals: (matches[n], hyp n-gram counts[n], ref n-gram counts[n], hyp_len, ref_len)."""
    matches = [0] * max_n
    totals = [0] * max_n
    ref_totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
            ref_totals[n - 1] += max(len(ref) - n + 1, 0)
    return matches, totals, ref_totals, hyp_len, ref_len


def corpus_bleu(hypotheses: Sequence[Sequence], references: Sequence[Sequence], max_n: int = 4) -> float:
    """Unsmoothed corpus BLEU on a 0-100 scale, multi-bleu.perl conventions.

    Any zero n-gram precision makes the score 0. An order that neither the
    hypotheses nor the references are long enough to contain is left out of
    the geometric mean, so identical corpora of short sentences score 100.
    """
    if len(hypotheses) != len(references):
        raise ValueError("hypotheses and references differ in length")
    if not hypotheses:
        raise ValueError("BLEU of an empty corpus is undefined")
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    matches, totals, ref_totals, hyp_len, ref_len = bleu_stats(hypotheses, references, max_n)
    orders = [n for n in range(max_n) if totals[n] or ref_totals[n]]
    if hyp_len == 0 or any(matches[n] == 0 for n in orders):
        return 0.0
    log_prec = sum(math.log(matches[n] / totals[n]) for n in orders) / len(orders)
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_prec)


def sentence_greedy_bleu(decode: Callable[[list], list], sources: Sequence, references: Sequence, max_n: int = 4) -> float:
    """Greedy-decode all ``sources`` with ``decode`` and score them against ``references``."""
    return corpus_bleu(decode(list(sources)), references, max_n)
