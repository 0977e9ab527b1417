import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphadimt.augment import (
    AugmentConfig, augment_corpus, ball_size, draw_sample, enumerate_ball,
    hamming_distance, load_augmented, log_q0, max_edits, save_augmented,
)
from alphadimt.errors import ConfigError
from alphadimt.seqcore import RESERVED_TOKENS, SyntheticTaskSpec, generate_synthetic, synthetic_vocab


@pytest.mark.parametrize("m, E", [(7, 1), (10, 2), (4, 0), (1, 0), (5, 1), (35, 7)])
def test_max_edits(m, E):
    assert max_edits(m) == E


class TestLogQ0:
    def test_identity_e0(self):
        y = (3, 4, 5, 6, 7)
        assert log_q0(y, y, 6) == pytest.approx(math.log(1 / 2))

    def test_single_edit(self):
        # m=5, V=6: (1/2)(1/5)(1/5)
        assert log_q0((3, 4, 5, 6, 8), (3, 4, 5, 6, 7), 6) == pytest.approx(math.log(0.02))

    def test_m10_e0(self):
        y = tuple(range(3, 13))
        assert log_q0(y, y, 12) == pytest.approx(math.log(1 / 3))

    def test_outside_support(self):
        with pytest.raises(ValueError):
            log_q0((4, 4, 4, 4, 4), (3, 3, 3, 3, 3), 6)


class TestEnumerateBall:
    def test_count(self):
        vocab = synthetic_vocab(3)
        ball = enumerate_ball((3, 4, 5), vocab, 1)
        assert len(ball) == 1 + 3 * 2
        assert len(set(y for y, _ in ball)) == len(ball)

    def test_radius_zero(self):
        vocab = synthetic_vocab(4)
        assert enumerate_ball((3, 4), vocab, 0) == [((3, 4), 0)]

    def test_cap(self):
        with pytest.raises(ValueError, match="smaller toy instance"):
            enumerate_ball(tuple([3] * 10), synthetic_vocab(12), 5, cap=1000)

    @pytest.mark.parametrize("m", range(1, 7))
    @pytest.mark.parametrize("V", range(2, 7))
    def test_normalization(self, m, V):
        vocab = synthetic_vocab(V)
        y_star = tuple(vocab.content_ids[i % V] for i in range(m))
        E = max_edits(m)
        ball = enumerate_ball(y_star, vocab, E)
        assert len(ball) == ball_size(m, V, E)
        assert abs(math.fsum(math.exp(log_q0(y, y_star, V)) for y, _ in ball) - 1.0) <= 1e-12
        for y, e in ball:
            assert hamming_distance(y, y_star) == e

    def test_normalization_with_radius_override(self):
        vocab = synthetic_vocab(3)
        ball = enumerate_ball((3, 4, 5), vocab, 1)
        total = math.fsum(math.exp(log_q0(y, (3, 4, 5), 3, radius=1)) for y, _ in ball)
        assert abs(total - 1.0) <= 1e-12


class TestDrawSample:
    def test_degenerate_ball(self):
        vocab = synthetic_vocab(6)
        rng = np.random.default_rng(0)
        for _ in range(20):
            s = draw_sample((3, 4, 5, 6), vocab, AugmentConfig(), rng)
            assert s.y_tilde == (3, 4, 5, 6) and s.e == 0 and s.reward == 0

    def test_deterministic(self):
        vocab = synthetic_vocab(6)
        draws = [draw_sample((3, 4, 5, 6, 7), vocab, AugmentConfig(), np.random.default_rng(11)) for _ in range(2)]
        assert draws[0] == draws[1]

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 15), V=st.integers(2, 8))
    def test_exactness(self, seed, m, V):
        vocab = synthetic_vocab(V)
        rng = np.random.default_rng(seed)
        y_star = tuple(vocab.content_ids[int(i)] for i in rng.integers(0, V, size=m))
        s = draw_sample(y_star, vocab, AugmentConfig(), rng)
        assert len(s.y_tilde) == m
        assert hamming_distance(s.y_tilde, y_star) == s.e <= max_edits(m)
        assert s.reward == -s.e
        assert s.log_q0 == log_q0(s.y_tilde, y_star, V)
        assert all(t in vocab.content_ids for t in s.y_tilde)

    def test_edit_count_frequency(self):
        vocab = synthetic_vocab(6)
        rng = np.random.default_rng(2024)
        n = 100_000
        zeros = sum(draw_sample((3, 4, 5, 6, 7), vocab, AugmentConfig(), rng).e == 0 for _ in range(n))
        se = math.sqrt(0.25 / n)
        assert abs(zeros / n - 0.5) <= 3 * se

    def test_single_token_frequency_matches_q0(self):
        # m=5, V=3: each e=1 neighbour has q0 = (1/2)(1/5)(1/2) = 0.05
        vocab = synthetic_vocab(3)
        y_star = (3, 4, 5, 3, 4)
        rng = np.random.default_rng(5)
        n = 40_000
        counts = {}
        for _ in range(n):
            y = draw_sample(y_star, vocab, AugmentConfig(), rng).y_tilde
            counts[y] = counts.get(y, 0) + 1
        assert len(counts) == ball_size(5, 3, 1)
        for y, k in counts.items():
            p = math.exp(log_q0(y, y_star, 3))
            assert abs(k / n - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_config_validation():
    for bad in (AugmentConfig(tau=0), AugmentConfig(samples_per_pair=0), AugmentConfig(edit_fraction=1.0)):
        with pytest.raises(ConfigError):
            bad.validate()


def test_augment_corpus_and_tsv_roundtrip(tmp_path):
    vocab, tr, _, _ = generate_synthetic(SyntheticTaskSpec(n_train=30, seed=4))
    cfg = AugmentConfig(samples_per_pair=3, seed=9)
    samples = augment_corpus(tr, vocab, cfg)
    assert len(samples) == 90
    assert [s.pair_id for s in samples] == [i for i in range(30) for _ in range(3)]
    assert augment_corpus(tr, vocab, cfg) == samples
    assert augment_corpus(tr, vocab, cfg, epoch=1) != samples
    path = tmp_path / "aug.tsv"
    save_augmented(samples, vocab, path)
    header, first = path.read_text().splitlines()[:2]
    assert header.split("\t") == ["pair_id", "e", "reward", "log_q0", "target"]
    assert first.split("\t")[3] == f"{samples[0].log_q0:.17g}"
    assert load_augmented(path, vocab) == samples
    assert all(t not in RESERVED_TOKENS for line in path.read_text().splitlines()[1:]
               for t in line.split("\t")[4].split())


def test_samples_independent_of_batch_composition():
    from alphadimt.augment import augment_pairs
    vocab, tr, _, _ = generate_synthetic(SyntheticTaskSpec(n_train=10, seed=4))
    cfg = AugmentConfig(samples_per_pair=2)
    together = augment_pairs(tr, vocab, cfg, [3, 7], epoch=2)
    alone = augment_pairs(tr, vocab, cfg, [7], epoch=2)
    assert together[2:] == alone
