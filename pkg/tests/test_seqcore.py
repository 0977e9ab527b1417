import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphadimt.errors import ConfigError, DataError
from alphadimt.seqcore import (
    BOS, EOS, PAD, ParallelCorpus, SyntheticTaskSpec, Vocab, batches, check_sentence,
    generate_synthetic, load_corpus, save_corpus,
)


def test_vocab_roundtrip_and_reserved():
    v = Vocab(["a", "b", "c"])
    assert (v.id("<pad>"), v.id("<bos>"), v.id("<eos>")) == (PAD, BOS, EOS)
    for tok in v.tokens:
        assert v.decode([v.id(tok)]) == [tok]
    assert v.content_ids == (3, 4, 5)
    with pytest.raises(DataError):
        v.id("zzz")


def test_vocab_file_roundtrip(tmp_path):
    v = Vocab(["x", "y"])
    v.save(tmp_path / "vocab.txt")
    assert (tmp_path / "vocab.txt").read_text().splitlines()[:3] == ["<pad>", "<bos>", "<eos>"]
    assert Vocab.load(tmp_path / "vocab.txt") == v


def test_duplicate_tokens_rejected():
    with pytest.raises(ConfigError):
        Vocab(["a", "a"])


def test_check_sentence():
    assert check_sentence([3, 4], 5) == (3, 4)
    for bad in ([], [PAD, 3], [7]):
        with pytest.raises(DataError):
            check_sentence(bad, 5)


class TestSynthetic:
    def test_reverse_and_copy(self):
        _, tr, _, _ = generate_synthetic(SyntheticTaskSpec("reverse", 5, 1, 4, 20, 2, 2, seed=1))
        for src, tgt in tr.pairs:
            assert tgt == src[::-1]
        _, tr, _, _ = generate_synthetic(SyntheticTaskSpec("copy", 5, 1, 1, 20, 2, 2, seed=1))
        for src, tgt in tr.pairs:
            assert tgt == src and len(src) == 1

    def test_deterministic(self, tmp_path):
        spec = SyntheticTaskSpec("reverse", 12, 5, 10, 50, 10, 10, seed=7)
        out = []
        for run in range(2):
            vocab, *splits = generate_synthetic(spec)
            for c in splits:
                save_corpus(c, tmp_path / f"{run}.{c.split}.src", tmp_path / f"{run}.{c.split}.tgt")
            out.append(b"".join((tmp_path / f"{run}.{c.split}.{side}").read_bytes()
                                for c in splits for side in ("src", "tgt")))
        assert out[0] == out[1]

    def test_lengths_and_tokens_in_range(self):
        vocab, tr, dev, te = generate_synthetic(SyntheticTaskSpec("reverse", 12, 5, 10, 500, 50, 50, seed=3))
        lengths = {len(s) for s, _ in tr.pairs}
        assert lengths == set(range(5, 11))
        toks = {t for s, _ in tr.pairs for t in s}
        assert toks == set(vocab.content_ids)
        assert (len(tr), len(dev), len(te)) == (500, 50, 50)

    @pytest.mark.parametrize("kw", [dict(kind="shuffle"), dict(content_vocab=1), dict(min_len=0),
                                    dict(min_len=6, max_len=5)])
    def test_invalid_spec(self, kw):
        with pytest.raises(ConfigError):
            generate_synthetic(SyntheticTaskSpec(**kw))


class TestCorpusFiles:
    def test_single_pair(self, tmp_path):
        (tmp_path / "s").write_text("a b\n")
        (tmp_path / "t").write_text("b a\n")
        c = load_corpus(tmp_path / "s", tmp_path / "t")
        assert len(c) == 1
        assert c.vocab.decode(c[0][0]) == ["a", "b"]
        assert c.vocab.decode(c[0][1]) == ["b", "a"]

    def test_mismatched_lines(self, tmp_path):
        (tmp_path / "s").write_text("a b\nb\n")
        (tmp_path / "t").write_text("b a\n")
        with pytest.raises(DataError):
            load_corpus(tmp_path / "s", tmp_path / "t")

    def test_empty_line(self, tmp_path):
        (tmp_path / "s").write_text("a\n\n")
        (tmp_path / "t").write_text("a\nb\n")
        with pytest.raises(DataError):
            load_corpus(tmp_path / "s", tmp_path / "t")

    def test_unknown_token_with_fixed_vocab(self, tmp_path):
        (tmp_path / "s").write_text("a q\n")
        (tmp_path / "t").write_text("a\n")
        with pytest.raises(DataError):
            load_corpus(tmp_path / "s", tmp_path / "t", Vocab(["a"]))

    def test_roundtrip(self, tmp_path):
        vocab, tr, _, _ = generate_synthetic(SyntheticTaskSpec(n_train=100, seed=2))
        save_corpus(tr, tmp_path / "s", tmp_path / "t")
        assert load_corpus(tmp_path / "s", tmp_path / "t", vocab, "train") == tr


class TestBatches:
    def corpus(self, n):
        return ParallelCorpus(tuple(((3 + i % 3,) * (1 + i % 4), (3,)) for i in range(n)))

    def test_sizes(self):
        assert [len(b) for b in batches(self.corpus(10), 4, seed=0)] == [4, 4, 2]

    def test_same_seed_same_order(self):
        a = [b.pair_ids.tolist() for b in batches(self.corpus(30), 8, seed=5)]
        b = [b.pair_ids.tolist() for b in batches(self.corpus(30), 8, seed=5)]
        assert a == b

    def test_padding_and_lengths(self):
        c = self.corpus(10)
        for b in batches(c, 4, seed=1):
            for row, pid in enumerate(b.pair_ids):
                src = c[pid][0]
                assert b.src_len[row] == len(src)
                assert tuple(b.src[row, : len(src)]) == src
                assert np.all(b.src[row, len(src):] == PAD)

    def test_errors(self):
        with pytest.raises(ConfigError):
            list(batches(self.corpus(3), 0))
        with pytest.raises(DataError):
            list(batches(ParallelCorpus(()), 2))

    @settings(max_examples=50, deadline=None)
    @given(n=st.integers(1, 60), bs=st.integers(1, 20), seed=st.integers(0, 2**31))
    def test_partition(self, n, bs, seed):
        ids = [i for b in batches(self.corpus(n), bs, seed=seed) for i in b.pair_ids.tolist()]
        assert sorted(ids) == list(range(n))
