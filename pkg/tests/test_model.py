import numpy as np
import pytest

from alphadimt import model as M
from alphadimt.seqcore import BOS, EOS, PAD
from conftest import finite_difference

SRCS = [(3, 4, 3, 4), (4, 3), (3,)]
TGTS = [(4, 3), (3, 4, 4, 3), (4,)]


class TestInit:
    def test_deterministic_and_bounded(self, tiny_cfg):
        a, b = M.init_params(tiny_cfg), M.init_params(tiny_cfg)
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])
            assert a[k].shape == M.param_shapes(tiny_cfg)[k]
            assert a[k].dtype == np.float64
            assert np.all(np.abs(a[k]) <= tiny_cfg.init_scale)

    def test_default_scale(self):
        p = M.init_params(M.ModelConfig(7, 7))
        assert max(np.abs(v).max() for v in p.values()) <= 0.08

    def test_seeds_differ(self, tiny_cfg):
        other = M.init_params(M.ModelConfig(5, 5, 3, 4, init_scale=0.5, seed=4))
        assert not np.array_equal(M.init_params(tiny_cfg)["out_W"], other["out_W"])


class TestLogProb:
    def test_nonpositive_and_pure(self, small_params):
        for x, y in zip(SRCS, TGTS):
            total, per = M.log_prob(small_params, x, y)
            assert total <= 0 and len(per) == len(y) + 1
            assert M.log_prob(small_params, x, y) == (total, per)

    def test_step_distributions_normalize(self, small_params):
        dists = M.step_log_probs(small_params, (3, 5, 7), (4, 8, 6, 6))
        probs = np.exp(dists)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=0, atol=1e-12)
        assert np.all(probs[:, PAD] == 0) and np.all(probs[:, BOS] == 0)

    def test_batched_forward_matches_per_step_path(self, small_params):
        srcs = [(3, 4, 5, 6), (7,), (8, 8, 3)]
        tgts = [(4,), (5, 6, 7, 8, 3), (6, 6)]
        batched = M.batch_log_probs(small_params, srcs, tgts)
        single = [M.log_prob(small_params, x, y)[0] for x, y in zip(srcs, tgts)]
        np.testing.assert_allclose(batched, single, rtol=1e-12)

    def test_padding_invariance(self, small_params):
        alone = M.batch_log_probs(small_params, [(3, 4)], [(5, 6)])[0]
        padded = M.batch_log_probs(small_params, [(3, 4), (3, 4, 5, 6, 7, 8)], [(5, 6), (5, 6, 7, 8, 3, 4, 5)])[0]
        assert padded == pytest.approx(alone, rel=1e-13)


class TestGradient:
    def test_matches_finite_differences(self, tiny_params):
        w = np.array([0.5, 0.3, 0.2])

        def loss():
            return -float(np.sum(w * M.batch_log_probs(tiny_params, SRCS, TGTS)))

        _, g = M.grad_weighted_nll(tiny_params, SRCS, TGTS, w)
        fd = finite_difference(loss, tiny_params)
        for name in g:
            a, b = g[name], fd[name]
            rel = np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
            assert rel.max() <= 1e-4, name

    def test_zero_weights_zero_gradient(self, tiny_params):
        loss, g = M.grad_weighted_nll(tiny_params, SRCS, TGTS, np.zeros(3))
        assert loss == 0.0
        assert all(not v.any() for v in g.values())

    def test_linear_in_weights(self, tiny_params):
        _, g1 = M.grad_weighted_nll(tiny_params, SRCS, TGTS, [1.0, 0, 0])
        _, g2 = M.grad_weighted_nll(tiny_params, SRCS, TGTS, [0, 1.0, 0])
        _, g12 = M.grad_weighted_nll(tiny_params, SRCS, TGTS, [2.0, -1.0, 0])
        for k in g1:
            np.testing.assert_allclose(g12[k], 2 * g1[k] - g2[k], atol=1e-13)

    def test_ml_batch_is_plain_nll(self, tiny_params):
        loss, g = M.grad_weighted_nll(tiny_params, SRCS[:1], TGTS[:1], [1.0])
        assert loss == pytest.approx(-M.log_prob(tiny_params, SRCS[0], TGTS[0])[0], rel=1e-12)

    def test_non_finite_is_reported_with_name(self, tiny_params):
        tiny_params["dec_Wh"][0, 0] = np.nan
        with pytest.raises(FloatingPointError, match="'"):
            M.grad_weighted_nll(tiny_params, SRCS, TGTS, [1.0, 1.0, 1.0])


class TestDecoding:
    def test_greedy_score_is_log_prob(self, small_params):
        for x in [(3, 4, 5), (8,), (6, 7, 8, 3)]:
            y, score = M.greedy_decode_batch(small_params, [x], max_len=30)
            y = y[0]
            if len(y) < 30:
                assert score[0] == M.log_prob(small_params, x, y)[0]

    def test_greedy_is_argmax(self, small_params):
        x = (3, 4, 5)
        y = M.greedy_decode(small_params, x, max_len=8)
        dists = M.step_log_probs(small_params, x, y)
        for t, tok in enumerate(y):
            assert dists[t].argmax() == tok

    def test_batched_greedy_matches_single(self, small_params):
        xs = [(3, 4, 5), (8,), (6, 7, 8, 3), (4, 4)]
        batch = M.greedy_decode_batch(small_params, xs, max_len=10)[0]
        assert batch == [M.greedy_decode(small_params, x, max_len=10) for x in xs]

    def test_beam_one_is_greedy(self, small_params):
        for x in [(3, 4, 5), (8,), (6, 7, 8, 3)]:
            assert M.beam_decode(small_params, x, 1, max_len=12) == M.greedy_decode(small_params, x, max_len=12)

    @pytest.mark.parametrize("seed", range(8))
    def test_beam_dominates_greedy(self, seed):
        p = M.init_params(M.ModelConfig(8, 8, 4, 5, init_scale=1.0, seed=seed))
        x = (3, 4, 5, 6)
        greedy, gscore = M.greedy_decode_batch(p, [x], max_len=15)
        _, bscore = M.beam_decode_scored(p, x, 10, max_len=15)
        assert bscore >= gscore[0] - 1e-12

    def test_beam_score_is_log_prob(self, small_params):
        y, score = M.beam_decode_scored(small_params, (3, 4, 5), 4, max_len=30)
        if len(y) < 30:
            assert score == pytest.approx(M.log_prob(small_params, (3, 4, 5), y)[0], rel=1e-12)

    def test_max_length_halts(self, small_params):
        p = {k: v.copy() for k, v in small_params.items()}
        p["out_b"][EOS] = -1e3  # EOS never chosen
        assert len(M.greedy_decode(p, (3, 4), max_len=5)) == 5
        assert len(M.beam_decode(p, (3, 4), 3, max_len=5)) == 5
        assert len(M.ancestral_sample(p, (3, 4), 0, max_len=5)) == 5


class TestAncestral:
    def test_deterministic_and_in_vocab(self, small_params):
        a = M.ancestral_sample(small_params, (3, 4), 42)
        assert a == M.ancestral_sample(small_params, (3, 4), 42)
        for seed in range(20):
            s = M.ancestral_sample(small_params, (3, 4), seed)
            assert all(2 < t < 9 for t in s)

    def test_first_token_frequencies(self, tiny_params):
        x = (3, 4)
        probs = np.exp(M.step_log_probs(tiny_params, x, ())[0])
        rng = np.random.default_rng(7)
        n = 50_000
        counts = np.zeros(probs.size)
        for _ in range(n):
            counts[M.ancestral_sample(tiny_params, x, rng, max_len=1)[:1] or (EOS,)] += 1
        se = np.sqrt(probs * (1 - probs) / n)
        assert np.all(np.abs(counts / n - probs) <= 3 * se + 1e-12)


def test_checkpoint_roundtrip(tmp_path, small_params):
    path = tmp_path / "m.ckpt"
    M.save_checkpoint(small_params, path)
    raw = path.read_bytes()
    head = raw.split(b"\n\n")[0].decode().splitlines()
    assert head[0] == M.CHECKPOINT_VERSION
    assert head[1] == "src_embed 9 5"
    loaded = M.load_checkpoint(path)
    assert list(loaded) == list(small_params)
    for k in small_params:
        np.testing.assert_array_equal(loaded[k], small_params[k])
    path.write_bytes(raw[:-8])
    with pytest.raises(Exception):
        M.load_checkpoint(path)


def test_shared_source_path_matches_repeated_sources(tiny_params):
    srcs = [(3, 4, 3), (4,)]
    tgts = [(4, 3), (3,), (4, 4, 4), (3, 4)]
    index = [0, 0, 1, 0]
    w = np.array([0.1, 0.4, 0.3, 0.2])
    loss_a, ga = M.grad_weighted_nll(tiny_params, srcs, tgts, w, src_index=index)
    loss_b, gb = M.grad_weighted_nll(tiny_params, [srcs[i] for i in index], tgts, w)
    assert loss_a == pytest.approx(loss_b, rel=1e-13)
    for k in ga:
        np.testing.assert_allclose(ga[k], gb[k], rtol=1e-11, atol=1e-14)
