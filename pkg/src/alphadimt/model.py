"""Attentional GRU encoder-decoder in numpy with a hand-derived backward pass.

Architecture:
  * bidirectional single-layer GRU encoder over source embeddings;
  * decoder initial state tanh([h_fwd_last; h_bwd_first] W + b);
  * single-layer GRU decoder fed the previous target token (BOS first);
  * bilinear attention score s_t^T W_a h_j, softmax over source positions;
  * logits = [s_t; c_t] W_out + b_out, with PAD and BOS masked out.

All arithmetic is float64. ``forward`` / ``backward`` handle padded batches
for training; ``encode`` / ``decoder_step`` are the per-step path shared by
scoring (``log_prob``) and every decoder.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .seqcore import BOS, EOS, PAD, Sentence, pad

Params = dict[str, np.ndarray]

CHECKPOINT_VERSION = "alphadimt-checkpoint 1"


@dataclass(frozen=True)
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    embed_dim: int = 16
    hidden_dim: int = 32
    max_decode_len: int = 30
    init_scale: float = 0.08
    seed: int = 0

    def __post_init__(self):
        if min(self.src_vocab, self.tgt_vocab, self.embed_dim, self.hidden_dim, self.max_decode_len) < 1:
            raise ValueError("model dimensions and max_decode_len must be >= 1")
        if self.tgt_vocab <= EOS:
            raise ValueError("target vocabulary must include the reserved tokens")


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    E, H = cfg.embed_dim, cfg.hidden_dim
    return {
        "src_embed": (cfg.src_vocab, E),
        "tgt_embed": (cfg.tgt_vocab, E),
        "enc_fwd_Wx": (E, 3 * H),
        "enc_fwd_Wh": (H, 3 * H),
        "enc_fwd_b": (3 * H,),
        "enc_bwd_Wx": (E, 3 * H),
        "enc_bwd_Wh": (H, 3 * H),
        "enc_bwd_b": (3 * H,),
        "bridge_W": (2 * H, H),
        "bridge_b": (H,),
        "dec_Wx": (E, 3 * H),
        "dec_Wh": (H, 3 * H),
        "dec_b": (3 * H,),
        "attn_W": (H, 2 * H),
        "out_W": (3 * H, cfg.tgt_vocab),
        "out_b": (cfg.tgt_vocab,),
    }


def init_params(cfg: ModelConfig) -> Params:
    rng = np.random.default_rng(cfg.seed)
    return {
        name: rng.uniform(-cfg.init_scale, cfg.init_scale, size=shape)
        for name, shape in param_shapes(cfg).items()
    }


def config_from_params(params: Params, **kwargs) -> ModelConfig:
    src_vocab, embed = params["src_embed"].shape
    return ModelConfig(
        src_vocab=src_vocab,
        tgt_vocab=params["tgt_embed"].shape[0],
        embed_dim=embed,
        hidden_dim=params["bridge_b"].shape[0],
        **kwargs,
    )


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------------------
# GRU cell. gx = x Wx + b is precomputed for all time steps.


def _gru_step(gx, h, Wh):
    H = h.shape[-1]
    gh = h @ Wh
    z = _sigmoid(gx[:, :H] + gh[:, :H])
    r = _sigmoid(gx[:, H : 2 * H] + gh[:, H : 2 * H])
    ghn = gh[:, 2 * H :]
    n = np.tanh(gx[:, 2 * H :] + r * ghn)
    return (1.0 - z) * n + z * h, (h, z, r, n, ghn)


def _gru_step_back(dh_new, cache, Wh, dWh):
    h, z, r, n, ghn = cache
    dn = dh_new * (1.0 - z)
    dz = dh_new * (h - n)
    dan = dn * (1.0 - n * n)
    daz = dz * z * (1.0 - z)
    dar = dan * ghn * r * (1.0 - r)
    dgx = np.concatenate([daz, dar, dan], axis=1)
    dgh = np.concatenate([daz, dar, dan * r], axis=1)
    dWh += h.T @ dgh
    return dgx, dh_new * z + dgh @ Wh.T


def _masked_log_softmax(logits):
    logits[..., PAD] = -np.inf
    logits[..., BOS] = -np.inf
    mx = logits.max(axis=-1, keepdims=True)
    lse = mx + np.log(np.exp(logits - mx).sum(axis=-1, keepdims=True))
    return logits - lse


def _softmax_masked(scores, mask):
    scores = np.where(mask, scores, -np.inf)
    mx = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - mx)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# encoder and per-step decoder (scoring / decoding path)


@dataclass
class Encoded:
    states: np.ndarray  # (B, S, 2H)
    keys: np.ndarray  # (B, S, H) = states @ attn_W.T
    mask: np.ndarray  # (B, S) bool
    init: np.ndarray  # (B, H) decoder initial state
    cache: dict | None = None

    def take(self, rows) -> "Encoded":
        return Encoded(self.states[rows], self.keys[rows], self.mask[rows], self.init[rows])


def encode(params: Params, src: np.ndarray, src_len: np.ndarray, keep_cache: bool = False) -> Encoded:
    B, S = src.shape
    H = params["bridge_b"].shape[0]
    mask = np.arange(S)[None, :] < src_len[:, None]
    X = params["src_embed"][src]
    out = {}
    for direction, steps in (("fwd", range(S)), ("bwd", range(S - 1, -1, -1))):
        GX = X @ params[f"enc_{direction}_Wx"] + params[f"enc_{direction}_b"]
        Wh = params[f"enc_{direction}_Wh"]
        h = np.zeros((B, H))
        Hs = np.zeros((B, S, H))
        caches = [None] * S
        for t in steps:
            h_new, caches[t] = _gru_step(GX[:, t], h, Wh)
            h = np.where(mask[:, t, None], h_new, h)
            Hs[:, t] = h
        out[direction] = (Hs, caches, h)
    states = np.concatenate([out["fwd"][0], out["bwd"][0]], axis=2)
    final = np.concatenate([out["fwd"][2], out["bwd"][0][:, 0]], axis=1)
    init = np.tanh(final @ params["bridge_W"] + params["bridge_b"])
    keys = states @ params["attn_W"].T
    cache = None
    if keep_cache:
        cache = {"X": X, "final": final, "fwd": out["fwd"][1], "bwd": out["bwd"][1]}
    return Encoded(states, keys, mask, init, cache)


def decoder_step(params: Params, enc: Encoded, s_prev: np.ndarray, tokens: np.ndarray):
    """One decoder step from the previous tokens: returns (state, log-probs over vocab)."""
    gx = params["tgt_embed"][tokens] @ params["dec_Wx"] + params["dec_b"]
    s, _ = _gru_step(gx, s_prev, params["dec_Wh"])
    attn = _softmax_masked(np.einsum("bh,bsh->bs", s, enc.keys), enc.mask)
    ctx = np.einsum("bs,bsk->bk", attn, enc.states)
    logits = np.concatenate([s, ctx], axis=1) @ params["out_W"] + params["out_b"]
    return s, _masked_log_softmax(logits)


def _encode_one(params: Params, x: Sentence) -> Encoded:
    src = np.asarray([x], dtype=np.int64)
    return encode(params, src, np.array([len(x)]))


def step_log_probs(params: Params, x: Sentence, y: Sentence) -> np.ndarray:
    """Full next-token log-distributions at every teacher-forced step, shape (len(y)+1, V)."""
    enc = _encode_one(params, x)
    s = enc.init
    out = []
    for tok in (BOS,) + tuple(y):
        s, logp = decoder_step(params, enc, s, np.array([tok]))
        out.append(logp[0])
    return np.array(out)


def log_prob(params: Params, x: Sentence, y: Sentence) -> tuple[float, list[float]]:
    """log p(y | x) including the final EOS, and the per-step terms."""
    dists = step_log_probs(params, x, y)
    per_token = [float(dists[t, tok]) for t, tok in enumerate(tuple(y) + (EOS,))]
    return float(sum(per_token)), per_token


# ---------------------------------------------------------------------------
# batched teacher-forced forward / backward for training


@dataclass
class ForwardCache:
    seq_log_probs: np.ndarray  # (B,)
    enc: Encoded  # one row per distinct source
    src_index: np.ndarray | None  # source row of each sequence; None = one-to-one
    states: np.ndarray
    keys: np.ndarray
    src: np.ndarray
    dec_in: np.ndarray
    dec_out: np.ndarray
    tmask: np.ndarray
    Xd: np.ndarray
    S: np.ndarray
    dec_caches: list
    attn: np.ndarray
    feats: np.ndarray
    logp: np.ndarray


def forward(params: Params, srcs: Sequence[Sentence], tgts: Sequence[Sentence], src_index=None) -> ForwardCache:
    """Teacher-forced forward pass.

    With ``src_index``, ``srcs`` lists distinct sources encoded once each and
    target i is scored against ``srcs[src_index[i]]``.
    """
    src, src_len = pad(srcs)
    tgt, tgt_len = pad(tgts)
    B, T = tgt.shape[0], tgt.shape[1] + 1
    dec_in = np.full((B, T), PAD, dtype=np.int64)
    dec_in[:, 0] = BOS
    dec_in[:, 1:] = tgt
    dec_out = np.full((B, T), PAD, dtype=np.int64)
    dec_out[:, :-1] = tgt
    dec_out[np.arange(B), tgt_len] = EOS
    tmask = np.arange(T)[None, :] <= tgt_len[:, None]

    enc = encode(params, src, src_len, keep_cache=True)
    if src_index is None:
        states, keys, smask, s = enc.states, enc.keys, enc.mask, enc.init
    else:
        src_index = np.asarray(src_index, dtype=np.int64)
        states, keys, smask, s = (a[src_index] for a in (enc.states, enc.keys, enc.mask, enc.init))
    Xd = params["tgt_embed"][dec_in]
    GX = Xd @ params["dec_Wx"] + params["dec_b"]
    H = enc.init.shape[1]
    S = np.zeros((B, T, H))
    caches = []
    for t in range(T):
        s, c = _gru_step(GX[:, t], s, params["dec_Wh"])
        S[:, t] = s
        caches.append(c)
    scores = np.einsum("bth,bsh->bts", S, keys)
    attn = _softmax_masked(scores, smask[:, None, :])
    ctx = np.einsum("bts,bsk->btk", attn, states)
    feats = np.concatenate([S, ctx], axis=2)
    logp = _masked_log_softmax(feats @ params["out_W"] + params["out_b"])
    tok_logp = np.take_along_axis(logp, dec_out[:, :, None], axis=2)[:, :, 0]
    seq = np.where(tmask, tok_logp, 0.0).sum(axis=1)
    return ForwardCache(seq, enc, src_index, states, keys, src, dec_in, dec_out, tmask, Xd, S, caches, attn, feats, logp)


def backward(params: Params, fc: ForwardCache, weights) -> dict[str, np.ndarray]:
    """Gradient of -sum_i weights[i] * log p(y_i | x_i); weights are constants."""
    w = np.asarray(weights, dtype=np.float64)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    B, T, H = fc.S.shape
    enc = fc.enc

    coef = w[:, None] * fc.tmask
    dlogits = coef[:, :, None] * np.exp(fc.logp)
    np.subtract.at(dlogits, (np.arange(B)[:, None], np.arange(T)[None, :], fc.dec_out), coef)
    grads["out_W"] = fc.feats.reshape(-1, 3 * H).T @ dlogits.reshape(B * T, -1)
    grads["out_b"] = dlogits.sum(axis=(0, 1))
    dfeats = dlogits @ params["out_W"].T
    dS = dfeats[:, :, :H].copy()
    dctx = dfeats[:, :, H:]

    dattn = np.einsum("btk,bsk->bts", dctx, fc.states)
    dstates = np.einsum("bts,btk->bsk", fc.attn, dctx)
    dscores = fc.attn * (dattn - (fc.attn * dattn).sum(axis=2, keepdims=True))
    dS += np.einsum("bts,bsh->bth", dscores, fc.keys)
    dkeys = np.einsum("bts,bth->bsh", dscores, fc.S)
    grads["attn_W"] = np.einsum("bsh,bsk->hk", dkeys, fc.states)
    dstates += dkeys @ params["attn_W"]

    dGX = np.zeros((B, T, 3 * H))
    ds = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        ds = ds + dS[:, t]
        dGX[:, t], ds = _gru_step_back(ds, fc.dec_caches[t], params["dec_Wh"], grads["dec_Wh"])
    E = fc.Xd.shape[2]
    grads["dec_Wx"] = fc.Xd.reshape(-1, E).T @ dGX.reshape(-1, 3 * H)
    grads["dec_b"] = dGX.sum(axis=(0, 1))
    np.add.at(grads["tgt_embed"], fc.dec_in, dGX @ params["dec_Wx"].T)

    if fc.src_index is not None:
        # sum gradients of sequences sharing a source, in a fixed order
        share = np.zeros((enc.init.shape[0], B))
        share[fc.src_index, np.arange(B)] = 1.0
        dstates = (share @ dstates.reshape(B, -1)).reshape(enc.states.shape)
        ds = share @ ds
        B = enc.init.shape[0]
    dpre = ds * (1.0 - enc.init * enc.init)
    grads["bridge_W"] = enc.cache["final"].T @ dpre
    grads["bridge_b"] = dpre.sum(axis=0)
    dfinal = dpre @ params["bridge_W"].T

    Ssrc = fc.src.shape[1]
    mask = enc.mask
    X = enc.cache["X"]
    dX = np.zeros_like(X)
    for direction, steps, dlast in (
        ("fwd", range(Ssrc - 1, -1, -1), dfinal[:, :H]),
        ("bwd", range(Ssrc), np.zeros((B, H))),
    ):
        dHs = dstates[:, :, :H] if direction == "fwd" else dstates[:, :, H:].copy()
        if direction == "bwd":
            dHs[:, 0] += dfinal[:, H:]
        Wh = params[f"enc_{direction}_Wh"]
        dWh = grads[f"enc_{direction}_Wh"]
        caches = enc.cache[direction]
        dGXe = np.zeros((B, Ssrc, 3 * H))
        dh = dlast
        for t in steps:
            dh = dh + dHs[:, t]
            m = mask[:, t, None]
            dgx, dprev = _gru_step_back(dh * m, caches[t], Wh, dWh)
            dGXe[:, t] = dgx
            dh = dprev + dh * ~m
        grads[f"enc_{direction}_Wx"] = X.reshape(-1, E).T @ dGXe.reshape(-1, 3 * H)
        grads[f"enc_{direction}_b"] = dGXe.sum(axis=(0, 1))
        dX += dGXe @ params[f"enc_{direction}_Wx"].T
    np.add.at(grads["src_embed"], fc.src, dX)

    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in tensor {name!r}")
    return grads


def grad_weighted_nll(params: Params, srcs, tgts, weights, src_index=None) -> tuple[float, dict[str, np.ndarray]]:
    """Loss -sum_i w_i log p(y_i | x_i) and its exact gradient."""
    fc = forward(params, srcs, tgts, src_index)
    w = np.asarray(weights, dtype=np.float64)
    nz = w != 0
    loss = -float(np.sum(w[nz] * fc.seq_log_probs[nz]))
    grads = backward(params, fc, w)
    if not np.isfinite(loss):
        bad = [k for k, v in params.items() if not np.all(np.isfinite(v))]
        raise FloatingPointError(f"non-finite weighted NLL (non-finite parameters: {bad})")
    return loss, grads


def batch_log_probs(params: Params, srcs, tgts) -> np.ndarray:
    return forward(params, srcs, tgts).seq_log_probs


# ---------------------------------------------------------------------------
# decoding


def greedy_decode_batch(params: Params, srcs: Sequence[Sentence], max_len: int) -> tuple[list[Sentence], np.ndarray]:
    """Argmax decoding; returns hypotheses (EOS stripped) and their total log-probabilities."""
    src, src_len = pad(srcs)
    enc = encode(params, src, src_len)
    B = len(srcs)
    s = enc.init
    tokens = np.full(B, BOS, dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    scores = np.zeros(B)
    out: list[list[int]] = [[] for _ in range(B)]
    while not done.all():
        s, logp = decoder_step(params, enc, s, tokens)
        tokens = logp.argmax(axis=1)
        live = np.flatnonzero(~done)
        scores[live] += logp[live, tokens[live]]
        for i in live:
            if tokens[i] == EOS:
                done[i] = True
            else:
                out[i].append(int(tokens[i]))
                done[i] = len(out[i]) >= max_len
    return [tuple(o) for o in out], scores


def greedy_decode(params: Params, x: Sentence, max_len: int = 30) -> Sentence:
    return greedy_decode_batch(params, [x], max_len)[0][0]


def beam_decode_scored(params: Params, x: Sentence, beam: int, max_len: int = 30) -> tuple[Sentence, float]:
    """Beam search keeping the ``beam`` best prefixes by total log-probability.

    Hypotheses end at EOS; prefixes reaching ``max_len`` tokens are closed
    without EOS. Search stops once no live prefix can beat the best
    finished hypothesis (log-probabilities only decrease).
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    enc1 = _encode_one(params, x)
    prefixes: list[tuple[int, ...]] = [()]
    scores = np.zeros(1)
    states = enc1.init
    last = np.array([BOS])
    finished: list[tuple[float, tuple[int, ...]]] = []
    while prefixes:
        enc = enc1.take(np.zeros(len(prefixes), dtype=np.int64))
        states, logp = decoder_step(params, enc, states, last)
        cand = (scores[:, None] + logp).ravel()
        V = logp.shape[1]
        order = np.argsort(-cand, kind="stable")[:beam]
        new_prefixes, new_scores, rows, toks = [], [], [], []
        for flat in order:
            score = float(cand[flat])
            if score == -np.inf:
                break
            row, tok = divmod(int(flat), V)
            if tok == EOS:
                finished.append((score, prefixes[row]))
                continue
            seq = prefixes[row] + (tok,)
            if len(seq) >= max_len:
                finished.append((score, seq))
                continue
            new_prefixes.append(seq)
            new_scores.append(score)
            rows.append(row)
            toks.append(tok)
        best_done = max((f[0] for f in finished), default=-np.inf)
        keep = [i for i, sc in enumerate(new_scores) if sc > best_done]
        prefixes = [new_prefixes[i] for i in keep]
        scores = np.array([new_scores[i] for i in keep])
        states = states[[rows[i] for i in keep]]
        last = np.array([toks[i] for i in keep], dtype=np.int64)
    best = max(finished, key=lambda f: f[0])
    return best[1], best[0]


def beam_decode(params: Params, x: Sentence, beam: int, max_len: int = 30) -> Sentence:
    return beam_decode_scored(params, x, beam, max_len)[0]


def ancestral_sample(params: Params, x: Sentence, rng: np.random.Generator | int, max_len: int = 30) -> Sentence:
    """Sample tokens from the per-step softmax until EOS or ``max_len`` tokens."""
    rng = np.random.default_rng(rng)
    enc = _encode_one(params, x)
    s = enc.init
    tok = BOS
    out: list[int] = []
    while len(out) < max_len:
        s, logp = decoder_step(params, enc, s, np.array([tok]))
        p = np.exp(logp[0])
        tok = int(rng.choice(p.size, p=p / p.sum()))
        if tok == EOS:
            break
        out.append(tok)
    return tuple(out)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(params: Params, path: str | Path) -> None:
    header = [CHECKPOINT_VERSION]
    header += [" ".join([name] + [str(d) for d in arr.shape]) for name, arr in params.items()]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n\n").encode("utf-8"))
        for arr in params.values():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> Params:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    head, sep, body = data.partition(b"\n\n")
    lines = head.decode("utf-8").split("\n")
    if not sep or lines[0] != CHECKPOINT_VERSION:
        raise DataError(f"{path}: not a {CHECKPOINT_VERSION!r} file")
    params: Params = {}
    offset = 0
    for line in lines[1:]:
        name, *dims = line.split()
        shape = tuple(int(d) for d in dims)
        n = int(np.prod(shape, dtype=np.int64))
        chunk = body[offset : offset + 8 * n]
        if len(chunk) != 8 * n:
            raise DataError(f"{path}: truncated data for {name}")
        params[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        offset += 8 * n
    if offset != len(body):
        raise DataError(f"{path}: {len(body) - offset} trailing bytes")
    return params
