"""Property and oracle suites run by ``alphadimt verify``.

Each check yields a :class:`CheckResult`; a suite fails if any check fails.
The enumerable instance used by the oracle suite is a tiny encoder-decoder
restricted (renormalized) to a Hamming ball, so every objective and
gradient can be summed exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import model as M
from .augment import AugmentConfig, draw_sample, enumerate_ball, log_q0, max_edits
from .objectives import (
    FiniteDist, ObjectiveConfig, alpha_divergence, alpha_dimt_value, generalized_log, kl_divergence,
    logsumexp, normalize_weights, oracle_gradient_alpha, oracle_gradient_entropy_rl, oracle_gradient_raml,
    raw_log_weight, sequence_weights, surrogate_loss,
)
from .rewards import hamming_reward
from .seqcore import synthetic_vocab


@dataclass
class CheckResult:
    name: str
    passed: bool
    observed: object
    expected: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: observed {self.observed}, expected {self.expected}"


def rel_l2(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def cosine(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def flatten(grads: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([g.ravel() for g in grads.values()])


# ---------------------------------------------------------------------------
# enumerable instance


class EnumeratedInstance:
    """A sequence model over an exhaustively enumerated output space.

    The model is the encoder-decoder renormalized over the Hamming ball of
    ``y_star``: log pbar(y) = log p(y | x) - logsumexp_ball log p(. | x).
    """

    def __init__(self, content: int = 3, y_star=(5, 4, 3), x=(3, 4, 5), radius: int = 1,
                 embed: int = 3, hidden: int = 4, init_scale: float = 0.5, seed: int = 0):
        self.vocab = synthetic_vocab(content)
        self.x, self.y_star, self.radius = tuple(x), tuple(y_star), radius
        self.ball = [y for y, _ in enumerate_ball(self.y_star, self.vocab, radius)]
        self.rewards = np.array([hamming_reward(y, self.y_star) for y in self.ball], dtype=np.float64)
        self.log_q0 = np.array([log_q0(y, self.y_star, content, radius=radius) for y in self.ball])
        cfg = M.ModelConfig(len(self.vocab), len(self.vocab), embed, hidden, init_scale=init_scale, seed=seed)
        self.params = M.init_params(cfg)

    def model_log_probs(self) -> np.ndarray:
        return M.batch_log_probs(self.params, [self.x] * len(self.ball), self.ball)

    def log_probs(self) -> np.ndarray:
        lp = self.model_log_probs()
        return lp - logsumexp(lp)

    def weighted_grad(self, weights) -> np.ndarray:
        """Flattened gradient of -sum_j weights[j] log pbar(y_j)."""
        w = np.asarray(weights, dtype=np.float64)
        pbar = np.exp(self.log_probs())
        # d/dtheta log pbar(y_j) = d log p(y_j) - sum_k pbar_k d log p(y_k)
        _, g = M.grad_weighted_nll(self.params, [self.x] * len(self.ball), self.ball, w - w.sum() * pbar)
        return flatten(g)

    def jacobian(self) -> np.ndarray:
        """Rows: grad log pbar(y_j), built one sequence at a time."""
        n = len(self.ball)
        return np.array([-self.weighted_grad(np.eye(n)[j]) for j in range(n)])

    def surrogate(self, alpha: float, tau: float):
        """Weighted batch over the full ball carrying exact proposal mass, and its loss gradient."""
        kind = "raml" if alpha == 0 else "alpha_dimt"
        lp = self.log_probs()
        u = raw_log_weight(lp, self.rewards, self.log_q0, ObjectiveConfig(kind, alpha, tau))
        wb = normalize_weights(u, np.zeros(len(self.ball), dtype=np.int64), log_mass=self.log_q0)
        return wb, surrogate_loss(wb, lp), self.weighted_grad(sequence_weights(wb))

    def objective_value(self, alpha: float, tau: float) -> float:
        return alpha_dimt_value(self.log_probs(), self.rewards, alpha, tau)

    def finite_difference(self, fn: Callable[[], float], h: float = 1e-5) -> np.ndarray:
        out = []
        for arr in self.params.values():
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                up = fn()
                arr[idx] = old - h
                down = fn()
                arr[idx] = old
                out.append((up - down) / (2 * h))
        return np.array(out)


# ---------------------------------------------------------------------------
# suites


def math_suite(n_random: int = 1000, seed: int = 0) -> Iterator[CheckResult]:
    yield CheckResult("generalized_log(4, 0.5)", abs(generalized_log(4.0, 0.5) - 2.0) < 1e-12,
                      generalized_log(4.0, 0.5), "2")
    yield CheckResult("generalized_log(2, 0)", abs(generalized_log(2.0, 0.0) - 1.0) < 1e-12,
                      generalized_log(2.0, 0.0), "1")
    p, q = FiniteDist([0.5, 0.5]), FiniteDist([0.25, 0.75])
    d = alpha_divergence(p, q, 0.5)
    yield CheckResult("alpha_divergence bernoulli hand value", abs(d - 0.136297) <= 1e-6, d, "0.136297 +- 1e-6")

    rng = np.random.default_rng(seed)
    worst = {"nonneg": 0.0, "identity": 0.0, "sym": 0.0, "kl0": 0.0, "kl1": 0.0}
    for _ in range(n_random):
        n = int(rng.integers(2, 17))
        a, b = FiniteDist(rng.dirichlet(np.ones(n))), FiniteDist(rng.dirichlet(np.ones(n)))
        for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
            worst["nonneg"] = min(worst["nonneg"], alpha_divergence(a, b, alpha))
            worst["identity"] = max(worst["identity"], abs(alpha_divergence(a, a, alpha)))
        worst["sym"] = max(worst["sym"], abs(alpha_divergence(a, b, 0.5) - alpha_divergence(b, a, 0.5)))
        worst["kl0"] = max(worst["kl0"], abs(alpha_divergence(a, b, 1e-8) - kl_divergence(b, a)))
        worst["kl1"] = max(worst["kl1"], abs(alpha_divergence(a, b, 1 - 1e-8) - kl_divergence(a, b)))
    yield CheckResult("alpha_divergence non-negative", worst["nonneg"] >= 0, worst["nonneg"], ">= 0")
    yield CheckResult("alpha_divergence(p, p) == 0", worst["identity"] <= 1e-12, worst["identity"], "<= 1e-12")
    yield CheckResult("alpha_divergence symmetric at 0.5", worst["sym"] == 0.0, worst["sym"], "0 exactly")
    yield CheckResult("alpha -> 0 gives KL(q||p)", worst["kl0"] <= 1e-6, worst["kl0"], "<= 1e-6")
    yield CheckResult("alpha -> 1 gives KL(p||q)", worst["kl1"] <= 1e-6, worst["kl1"], "<= 1e-6")

    u = rng.normal(size=50)
    ctx = rng.integers(0, 7, size=50)
    ctx = np.unique(ctx, return_inverse=True)[1]
    sums = normalize_weights(u, ctx).context_sums()
    err = float(np.abs(sums - 1).max())
    yield CheckResult("normalized weights sum to 1 per context", err <= 1e-12, err, "<= 1e-12")

    raml = ObjectiveConfig.raml(3.0)
    r, lq = rng.integers(-2, 1, size=8).astype(float), np.log(rng.uniform(0.01, 1, size=8))
    w1 = normalize_weights(raw_log_weight(rng.normal(size=8) * 5, r, lq, raml), np.zeros(8, int)).weights
    w2 = normalize_weights(raw_log_weight(rng.normal(size=8) * 5, r, lq, raml), np.zeros(8, int)).weights
    yield CheckResult("alpha = 0 weights independent of log p", np.array_equal(w1, w2),
                      float(np.abs(w1 - w2).max()), "bit-identical")


def grad_suite(h: float = 1e-5, tol: float = 1e-4, seed: int = 0) -> Iterator[CheckResult]:
    """Finite-difference check of the surrogate-loss gradient on a tiny model."""
    cfg = M.ModelConfig(5, 5, embed_dim=3, hidden_dim=4, init_scale=0.5, seed=seed)
    params = M.init_params(cfg)
    vocab_content = (3, 4)
    rng = np.random.default_rng(seed)
    srcs, tgts, ctx = [], [], []
    for c in range(3):
        x = tuple(int(t) for t in rng.choice(vocab_content, size=int(rng.integers(1, 5))))
        for _ in range(2):
            srcs.append(x)
            tgts.append(tuple(int(t) for t in rng.choice(vocab_content, size=int(rng.integers(1, 5)))))
            ctx.append(c)
    lp = M.batch_log_probs(params, srcs, tgts)
    u = raw_log_weight(lp, rng.integers(-2, 1, size=len(srcs)), np.log(rng.uniform(0.1, 1, size=len(srcs))),
                       ObjectiveConfig("alpha_dimt", 0.5, 3.0))
    wb = normalize_weights(u, ctx)
    coef = sequence_weights(wb)
    _, grads = M.grad_weighted_nll(params, srcs, tgts, coef)

    def loss():
        return surrogate_loss(wb, M.batch_log_probs(params, srcs, tgts))

    for name, arr in params.items():
        worst = 0.0
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss()
            arr[idx] = old - h
            down = loss()
            arr[idx] = old
            fd, an = (up - down) / (2 * h), grads[name][idx]
            worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
        yield CheckResult(f"gradient {name}", worst <= tol, worst, f"<= {tol}")


def proposal_checks(n_draws: int = 100_000, seed: int = 0) -> Iterator[CheckResult]:
    worst = 0.0
    for m in range(1, 7):
        for V in range(2, 7):
            vocab = synthetic_vocab(V)
            y_star = tuple(vocab.content_ids[i % V] for i in range(m))
            ball = enumerate_ball(y_star, vocab, max_edits(m))
            total = math.fsum(math.exp(log_q0(y, y_star, V)) for y, _ in ball)
            worst = max(worst, abs(total - 1.0))
    yield CheckResult("proposal sums to 1 (m <= 6, V <= 6)", worst <= 1e-12, worst, "<= 1e-12")

    vocab = synthetic_vocab(6)
    rng = np.random.default_rng(seed)
    y_star = (3, 4, 5, 6, 7)
    counts = np.zeros(2)
    for _ in range(n_draws):
        counts[draw_sample(y_star, vocab, AugmentConfig(), rng).e] += 1
    z = float(np.max(np.abs(counts / n_draws - 0.5) / math.sqrt(0.25 / n_draws)))
    yield CheckResult("edit-count frequencies (m=5, V=6)", z <= 3.0, f"{z:.3f} standard errors", "<= 3")


def oracle_suite(tau: float = 3.0) -> Iterator[CheckResult]:
    yield from proposal_checks()
    inst = EnumeratedInstance()
    yield CheckResult("ball size", len(inst.ball) == 7, len(inst.ball), "7")
    jac = inst.jacobian()
    lp = inst.log_probs()
    for alpha in (0.1, 0.5, 0.9):
        _, _, g = inst.surrogate(alpha, tau)
        cos = cosine(g, oracle_gradient_alpha(lp, jac, inst.rewards, alpha, tau))
        yield CheckResult(f"surrogate parallel to exact gradient, alpha={alpha}", cos >= 1 - 1e-9, cos, ">= 1 - 1e-9")
    err0 = rel_l2(oracle_gradient_alpha(lp, jac, inst.rewards, 1e-6, tau), tau * oracle_gradient_raml(jac, inst.rewards, tau))
    yield CheckResult("alpha -> 0 gradient is tau * RAML gradient", err0 <= 1e-4, err0, "<= 1e-4")
    err1 = rel_l2(oracle_gradient_alpha(lp, jac, inst.rewards, 1 - 1e-6, tau),
                  oracle_gradient_entropy_rl(lp, jac, inst.rewards, tau))
    yield CheckResult("alpha -> 1 gradient is entropy-regularized policy gradient", err1 <= 1e-3, err1, "<= 1e-3")
    fd = inst.finite_difference(lambda: inst.objective_value(0.5, tau))
    errfd = rel_l2(oracle_gradient_alpha(lp, jac, inst.rewards, 0.5, tau), fd)
    yield CheckResult("exact gradient matches finite differences, alpha=0.5", errfd <= 1e-6, errfd, "<= 1e-6")


SUITES = {"math": math_suite, "grad": grad_suite, "oracle": oracle_suite}


def run(suite: str, emit: Callable[[str], None] = print) -> bool:
    names = list(SUITES) if suite == "all" else [suite]
    ok = True
    for name in names:
        start = time.perf_counter()
        for result in SUITES[name]():
            ok &= result.passed
            emit(f"[{name}] {result.line()}")
        emit(f"[{name}] done in {time.perf_counter() - start:.1f}s")
    return ok
