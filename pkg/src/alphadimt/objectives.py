"""Objective-function math for alpha-divergence training.

Two layers live here:

* the training-time estimator: raw log importance weights, per-context
  self-normalization, and the surrogate loss whose gradient (with weights
  held fixed) is the self-normalized importance-sampling gradient;
* exact enumeration oracles over a finite output space, used to check the
  estimator against the closed-form objectives and their gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError

LIMIT_EPS = 1e-6
OBJECTIVE_KINDS = ("ml", "raml", "alpha_dimt")


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str = "alpha_dimt"
    alpha: float = 0.5
    tau: float = 3.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ConfigError(f"unknown objective {self.kind!r}; choose from {', '.join(OBJECTIVE_KINDS)}")
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigError("alpha must lie in [0, 1)")
        if not self.tau > 0:
            raise ConfigError("tau must be > 0")
        if self.kind == "raml" and self.alpha != 0.0:
            raise ConfigError("raml is the alpha = 0 objective")

    @classmethod
    def raml(cls, tau: float = 3.0) -> "ObjectiveConfig":
        return cls("raml", 0.0, tau)


class FiniteDist:
    """A probability vector over an explicitly indexed finite support."""

    def __init__(self, probs, atol: float = 1e-12):
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("FiniteDist needs a nonempty 1-d probability vector")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(math.fsum(p) - 1.0) > atol:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        self.p = p

    @classmethod
    def from_logits(cls, logits) -> "FiniteDist":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(np.exp(logits - logsumexp(logits)))

    def __len__(self) -> int:
        return self.p.size

    def __repr__(self) -> str:
        return f"FiniteDist({self.p!r})"


def logsumexp(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    mx = np.max(x)
    if not np.isfinite(mx):
        return float(mx)
    return float(mx + math.log(math.fsum(np.exp(x - mx))))


def generalized_log(x: float, alpha: float) -> float:
    if not x > 0:
        raise ValueError("generalized log is defined for x > 0")
    if abs(1.0 - alpha) <= LIMIT_EPS:
        return math.log(x)
    return (x ** (1.0 - alpha) - 1.0) / (1.0 - alpha)


def _check_pair(p: FiniteDist, q: FiniteDist) -> None:
    if len(p) != len(q):
        raise ValueError(f"supports differ: {len(p)} vs {len(q)}")


def kl_divergence(p: FiniteDist, q: FiniteDist) -> float:
    """KL(p || q); infinite when p puts mass where q has none."""
    _check_pair(p, q)
    mask = p.p > 0
    if np.any(q.p[mask] == 0):
        return math.inf
    return max(math.fsum(p.p[mask] * (np.log(p.p[mask]) - np.log(q.p[mask]))), 0.0)


def alpha_divergence(p: FiniteDist, q: FiniteDist, alpha: float) -> float:
    """D_A^(alpha)(p || q); KL(q || p) at alpha -> 0 and KL(p || q) at alpha -> 1."""
    _check_pair(p, q)
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha <= LIMIT_EPS:
        return kl_divergence(q, p)
    if alpha >= 1.0 - LIMIT_EPS:
        return kl_divergence(p, q)
    both = (p.p > 0) & (q.p > 0)
    terms = np.exp(alpha * np.log(p.p[both]) + (1.0 - alpha) * np.log(q.p[both]))
    overlap_gap = math.fsum(np.concatenate(([1.0], -terms)))
    # rounding can leave -1e-17 when p == q
    return max(overlap_gap / (alpha * (1.0 - alpha)), 0.0)


# ---------------------------------------------------------------------------
# importance-sampling estimator


def raw_log_weight(log_p, reward, log_q0, cfg: ObjectiveConfig):
    """u = alpha * log p + (1 - alpha) * r / tau - log q0.

    Per-context constants (the tau / (1 - alpha) prefactor and the payoff
    normalizer) are dropped; per-context normalization removes them.
    Works elementwise on arrays.
    """
    if cfg.alpha == 0.0:
        # exactly model-independent, even for log_p = -inf
        return (1.0 - cfg.alpha) * np.asarray(reward, dtype=np.float64) / cfg.tau - np.asarray(log_q0, dtype=np.float64)
    return (
        cfg.alpha * np.asarray(log_p, dtype=np.float64)
        + (1.0 - cfg.alpha) * np.asarray(reward, dtype=np.float64) / cfg.tau
        - np.asarray(log_q0, dtype=np.float64)
    )


@dataclass
class WeightedBatch:
    """Samples grouped by source context with raw and normalized log-weights.

    ``context[i]`` is the 0-based context index of sample i; contexts are
    numbered 0..n_contexts-1.
    """

    context: np.ndarray
    u: np.ndarray
    weights: np.ndarray
    samples: Sequence | None = None

    @property
    def n_contexts(self) -> int:
        return int(self.context.max()) + 1 if self.context.size else 0

    def context_sums(self) -> np.ndarray:
        return np.bincount(self.context, weights=self.weights, minlength=self.n_contexts)


def normalize_weights(u, context, log_mass=None, samples=None) -> WeightedBatch:
    """Softmax of ``u`` within each context.

    ``log_mass`` optionally gives each sample a log multiplicity: a sample set
    that enumerates the proposal support exactly carries its proposal mass
    log q0 here, turning the sample average into the exact expectation.
    """
    u = np.asarray(u, dtype=np.float64)
    context = np.asarray(context, dtype=np.int64)
    if u.shape != context.shape:
        raise ValueError("u and context must align")
    logits = u if log_mass is None else u + np.asarray(log_mass, dtype=np.float64)
    n = int(context.max()) + 1 if context.size else 0
    if np.any(np.bincount(context, minlength=n) == 0):
        raise ValueError("every context needs at least one sample")
    weights = np.empty_like(logits)
    for c in range(n):
        idx = np.flatnonzero(context == c)
        lse = logsumexp(logits[idx])
        if lse == -math.inf:
            raise ValueError(f"context {c}: all log-weights are -inf")
        weights[idx] = np.exp(logits[idx] - lse)
    return WeightedBatch(context, u, weights, samples)


def surrogate_loss(weighted: WeightedBatch, log_probs) -> float:
    """-(1/N) sum_x sum_i w_i log p(y_i | x), weights held constant."""
    log_probs = np.asarray(log_probs, dtype=np.float64)
    nz = weighted.weights != 0
    return -math.fsum(weighted.weights[nz] * log_probs[nz]) / weighted.n_contexts


def sequence_weights(weighted: WeightedBatch) -> np.ndarray:
    """Per-sample coefficients of -log p in the surrogate loss."""
    return weighted.weights / weighted.n_contexts


# ---------------------------------------------------------------------------
# exact oracles over an enumerated output space


def payoff_log_probs(rewards, tau: float) -> np.ndarray:
    """log q_tau(y) over the enumerated support, q_tau proportional to exp(r / tau)."""
    z = np.asarray(rewards, dtype=np.float64) / tau
    return z - logsumexp(z)


def oracle_objectives(p: FiniteDist, rewards, target_index: int, cfg: ObjectiveConfig) -> dict[str, float]:
    """All five objectives for one context, by exhaustive summation.

    ``rewards[j]`` is r(y_j, y*) and ``target_index`` locates y* in the
    support. Keys: ``ml``, ``expected_reward``, ``entropy_rl``, ``raml``,
    ``alpha_dimt`` (the last is tau * D_A^(alpha)(p || q_tau)).
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.shape != p.p.shape:
        raise ValueError("rewards must cover the support of p")
    q = FiniteDist(np.exp(payoff_log_probs(r, cfg.tau)))
    pos = p.p > 0
    with np.errstate(divide="ignore"):
        log_p = np.log(p.p)
    entropy = -math.fsum(p.p[pos] * log_p[pos])
    expected_reward = math.fsum(p.p * r)
    qpos = q.p > 0
    raml = math.inf if np.any(p.p[qpos] == 0) else -math.fsum(q.p[qpos] * log_p[qpos])
    return {
        "ml": -float(log_p[target_index]),
        "expected_reward": -expected_reward,
        "entropy_rl": -cfg.tau * entropy - expected_reward,
        "raml": raml,
        "alpha_dimt": cfg.tau * alpha_divergence(p, q, cfg.alpha),
    }


def alpha_dimt_value(log_p, rewards, alpha: float, tau: float) -> float:
    """tau / (alpha (1 - alpha)) * (1 - sum_y p^alpha q_tau^(1 - alpha)) for 0 < alpha < 1.

    ``log_p`` may be unnormalized over the support (a model whose mass
    partly lies outside it); only terms inside the support of q_tau count.
    """
    log_q = payoff_log_probs(rewards, tau)
    terms = np.exp(alpha * np.asarray(log_p, dtype=np.float64) + (1.0 - alpha) * log_q)
    return tau / (alpha * (1.0 - alpha)) * math.fsum(np.concatenate(([1.0], -terms)))


def oracle_gradient_alpha(log_p, jacobian, rewards, alpha: float, tau: float) -> np.ndarray:
    """Exact gradient -sum_y tau/(1-alpha) p^alpha q_tau^(1-alpha) grad log p(y).

    ``jacobian[j]`` is grad_theta log p(y_j) flattened; ``log_p`` and the
    payoff distribution are over the same enumerated support.
    """
    if not 0.0 <= alpha < 1.0:
        raise ValueError("alpha must lie in [0, 1)")
    log_q = payoff_log_probs(rewards, tau)
    mix = tau / (1.0 - alpha) * np.exp(alpha * np.asarray(log_p, dtype=np.float64) + (1.0 - alpha) * log_q)
    return -(mix @ np.asarray(jacobian, dtype=np.float64))


def oracle_gradient_raml(jacobian, rewards, tau: float) -> np.ndarray:
    """Gradient of -sum_y q_tau(y) log p(y)."""
    q = np.exp(payoff_log_probs(rewards, tau))
    return -(q @ np.asarray(jacobian, dtype=np.float64))


def oracle_gradient_entropy_rl(log_p, jacobian, rewards, tau: float) -> np.ndarray:
    """Policy gradient of -tau H(p) - E_p[r]: -sum_y p (r - tau log p - c) grad log p.

    ``c = tau log Z_tau`` is the payoff log-normalizer; for p normalized over
    the support it contributes nothing since sum_y p grad log p = 0.
    """
    log_p = np.asarray(log_p, dtype=np.float64)
    r = np.asarray(rewards, dtype=np.float64)
    c = tau * logsumexp(r / tau)
    p = np.exp(log_p)
    return -((p * (r - tau * log_p - c)) @ np.asarray(jacobian, dtype=np.float64))
