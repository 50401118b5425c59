"""Dynamic ranking reward, adaptive threshold, discounted returns, and the
bootstrapped Monte Carlo policy-gradient estimator.

The binary reward fires when the matching image's reciprocal rank clears a
sigmoid-scheduled threshold. Each recorded experience carries a per-head
Bernoulli mask; head k learns only from experiences whose mask bit k is set,
recomputing its own mean location for the log-density score.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .agent import locator_mean, num_heads
from .embedder import EmbeddingTable
from .numeric import ParamSet


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 0.02
    beta: float = -2.0
    gamma: float = 0.9

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")


class GalleryLookupError(KeyError):
    pass


def score(a: np.ndarray, target_id: str, gallery: EmbeddingTable) -> float:
    """Reciprocal of the matching image's inclusive rank among the gallery.

    rank counts every entry (self included) whose squared distance to the
    prediction is <= the target's, so rank >= 1 and score is in (0, 1].
    """
    if target_id not in gallery:
        raise GalleryLookupError(f"target {target_id!r} not in gallery")
    d = gallery.sq_distances(np.asarray(a))
    d_target = d[gallery.index[target_id]]
    rank = int(np.count_nonzero(d <= d_target))
    return 1.0 / rank


def rank_of_query(a: np.ndarray, target_id: str, gallery: EmbeddingTable) -> int:
    if target_id not in gallery:
        raise GalleryLookupError(f"target {target_id!r} not in gallery")
    d = gallery.sq_distances(np.asarray(a))
    return int(np.count_nonzero(d <= d[gallery.index[target_id]]))


def threshold(t: int, cfg: RewardConfig) -> float:
    """Adaptive reward threshold; t is the global training-episode counter."""
    if t < 0:
        raise ValueError("t must be >= 0")
    return 1.0 / (1.0 + np.exp(-cfg.alpha * t + cfg.beta))


def reward(score_value: float, eta: float) -> int:
    return 1 if score_value >= eta else 0


def returns_from_rewards(rewards, gamma: float) -> np.ndarray:
    """All suffix returns in one backward sweep: G_t = R_t + gamma * G_{t+1}."""
    out = np.zeros(len(rewards), dtype=np.float64)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def discounted_return(rewards, gamma: float, t: int) -> float:
    if not 0 <= t < len(rewards):
        raise ValueError("t out of range")
    return float(returns_from_rewards(rewards, gamma)[t])


# ---------------------------------------------------------------------------
# Episode records.
# ---------------------------------------------------------------------------

@dataclass
class Experience:
    h: np.ndarray          # state the location was sampled from
    v_raw: np.ndarray      # pre-clamp Gaussian draw
    v: np.ndarray          # clamped location
    reward_next: int
    h_next: np.ndarray | None
    masks: np.ndarray      # (K,) uint8 Bernoulli bootstrap mask
    head: int              # executing head for the episode
    t: int


@dataclass
class EpisodeTrace:
    item_id: str
    episode: int
    head: int
    sigma: np.ndarray
    target: np.ndarray                 # frozen image embedding e_i
    experiences: list = field(default_factory=list)
    step_caches: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    sup_loss: float = 0.0
    returns: np.ndarray | None = None

    def finalize(self, gamma: float) -> None:
        rewards = [exp.reward_next for exp in self.experiences]
        self.returns = returns_from_rewards(rewards, gamma)

    @property
    def rewards(self):
        return [exp.reward_next for exp in self.experiences]


# ---------------------------------------------------------------------------
# Bootstrapped policy gradient (ascent direction).
# ---------------------------------------------------------------------------

def policy_gradient(traces: list[EpisodeTrace], head: int, params: ParamSet,
                    baseline: float = 0.0):
    """Monte Carlo policy gradient for one locator head.

    grad = (1/M) sum_m sum_t mask_k[m,t] * d log pi_k(v_raw | h) / d theta * G_t,
    chaining the Gaussian score (v_raw - mu)/sigma^2 through the tanh-affine
    mean. Masked-out experiences contribute nothing. Ascent direction; the
    trainer negates it for the minimizing optimizer. `baseline` (default 0,
    i.e. none) is subtracted from every return before weighting.
    """
    if not 1 <= head <= num_heads(params):
        raise IndexError(f"locator head {head} out of range")
    w_name, b_name = f"locator/head{head}/w", f"locator/head{head}/b"
    grad_w = np.zeros_like(params[w_name].value, dtype=np.float64)
    grad_b = np.zeros_like(params[b_name].value, dtype=np.float64)
    m = len(traces)
    if m == 0:
        raise ValueError("no traces to estimate the policy gradient from")
    for trace in traces:
        if trace.returns is None:
            raise RuntimeError("trace not finalized: returns missing")
        sig2 = trace.sigma.astype(np.float64) ** 2
        for exp, g_t in zip(trace.experiences, trace.returns):
            if not exp.masks[head - 1]:
                continue
            weight = g_t - baseline
            if weight == 0.0:
                continue
            mu, _ = locator_mean(params, head, exp.h)
            score_mu = (exp.v_raw - mu) / sig2
            d_z = score_mu * (1.0 - mu.astype(np.float64) ** 2) * weight
            grad_w += np.outer(d_z, exp.h)
            grad_b += d_z
    grad_w /= m
    grad_b /= m
    return grad_w, grad_b


def policy_objective(traces: list[EpisodeTrace], head: int, params: ParamSet) -> float:
    """Frozen-sample surrogate whose gradient is policy_gradient: the
    mask-gated mean of log pi_k(v_raw | h) * G_t. Used by the oracle."""
    from .agent import gaussian_log_density

    total = 0.0
    for trace in traces:
        sigma = trace.sigma.astype(np.float64)
        for exp, g_t in zip(trace.experiences, trace.returns):
            if not exp.masks[head - 1] or g_t == 0.0:
                continue
            mu, _ = locator_mean(params, head, exp.h)
            total += gaussian_log_density(exp.v_raw, mu.astype(np.float64), sigma) * g_t
    return total / len(traces)
