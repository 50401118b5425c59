"""Training orchestration: episode rollouts with a sampled head, bootstrap
masks, the on-policy episodic buffer, dual-level exploration schedules, and
the hybrid update (policy gradient for the locator heads; supervised BPTT
for the action, RNN and glimpse networks).

One episode rolls one item for T steps; the raster seen at step t is the
partial sketch at stage min(t+1, S). Policy samples never receive
supervised gradient and the locator heads never receive supervised
gradient: the two parameter paths are disjoint by construction.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, asdict
from pathlib import Path

import numpy as np

from . import agent as ag
from .checkpoint import read_checkpoint, write_checkpoint
from .dataset import ConfigError, Dataset, render_stage_rasters
from .embedder import EmbeddingTable
from .numeric import OptimizerState, ParamSet, sgd_step
from .reward import (EpisodeTrace, Experience, RewardConfig, policy_gradient,
                     reward, score, threshold)


@dataclass
class TrainConfig:
    M: int = 32                      # episodes per update batch
    total_cycles: int = 300
    T: int = 17                      # steps per episode
    K: int = 6                       # locator heads
    lr: float = 3e-4
    mask_p: float = 0.5
    sigma_start: float = 0.5
    sigma_end: float = 0.05
    reward: RewardConfig = field(default_factory=RewardConfig)
    seed: int = 0
    momentum: float = 0.0
    optimizer: str = "adam"          # supervised path; policy heads stay on SGD
    patch_size: int = 8
    glimpse_depth: int = 1
    scale_factor: float = 1.0
    dilate_radius: int = 1
    fixed_input: bool = False        # glimpse the full sketch at every step
    normalize_action: bool = False   # unit-norm the predicted embedding
    eta_per_step: bool = False       # threshold on step index instead of episode
    return_offset: int = 0           # 1 skips each experience's own reward
    use_baseline: bool = False       # moving-average return baseline for the PG
    baseline_decay: float = 0.9
    checkpoint_interval: int = 0     # cycles between checkpoints; 0 = final only
    early_stop_patience: int = 0     # cycles without val AUIR gain; 0 = off

    def __post_init__(self):
        if self.K < 1 or self.T < 1 or self.M < 1:
            raise ConfigError("K, T and M must be >= 1")
        if not 0.0 < self.mask_p <= 1.0:
            raise ConfigError("mask_p must be in (0, 1]")
        if not self.sigma_start >= self.sigma_end > 0.0:
            raise ConfigError("need sigma_start >= sigma_end > 0")

    def glimpse_config(self) -> ag.GlimpseConfig:
        return ag.GlimpseConfig(self.patch_size, self.glimpse_depth, self.scale_factor)


def load_train_config(path) -> TrainConfig:
    """Parse a JSON config mirroring TrainConfig field names; unknown keys
    are rejected with the offending key named."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return train_config_from_dict(doc)


def train_config_from_dict(doc: dict) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown config key: {key}")
    kwargs = dict(doc)
    if "reward" in kwargs:
        rknown = {f.name for f in fields(RewardConfig)}
        for key in kwargs["reward"]:
            if key not in rknown:
                raise ConfigError(f"unknown config key: reward.{key}")
        kwargs["reward"] = RewardConfig(**kwargs["reward"])
    return TrainConfig(**kwargs)


def apply_override(doc: dict, dotted: str) -> None:
    """Apply one `dotted.key=value` override onto a config dict in place."""
    if "=" not in dotted:
        raise ConfigError(f"override must be key=value: {dotted}")
    key, raw = dotted.split("=", 1)
    target = doc
    parts = key.split(".")
    for part in parts[:-1]:
        target = target.setdefault(part, {})
    target[parts[-1]] = json.loads(raw)


# ---------------------------------------------------------------------------
# Sampling helpers.
# ---------------------------------------------------------------------------

def sample_head(n_heads: int, rng: np.random.Generator) -> int:
    """Uniform over {1..K}; one head executes the whole episode."""
    if n_heads < 1:
        raise ValueError("need at least one head")
    return int(rng.integers(1, n_heads + 1))


def sample_masks(n_heads: int, mask_p: float, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli(mask_p) bootstrap mask per head, per experience."""
    if not 0.0 < mask_p <= 1.0:
        raise ValueError("mask_p must be in (0, 1]")
    return (rng.random(n_heads) < mask_p).astype(np.uint8)


def sigma_schedule(m: int, m_total: int, sigma_start: float, sigma_end: float) -> np.ndarray:
    """Geometric decay from sigma_start to sigma_end over the run."""
    frac = 1.0 if m_total <= 0 else min(1.0, max(0.0, m / m_total))
    value = sigma_start * (sigma_end / sigma_start) ** frac
    return np.array([value, value], dtype=np.float64)


# ---------------------------------------------------------------------------
# Episode rollout.
# ---------------------------------------------------------------------------

def run_episode(stage_rasters: np.ndarray, item_id: str, target: np.ndarray,
                head: int, sigma: np.ndarray, params: ParamSet, h0: np.ndarray,
                gallery: EmbeddingTable, cfg: TrainConfig, eta: float,
                episode_index: int, rng: np.random.Generator) -> EpisodeTrace:
    """Roll one item for T steps with one executing head.

    Step t glimpses the partial sketch at stage min(t+1, S) from the current
    location, advances the hidden state, predicts the final embedding,
    scores it against the gallery, then samples the next location from the
    executing head and records the experience with fresh bootstrap masks.
    """
    gcfg = cfg.glimpse_config()
    n_stages = stage_rasters.shape[0]
    trace = EpisodeTrace(item_id=item_id, episode=episode_index, head=head,
                         sigma=sigma.copy(), target=target)
    hidden = h0
    loc = np.zeros(2, dtype=np.float64)
    sup_total = 0.0
    prev_exp = None
    for t in range(cfg.T):
        stage_idx = n_stages - 1 if cfg.fixed_input else min(t, n_stages - 1)
        raster = stage_rasters[stage_idx]
        hidden, a, cache = ag.step_forward(params, gcfg, raster, hidden, loc,
                                           cfg.normalize_action)
        if prev_exp is not None:
            prev_exp.h_next = hidden
        loss_t, _ = ag.supervised_loss(a, target)
        sup_total += loss_t
        eta_t = threshold(t, cfg.reward) if cfg.eta_per_step else eta
        r = reward(score(a, item_id, gallery), eta_t)
        mu, _ = ag.locator_mean(params, head, hidden)
        sample = ag.sample_location(mu.astype(np.float64), sigma, rng)
        masks = sample_masks(cfg.K, cfg.mask_p, rng)
        exp = Experience(h=hidden, v_raw=sample.v_raw, v=sample.v, reward_next=r,
                         h_next=None, masks=masks, head=head, t=t)
        trace.experiences.append(exp)
        trace.step_caches.append(cache)
        trace.actions.append(a)
        prev_exp = exp
        loc = sample.v
    if prev_exp is not None:
        prev_exp.h_next = hidden
    trace.sup_loss = sup_total
    if cfg.return_offset:
        rewards = [e.reward_next for e in trace.experiences]
        shifted = rewards[cfg.return_offset:] + [0] * cfg.return_offset
        from .reward import returns_from_rewards

        trace.returns = returns_from_rewards(shifted, cfg.reward.gamma)
    else:
        trace.finalize(cfg.reward.gamma)
    return trace


# ---------------------------------------------------------------------------
# Hybrid update.
# ---------------------------------------------------------------------------

def accumulate_supervised_grads(trace: EpisodeTrace, params: ParamSet, scale: float) -> None:
    """Full-episode BPTT of the accumulated squared-distance loss into the
    action, RNN and glimpse parameters. Locations are constants."""
    dims = ag.agent_dims(params)
    d_h_carry = np.zeros(dims.hidden, dtype=params.dtype)
    for t in range(len(trace.step_caches) - 1, -1, -1):
        cache = trace.step_caches[t]
        _, d_a = ag.supervised_loss(trace.actions[t], trace.target)
        d_h = ag.step_backward_action(params, cache, d_a * scale) + d_h_carry
        d_h_carry, d_g = ag.rnn_backward(params, cache["rnn"], d_h)
        ag.glimpse_backward(params, cache["glimpse"], d_g)


def update_cycle(buffer: list[EpisodeTrace], params: ParamSet,
                 opt: OptimizerState, cfg: TrainConfig,
                 locator_opt: OptimizerState | None = None,
                 baseline: float = 0.0) -> None:
    """Apply the hybrid update and flush the on-policy buffer.

    Locator heads take the (negated, for the minimizer) policy gradient over
    every buffered trace, gated by bootstrap masks; supervised BPTT updates
    only the action/RNN/glimpse parameters. The locator heads always use
    momentum-free SGD so that a head whose masks were all zero stays
    bit-identical through the update.
    """
    if not buffer:
        raise RuntimeError("update_cycle on an empty buffer")
    for k in range(1, cfg.K + 1):
        grad_w, grad_b = policy_gradient(buffer, k, params, baseline)
        params[f"locator/head{k}/w"].grad -= grad_w.astype(params.dtype)
        params[f"locator/head{k}/b"].grad -= grad_b.astype(params.dtype)
    scale = 1.0 / len(buffer)
    for trace in buffer:
        accumulate_supervised_grads(trace, params, scale)
    if locator_opt is None:
        locator_opt = OptimizerState(opt.learning_rate, momentum=0.0)
    locator_names = [n for n in params.names() if n.startswith("locator/")]
    other_names = [n for n in params.names() if not n.startswith("locator/")]
    sgd_step(params, locator_opt, names=locator_names)
    sgd_step(params, opt, names=other_names)
    buffer.clear()


# ---------------------------------------------------------------------------
# Full training loop.
# ---------------------------------------------------------------------------

METRICS_HEADER = "cycle,mean_reward,supervised_loss,val_auir,val_acc5,sigma,eta"


@dataclass
class TrainState:
    params: ParamSet
    h0: np.ndarray
    global_episode: int = 0
    cycle: int = 0


def init_train_state(cfg: TrainConfig, dtype=np.float32) -> TrainState:
    rng = np.random.default_rng(cfg.seed)
    params = ag.init_agent_params(rng, cfg.K, cfg.glimpse_config(), dtype=dtype)
    h0 = ag.initial_hidden(rng, dtype=dtype)
    return TrainState(params=params, h0=h0)


def train(ds: Dataset, table: EmbeddingTable, cfg: TrainConfig, out_dir,
          resume: TrainState | None = None, log_fn=None):
    """Run total_cycles of {M episodes -> update_cycle}; write metrics CSV and
    checkpoints. Returns (TrainState, metrics rows)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    state = resume if resume is not None else init_train_state(cfg)
    opt = OptimizerState(cfg.lr, cfg.momentum, kind=cfg.optimizer)
    locator_opt = OptimizerState(cfg.lr, momentum=0.0)
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=cfg.seed, spawn_key=(state.cycle + 1,)))

    train_items = ds.split_items("train")
    if not train_items:
        raise ConfigError("no items in the train split")
    train_table = table.subset([it.id for it in train_items])
    val_items = ds.split_items("test")
    stage_cache = {it.id: render_stage_rasters(ds, it, cfg.dilate_radius, params_dtype(state))
                   for it in ds.items}

    m_total = cfg.total_cycles * cfg.M
    rows = []
    best_val = -np.inf
    stale = 0
    baseline = 0.0
    for cycle in range(state.cycle, state.cycle + cfg.total_cycles):
        buffer: list[EpisodeTrace] = []
        cycle_rewards = []
        cycle_sup = []
        sigma0 = sigma_schedule(state.global_episode, m_total, cfg.sigma_start, cfg.sigma_end)
        eta0 = threshold(state.global_episode, cfg.reward)
        for _ in range(cfg.M):
            item = train_items[int(rng.integers(0, len(train_items)))]
            head = sample_head(cfg.K, rng)
            sigma = sigma_schedule(state.global_episode, m_total, cfg.sigma_start, cfg.sigma_end)
            eta = threshold(state.global_episode, cfg.reward)
            trace = run_episode(stage_cache[item.id], item.id, table.get(item.id),
                                head, sigma, state.params, state.h0, train_table,
                                cfg, eta, state.global_episode, rng)
            buffer.append(trace)
            cycle_rewards.append(np.mean(trace.rewards) if trace.rewards else 0.0)
            cycle_sup.append(trace.sup_loss)
            state.global_episode += 1
        mean_return = float(np.mean([np.mean(t.returns) for t in buffer]))
        update_cycle(buffer, state.params, opt, cfg, locator_opt,
                     baseline if cfg.use_baseline else 0.0)
        baseline = cfg.baseline_decay * baseline + (1 - cfg.baseline_decay) * mean_return
        state.cycle = cycle + 1

        from .evaluation import evaluate_items

        if val_items:
            val = evaluate_items(ds, val_items, table.subset([i.id for i in val_items]),
                                 state.params, state.h0, cfg.glimpse_config(),
                                 cfg.dilate_radius,
                                 normalize_action=cfg.normalize_action)
            val_auir, val_acc5 = val["auir"], val["acc@5"]
        else:
            val_auir, val_acc5 = 0.0, 0.0
        rows.append((cycle, float(np.mean(cycle_rewards)), float(np.mean(cycle_sup)),
                     val_auir, val_acc5, float(sigma0[0]), float(eta0)))
        if log_fn is not None:
            log_fn(rows[-1])
        if cfg.checkpoint_interval and (cycle + 1) % cfg.checkpoint_interval == 0:
            save_agent_checkpoint(out_dir / f"agent_{cycle + 1:05d}.ckpt", state, table, cfg)
        if cfg.early_stop_patience:
            if val_auir > best_val + 1e-9:
                best_val = val_auir
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break

    write_metrics_csv(out_dir / "metrics.csv", rows)
    save_agent_checkpoint(out_dir / "agent.ckpt", state, table, cfg)
    return state, rows


def params_dtype(state: TrainState):
    return state.params.dtype


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(METRICS_HEADER + "\n")
        for row in rows:
            cycle, mean_r, sup, auir, acc5, sigma, eta = row
            fh.write(f"{cycle},{mean_r:.6f},{sup:.6f},{auir:.6f},{acc5:.6f},"
                     f"{sigma:.6f},{eta:.6f}\n")


# ---------------------------------------------------------------------------
# Checkpoint plumbing.
# ---------------------------------------------------------------------------

def save_agent_checkpoint(path, state: TrainState, table: EmbeddingTable,
                          cfg: TrainConfig, extra_meta: dict | None = None) -> None:
    tensors = dict(state.params.values_dict())
    tensors["rnn/h0"] = state.h0
    tensors["embeddings"] = table.matrix
    meta = {
        "kind": "agent",
        "global_episode": state.global_episode,
        "cycle": state.cycle,
        "config": config_to_dict(cfg),
    }
    if extra_meta:
        meta.update(extra_meta)
    write_checkpoint(path, tensors, meta)
    with open(str(path) + ".ids.json", "w", encoding="utf-8") as fh:
        json.dump({"ids": table.ids}, fh, separators=(",", ":"))


def config_to_dict(cfg: TrainConfig) -> dict:
    doc = asdict(cfg)
    return doc


def load_agent_checkpoint(path):
    """Returns (TrainState, EmbeddingTable, meta)."""
    tensors, meta = read_checkpoint(path)
    ids_path = Path(str(path) + ".ids.json")
    with open(ids_path, "r", encoding="utf-8") as fh:
        ids = json.load(fh)["ids"]
    table = EmbeddingTable(ids, tensors.pop("embeddings"))
    h0 = tensors.pop("rnn/h0")
    params = ParamSet(h0.dtype)
    for name in tensors:
        params.add(name, tensors[name])
    state = TrainState(params=params, h0=h0,
                       global_episode=int(meta.get("global_episode", 0)),
                       cycle=int(meta.get("cycle", 0)))
    return state, table, meta
