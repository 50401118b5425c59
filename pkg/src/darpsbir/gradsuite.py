"""Finite-difference verification suites for every gradient path in the
package. Instances are built at reduced dimensions (the backward code is
dimension-generic) in float64, and rejection-sampled so no relu/hinge
kink sits within reach of the probe epsilon; production dimensions are
covered by the same code paths.
"""
from __future__ import annotations

import numpy as np

from . import agent as ag
from .embedder import EmbedderDims, init_embedder_params, triplet_batch_loss_and_grads
from .numeric import ParamSet, finite_diff_check
from .reward import EpisodeTrace, Experience, policy_gradient, policy_objective

_SMALL = ag.AgentDims(hidden=20, glimpse=14, branch=12, action=8)
_GCFG = ag.GlimpseConfig(patch_size=4, depth=1, scale_factor=1.0)
# rejection margin around relu/hinge kinks; must stay well above the largest
# pre-activation shift a +-eps parameter probe can cause (~eps * max input)
_KINK_MARGIN = 3e-4

COMPONENTS = ("glimpse", "rnn", "action", "locator", "embedder", "hybrid")


def _small_params(seed: int, heads: int = 1) -> ParamSet:
    rng = np.random.default_rng(seed)
    return ag.init_agent_params(rng, heads, _GCFG, _SMALL, dtype=np.float64)


def _preacts_safe(*pres) -> bool:
    return all(np.min(np.abs(p)) > _KINK_MARGIN for p in pres)


def check_glimpse(seed: int):
    for attempt in range(50):
        s = seed + 1000 * attempt
        rng = np.random.default_rng(s)
        params = _small_params(s)
        rho = rng.uniform(0.1, 1.0, _GCFG.retina_len)
        v = rng.uniform(-0.9, 0.9, 2)
        c = rng.standard_normal(_SMALL.glimpse)
        g, cache = ag.glimpse_forward(params, rho, v)
        if not _preacts_safe(cache["hr_pre"], cache["hv_pre"], cache["g_pre"]):
            continue
        params.zero_grads()
        ag.glimpse_backward(params, cache, c)

        def loss(p):
            out, _ = ag.glimpse_forward(p, rho, v)
            return float(out @ c)

        return finite_diff_check(loss, params)
    raise RuntimeError("could not build a kink-safe glimpse instance")


def check_rnn(seed: int, steps: int = 3):
    for attempt in range(50):
        s = seed + 1000 * attempt
        rng = np.random.default_rng(s)
        params = _small_params(s)
        h0 = 0.3 * rng.standard_normal(_SMALL.hidden)
        gs = [rng.uniform(0.1, 1.0, _SMALL.glimpse) for _ in range(steps)]
        cs = [rng.standard_normal(_SMALL.hidden) for _ in range(steps)]

        hidden = h0
        caches = []
        ok = True
        for g in gs:
            hidden, cache = ag.rnn_step(params, hidden, g)
            caches.append(cache)
            ok = ok and _preacts_safe(cache["h_pre"])
        if not ok:
            continue
        params.zero_grads()
        carry = np.zeros(_SMALL.hidden)
        for t in range(steps - 1, -1, -1):
            carry, _ = ag.rnn_backward(params, caches[t], cs[t] + carry)

        def loss(p):
            h = h0
            total = 0.0
            for g, c in zip(gs, cs):
                h, _ = ag.rnn_step(p, h, g)
                total += float(h @ c)
            return total

        return finite_diff_check(loss, params)
    raise RuntimeError("could not build a kink-safe rnn instance")


def check_action(seed: int):
    rng = np.random.default_rng(seed)
    params = _small_params(seed)
    h = rng.standard_normal(_SMALL.hidden)
    e = rng.standard_normal(_SMALL.action)
    a, cache = ag.action_forward(params, h)
    _, d_a = ag.supervised_loss(a, e)
    params.zero_grads()
    ag.action_backward(params, cache, d_a)

    def loss(p):
        out, _ = ag.action_forward(p, h)
        return ag.supervised_loss(out, e)[0]

    return finite_diff_check(loss, params)


def check_locator(seed: int):
    rng = np.random.default_rng(seed)
    params = _small_params(seed, heads=2)
    h = rng.standard_normal(_SMALL.hidden)
    c = rng.standard_normal(2)
    mu, cache = ag.locator_mean(params, 2, h)
    params.zero_grads()
    ag.locator_mean_backward(params, 2, cache, c)

    def loss(p):
        out, _ = ag.locator_mean(p, 2, h)
        return float(out @ c)

    return finite_diff_check(loss, params)


def check_embedder(seed: int):
    dims = EmbedderDims(input=36, hidden1=16, hidden2=12, embed=8)
    for attempt in range(200):
        s = seed + 1000 * attempt
        rng = np.random.default_rng(s)
        params = init_embedder_params(rng, dims, dtype=np.float64)
        # bias the oracle instance away from dead relus: near-zero embedding
        # norms make the normalization too curved for an eps=1e-5 probe
        params["embed/b1"].value += 0.1
        params["embed/b2"].value += 0.1
        params["embed/b3"].value += 0.4
        anchors = rng.uniform(0.0, 1.0, (2, dims.input))
        positives = rng.uniform(0.0, 1.0, (2, dims.input))
        negatives = rng.uniform(0.0, 1.0, (2, dims.input))
        margin = 0.3
        if not _embedder_instance_safe(params, anchors, positives, negatives, margin):
            continue
        params.zero_grads()
        triplet_batch_loss_and_grads(params, anchors, positives, negatives, margin)

        def loss(p):
            # independent recompute, no grad side effects
            from .embedder import embed_batch

            e_a = embed_batch(p, anchors)
            e_p = embed_batch(p, positives)
            e_n = embed_batch(p, negatives)
            d_pos = np.sum((e_a - e_p) ** 2, axis=1)
            d_neg = np.sum((e_a - e_n) ** 2, axis=1)
            return float(np.mean(np.maximum(0.0, margin + d_pos - d_neg)))

        return finite_diff_check(loss, params)
    raise RuntimeError("could not build a kink-safe embedder instance")


def _embedder_instance_safe(params, anchors, positives, negatives, margin) -> bool:
    from .embedder import embed_batch

    pres = []
    embeds = []
    for x in (anchors, positives, negatives):
        w1, b1 = params["embed/w1"].value, params["embed/b1"].value
        w2, b2 = params["embed/w2"].value, params["embed/b2"].value
        w3, b3 = params["embed/w3"].value, params["embed/b3"].value
        z1 = x @ w1.T + b1
        h1 = np.maximum(z1, 0)
        z2 = h1 @ w2.T + b2
        h2 = np.maximum(z2, 0)
        z3 = h2 @ w3.T + b3
        pres.extend([z1, z2, z3])
        e_raw = np.maximum(z3, 0)
        gate_in = e_raw @ params["embed/att_w"].value.T + params["embed/att_b"].value
        gate = np.exp(gate_in - gate_in.max(axis=1, keepdims=True))
        gate /= gate.sum(axis=1, keepdims=True)
        # tiny pre-normalization norms make the L2 normalization too curved
        if np.min(np.linalg.norm(e_raw * gate, axis=1)) < 0.05:
            return False
        embeds.append(embed_batch(params, x))
    if not all(np.min(np.abs(z)) > _KINK_MARGIN for z in pres):
        return False
    e_a, e_p, e_n = embeds
    hinge_arg = margin + np.sum((e_a - e_p) ** 2, 1) - np.sum((e_a - e_n) ** 2, 1)
    # keep every hinge clearly on one side, with at least one active row
    return bool(np.all(np.abs(hinge_arg) > _KINK_MARGIN) and np.any(hinge_arg > 0))


def check_hybrid(seed: int, steps: int = 3, heads: int = 2):
    """Frozen-sample check of the full hybrid update direction on a toy
    rollout: supervised BPTT through glimpse/RNN/action with locations held
    fixed, minus the mask-gated policy surrogate for every head evaluated at
    the recorded states/draws/returns."""
    for attempt in range(50):
        s = seed + 1000 * attempt
        rng = np.random.default_rng(s)
        params = _small_params(s, heads=heads)
        rasters = rng.uniform(0.0, 1.0, (steps, 16, 16))
        target = rng.standard_normal(_SMALL.action)
        target /= np.linalg.norm(target)
        h0 = 0.3 * rng.standard_normal(_SMALL.hidden)
        sigma = np.array([0.4, 0.4])
        head = 1

        # reference rollout: sample locations, fabricate rewards. A nonzero
        # start keeps the location branch off its zero-bias relu kink.
        hidden = h0
        loc = np.array([0.15, -0.2])
        locs, caches, actions = [], [], []
        trace = EpisodeTrace(item_id="toy", episode=0, head=head, sigma=sigma,
                             target=target)
        safe = True
        for t in range(steps):
            locs.append(loc)
            hidden, a, cache = ag.step_forward(params, _GCFG, rasters[t], hidden, loc)
            caches.append(cache)
            actions.append(a)
            safe = safe and _preacts_safe(cache["glimpse"]["hr_pre"],
                                          cache["glimpse"]["hv_pre"],
                                          cache["glimpse"]["g_pre"],
                                          cache["rnn"]["h_pre"])
            mu, _ = ag.locator_mean(params, head, hidden)
            sample = ag.sample_location(mu, sigma, rng)
            masks = (rng.random(heads) < 0.5).astype(np.uint8)
            trace.experiences.append(Experience(h=hidden.copy(), v_raw=sample.v_raw,
                                                v=sample.v, reward_next=int(rng.integers(0, 2)),
                                                h_next=None, masks=masks, head=head, t=t))
            loc = sample.v
        if not safe:
            continue
        trace.finalize(gamma=0.9)
        if np.all(trace.returns == 0.0) or not any(
                e.masks.any() for e in trace.experiences):
            continue

        trace.step_caches = caches
        trace.actions = actions
        params.zero_grads()
        accum_supervised(trace, params)
        for k in range(1, heads + 1):
            gw, gb = policy_gradient([trace], k, params)
            params[f"locator/head{k}/w"].grad -= gw
            params[f"locator/head{k}/b"].grad -= gb

        def loss(p):
            h = h0
            total = 0.0
            for t in range(steps):
                h, a, _ = ag.step_forward(p, _GCFG, rasters[t], h, locs[t])
                total += ag.supervised_loss(a, target)[0]
            for k in range(1, heads + 1):
                total -= policy_objective([trace], k, p)
            return total

        return finite_diff_check(loss, params)
    raise RuntimeError("could not build a kink-safe hybrid instance")


def accum_supervised(trace: EpisodeTrace, params: ParamSet) -> None:
    from .trainer import accumulate_supervised_grads

    accumulate_supervised_grads(trace, params, scale=1.0)


_CHECKS = {
    "glimpse": check_glimpse,
    "rnn": check_rnn,
    "action": check_action,
    "locator": check_locator,
    "embedder": check_embedder,
    "hybrid": check_hybrid,
}


def run_component(name: str, seeds=range(5)):
    """Worst (error, entry) for one component across seeds."""
    worst = 0.0
    worst_entry = ""
    for seed in seeds:
        err, entry = _CHECKS[name](seed)
        if err > worst:
            worst, worst_entry = err, entry
    return worst, worst_entry
