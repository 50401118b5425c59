import numpy as np
import pytest

from darpsbir import agent as ag
from darpsbir.embedder import EmbeddingTable
from darpsbir.reward import (EpisodeTrace, Experience, RewardConfig,
                             discounted_return, policy_gradient,
                             policy_objective, returns_from_rewards, reward,
                             score, threshold)


def _table(mat, ids=None):
    ids = ids or [f"i{k}" for k in range(mat.shape[0])]
    return EmbeddingTable(ids, np.asarray(mat, dtype=np.float64))


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------

def test_score_exact_match_rank_one():
    rng = np.random.default_rng(0)
    mat = rng.standard_normal((6, 4))
    table = _table(mat)
    assert score(mat[2], "i2", table) == 1.0


def test_score_hand_gallery():
    # distances to the query: target 0.5, others 0.1, 0.9, 0.7 -> rank 2
    q = np.zeros(1)
    mat = np.array([[np.sqrt(0.5)], [np.sqrt(0.1)], [np.sqrt(0.9)], [np.sqrt(0.7)]])
    table = _table(mat, ["target", "a", "b", "c"])
    assert score(q, "target", table) == pytest.approx(0.5)


def test_score_ties_count_inclusively():
    q = np.zeros(1)
    mat = np.array([[1.0], [-1.0], [2.0]])  # two entries at distance 1
    table = _table(mat, ["t", "tie", "far"])
    assert score(q, "t", table) == pytest.approx(0.5)


def test_score_missing_target():
    table = _table(np.zeros((2, 3)))
    with pytest.raises(KeyError):
        score(np.zeros(3), "nope", table)


def test_score_matches_brute_force_on_random_galleries():
    rng = np.random.default_rng(1)
    for _ in range(300):
        n = int(rng.integers(2, 24))
        mat = rng.standard_normal((n, 8))
        if rng.random() < 0.3:
            mat[rng.integers(0, n)] = mat[rng.integers(0, n)]  # force ties
        table = _table(mat)
        q = rng.standard_normal(8)
        tid = f"i{rng.integers(0, n)}"
        d_t = np.sum((table.get(tid) - q) ** 2)
        rank = sum(1 for row in mat if np.sum((row - q) ** 2) <= d_t)
        assert score(q, tid, table) == 1.0 / rank


# ---------------------------------------------------------------------------
# threshold / reward
# ---------------------------------------------------------------------------

def test_threshold_paper_constants():
    cfg = RewardConfig(alpha=0.02, beta=-2.0)
    assert threshold(0, cfg) == pytest.approx(0.8808, abs=1e-4)
    assert threshold(100, cfg) == pytest.approx(0.9820, abs=1e-4)


def test_threshold_monotone():
    cfg = RewardConfig()
    values = [threshold(t, cfg) for t in range(0, 2000, 50)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_reward_boundaries():
    assert reward(1.0, 0.5) == 1
    assert reward(0.5, 0.5) == 1  # inclusive
    assert reward(0.1, 0.9) == 0


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(alpha=0.0)
    with pytest.raises(ValueError):
        RewardConfig(gamma=0.0)
    with pytest.raises(ValueError):
        RewardConfig(gamma=1.5)


# ---------------------------------------------------------------------------
# returns
# ---------------------------------------------------------------------------

def test_return_examples():
    assert discounted_return([1, 1, 1], 1.0, 0) == 3.0
    assert discounted_return([0, 0, 1], 0.9, 0) == pytest.approx(0.81)
    assert not returns_from_rewards([0, 0, 0, 0], 0.9).any()


def test_return_recursion_exact_on_random_sequences():
    rng = np.random.default_rng(2)
    for _ in range(50):
        rewards = rng.integers(0, 2, size=int(rng.integers(1, 20))).tolist()
        gamma = float(rng.uniform(0.1, 1.0))
        g = returns_from_rewards(rewards, gamma)
        for t in range(len(rewards) - 1):
            assert g[t] == rewards[t] + gamma * g[t + 1]
        assert g[-1] == rewards[-1]


def test_gamma_one_is_total_count():
    rng = np.random.default_rng(3)
    rewards = rng.integers(0, 2, size=12).tolist()
    assert returns_from_rewards(rewards, 1.0)[0] == sum(rewards)


# ---------------------------------------------------------------------------
# policy gradient
# ---------------------------------------------------------------------------

def _toy_trace(seed, heads=2, steps=3, all_zero_returns=False, masks_off_head=None):
    rng = np.random.default_rng(seed)
    params = ag.init_agent_params(rng, heads, dtype=np.float64)
    trace = EpisodeTrace(item_id="x", episode=0, head=1,
                         sigma=np.array([0.4, 0.4]), target=np.zeros(64))
    for t in range(steps):
        h = rng.standard_normal(256)
        mu, _ = ag.locator_mean(params, 1, h)
        s = ag.sample_location(mu, trace.sigma, rng)
        masks = np.ones(heads, np.uint8)
        if masks_off_head is not None:
            masks[masks_off_head - 1] = 0
        r = 0 if all_zero_returns else int(rng.integers(0, 2))
        trace.experiences.append(Experience(h=h, v_raw=s.v_raw, v=s.v, reward_next=r,
                                            h_next=None, masks=masks, head=1, t=t))
    trace.finalize(0.9)
    return params, trace


def test_pg_zero_returns_zero_gradient():
    params, trace = _toy_trace(0, all_zero_returns=True)
    gw, gb = policy_gradient([trace], 1, params)
    assert not gw.any() and not gb.any()


def test_pg_masked_head_zero_gradient():
    params, trace = _toy_trace(1, masks_off_head=2)
    gw, gb = policy_gradient([trace], 2, params)
    assert not gw.any() and not gb.any()
    gw1, _ = policy_gradient([trace], 1, params)
    assert gw1.any()


def test_pg_matches_frozen_sample_finite_difference():
    params, trace = _toy_trace(2)
    for head in (1, 2):
        gw, gb = policy_gradient([trace], head, params)
        wname = f"locator/head{head}/w"
        eps = 1e-6
        w = params[wname].value
        for idx in [(0, 7), (1, 100), (0, 200)]:
            orig = w[idx]
            w[idx] = orig + eps
            up = policy_objective([trace], head, params)
            w[idx] = orig - eps
            down = policy_objective([trace], head, params)
            w[idx] = orig
            num = (up - down) / (2 * eps)
            assert num == pytest.approx(gw[idx], rel=1e-5, abs=1e-8)


def test_pg_one_step_degenerate_form():
    # gradient equals G * (v_raw - mu)/sigma^2 * dmu/dtheta for one step
    rng = np.random.default_rng(4)
    params = ag.init_agent_params(rng, 1, dtype=np.float64)
    h = rng.standard_normal(256)
    sigma = np.array([0.5, 0.5])
    mu, _ = ag.locator_mean(params, 1, h)
    s = ag.sample_location(mu, sigma, rng)
    trace = EpisodeTrace(item_id="x", episode=0, head=1, sigma=sigma, target=np.zeros(64))
    trace.experiences.append(Experience(h=h, v_raw=s.v_raw, v=s.v, reward_next=1,
                                        h_next=None, masks=np.ones(1, np.uint8), head=1, t=0))
    trace.finalize(0.9)
    gw, gb = policy_gradient([trace], 1, params)
    g_t = 1.0
    expected_dz = (s.v_raw - mu) / sigma ** 2 * (1 - mu ** 2) * g_t
    assert np.allclose(gw, np.outer(expected_dz, h))
    assert np.allclose(gb, expected_dz)


def test_pg_requires_finalized_trace():
    params, trace = _toy_trace(5)
    trace.returns = None
    with pytest.raises(RuntimeError):
        policy_gradient([trace], 1, params)


def test_score_one_iff_strictly_nearest():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(2, 12))
        mat = rng.standard_normal((n, 4))
        table = _table(mat)
        q = rng.standard_normal(4)
        tid = f"i{rng.integers(0, n)}"
        d = np.sum((mat - q) ** 2, axis=1)
        d_t = d[table.index[tid]]
        strictly_nearest = np.sum(d <= d_t) == 1
        assert (score(q, tid, table) == 1.0) == strictly_nearest


def test_score_decreases_with_closer_distractors():
    rng = np.random.default_rng(7)
    q = rng.standard_normal(4)
    target = q + 0.5  # fixed distance from the query
    rows = [target]
    ids = ["t"]
    prev = score(q, "t", _table(np.stack(rows), ids))
    for k in range(5):
        # each new distractor strictly closer to q than the target
        rows.append(q + 0.1 * (k + 1) / 10)
        ids.append(f"d{k}")
        cur = score(q, "t", _table(np.stack(rows), ids))
        assert cur < prev
        prev = cur
