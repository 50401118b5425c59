import numpy as np
import pytest

from darpsbir import agent as ag
from darpsbir.numeric import OptimizerState, sgd_step
from darpsbir.reward import EpisodeTrace, Experience, policy_gradient


def quadrant_episodes_to_positive_mean(seed: int, max_episodes: int = 2000,
                                       batch: int = 8, sigma_val: float = 0.3,
                                       lr: float = 0.05):
    """One-step environment: reward 1 iff the sampled x coordinate is
    positive. Policy-gradient updates on a single head should drive the mean
    into the rewarded half. Returns episodes used, or None if the mean never
    turned positive within the budget."""
    rng = np.random.default_rng(seed)
    params = ag.init_agent_params(rng, heads=1, dtype=np.float64)
    h = rng.standard_normal(256)
    mu, _ = ag.locator_mean(params, 1, h)
    if mu[0] > 0:  # start outside the rewarded quadrant
        params["locator/head1/w"].value[0] *= -1.0
        params["locator/head1/b"].value[0] *= -1.0
    sigma = np.array([sigma_val, sigma_val])
    opt = OptimizerState(lr, momentum=0.0)
    episodes = 0
    while episodes < max_episodes:
        traces = []
        for _ in range(batch):
            mu, _ = ag.locator_mean(params, 1, h)
            s = ag.sample_location(mu, sigma, rng)
            r = 1 if s.v_raw[0] > 0 else 0
            trace = EpisodeTrace(item_id="q", episode=episodes, head=1,
                                 sigma=sigma, target=np.zeros(1))
            trace.experiences.append(Experience(
                h=h, v_raw=s.v_raw, v=s.v, reward_next=r, h_next=None,
                masks=np.ones(1, np.uint8), head=1, t=0))
            trace.finalize(gamma=0.9)
            traces.append(trace)
            episodes += 1
        gw, gb = policy_gradient(traces, 1, params)
        params["locator/head1/w"].grad -= gw
        params["locator/head1/b"].grad -= gb
        sgd_step(params, opt)
        mu, _ = ag.locator_mean(params, 1, h)
        if mu[0] > 0:
            return episodes
    return None


@pytest.fixture(scope="session")
def acceptance_workspace(tmp_path_factory):
    """Dataset + embedder shared by the acceptance criteria (CLI-driven)."""
    from darpsbir.cli import main

    root = tmp_path_factory.mktemp("acceptance")
    data = root / "data"
    emb = root / "emb"
    rc = main(["gen-data", "--classes", "32", "--per-class", "8",
               "--noise-prob", "0.2", "--seed", "0", "--out", str(data)])
    assert rc == 0
    rc = main(["train-embedder", "--data", str(data), "--epochs", "40",
               "--margin", "0.3", "--seed", "0", "--out", str(emb)])
    assert rc == 0
    return {"root": root, "data": data, "embedder": emb / "embedder.ckpt"}
