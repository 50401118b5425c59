"""The reinforced attention agent: retina sensor, glimpse network, recurrent
state core, action head, and the K-head Gaussian locator.

Locations live in the agent frame [-1, 1]^2 with (-1, -1) at the top-left;
pixel mapping is col = rint((x+1)/2 * (W-1)), row = rint((y+1)/2 * (H-1)).
All forward passes cache enough to run the hand-written backward passes in
the trainer; every gradient path is covered by the finite-difference oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .numeric import ParamSet, relu, relu_grad, uniform_init


@dataclass(frozen=True)
class GlimpseConfig:
    patch_size: int = 8
    depth: int = 1
    scale_factor: float = 1.0

    def __post_init__(self):
        if self.patch_size < 2:
            raise ValueError("patch_size must be >= 2")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.scale_factor < 1.0:
            raise ValueError("scale_factor must be >= 1")

    @property
    def retina_len(self) -> int:
        return self.depth * self.patch_size * self.patch_size


@dataclass(frozen=True)
class AgentDims:
    """Production dims are fixed by contract; the gradient oracle shrinks them."""
    hidden: int = 256
    glimpse: int = 128
    branch: int = 128
    action: int = 64


def init_agent_params(rng: np.random.Generator, heads: int,
                      cfg: GlimpseConfig = GlimpseConfig(),
                      dims: AgentDims = AgentDims(), dtype=np.float32) -> ParamSet:
    if heads < 1:
        raise ValueError("need at least one locator head")
    p = ParamSet(dtype)
    r = cfg.retina_len
    p.add("glimpse/w_rho", uniform_init(rng, (dims.branch, r), r, dtype))
    p.add("glimpse/b_rho", np.zeros(dims.branch, dtype=dtype))
    p.add("glimpse/w_loc", uniform_init(rng, (dims.branch, 2), 2, dtype))
    p.add("glimpse/b_loc", np.zeros(dims.branch, dtype=dtype))
    p.add("glimpse/w_comb_rho", uniform_init(rng, (dims.glimpse, dims.branch), dims.branch, dtype))
    p.add("glimpse/w_comb_loc", uniform_init(rng, (dims.glimpse, dims.branch), dims.branch, dtype))
    p.add("glimpse/b_comb", np.zeros(dims.glimpse, dtype=dtype))
    fan = dims.hidden + dims.glimpse
    p.add("rnn/w_hh", uniform_init(rng, (dims.hidden, dims.hidden), fan, dtype))
    p.add("rnn/w_gh", uniform_init(rng, (dims.hidden, dims.glimpse), fan, dtype))
    p.add("rnn/b_h", np.zeros(dims.hidden, dtype=dtype))
    p.add("action/w", uniform_init(rng, (dims.action, dims.hidden), dims.hidden, dtype))
    p.add("action/b", np.zeros(dims.action, dtype=dtype))
    for k in range(1, heads + 1):
        p.add(f"locator/head{k}/w", uniform_init(rng, (2, dims.hidden), dims.hidden, dtype))
        p.add(f"locator/head{k}/b", np.zeros(2, dtype=dtype))
    return p


def initial_hidden(rng: np.random.Generator, hidden: int = 256, dtype=np.float32) -> np.ndarray:
    """Run-level random initial state, reused by every episode of the run."""
    return (0.1 * rng.standard_normal(hidden)).astype(dtype)


def num_heads(params: ParamSet) -> int:
    k = 0
    while f"locator/head{k + 1}/w" in params:
        k += 1
    return k


def agent_dims(params: ParamSet) -> AgentDims:
    return AgentDims(
        hidden=params["rnn/w_hh"].value.shape[0],
        glimpse=params["glimpse/w_comb_rho"].value.shape[0],
        branch=params["glimpse/w_rho"].value.shape[0],
        action=params["action/w"].value.shape[0],
    )


# ---------------------------------------------------------------------------
# Coordinate maps.
# ---------------------------------------------------------------------------

def agent_to_pixel(v, width: int, height: int):
    col = int(np.rint((v[0] + 1.0) / 2.0 * (width - 1)))
    row = int(np.rint((v[1] + 1.0) / 2.0 * (height - 1)))
    return col, row


def pixel_to_agent(col: int, row: int, width: int, height: int):
    return 2.0 * col / (width - 1) - 1.0, 2.0 * row / (height - 1) - 1.0


# ---------------------------------------------------------------------------
# Retina sensor.
# ---------------------------------------------------------------------------

def extract_retina(raster: np.ndarray, v, cfg: GlimpseConfig) -> np.ndarray:
    """Multi-scale square crops centered at v, zero-padded at borders, each
    area-averaged down to patch_size^2, concatenated coarse-last."""
    height, width = raster.shape
    col, row = agent_to_pixel(v, width, height)
    parts = []
    for d in range(cfg.depth):
        side = int(round(cfg.patch_size * cfg.scale_factor ** d))
        parts.append(kernels.retina_patch(raster, row, col, side, cfg.patch_size).reshape(-1))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Network forward/backward passes. Caches are plain dicts.
# ---------------------------------------------------------------------------

def glimpse_forward(params: ParamSet, rho: np.ndarray, v: np.ndarray):
    w_r, b_r = params["glimpse/w_rho"].value, params["glimpse/b_rho"].value
    w_l, b_l = params["glimpse/w_loc"].value, params["glimpse/b_loc"].value
    w_cr = params["glimpse/w_comb_rho"].value
    w_cl = params["glimpse/w_comb_loc"].value
    b_c = params["glimpse/b_comb"].value
    hr_pre = w_r @ rho + b_r
    hr = relu(hr_pre)
    hv_pre = w_l @ v + b_l
    hv = relu(hv_pre)
    g_pre = w_cr @ hr + w_cl @ hv + b_c
    g = relu(g_pre)
    cache = {"rho": rho, "v": v, "hr_pre": hr_pre, "hr": hr,
             "hv_pre": hv_pre, "hv": hv, "g_pre": g_pre}
    return g, cache


def glimpse_backward(params: ParamSet, cache: dict, d_g: np.ndarray) -> None:
    d_gpre = relu_grad(cache["g_pre"], d_g)
    params["glimpse/w_comb_rho"].grad += np.outer(d_gpre, cache["hr"])
    params["glimpse/w_comb_loc"].grad += np.outer(d_gpre, cache["hv"])
    params["glimpse/b_comb"].grad += d_gpre
    d_hr = relu_grad(cache["hr_pre"], params["glimpse/w_comb_rho"].value.T @ d_gpre)
    d_hv = relu_grad(cache["hv_pre"], params["glimpse/w_comb_loc"].value.T @ d_gpre)
    params["glimpse/w_rho"].grad += np.outer(d_hr, cache["rho"])
    params["glimpse/b_rho"].grad += d_hr
    params["glimpse/w_loc"].grad += np.outer(d_hv, cache["v"])
    params["glimpse/b_loc"].grad += d_hv


def rnn_step(params: ParamSet, h_prev: np.ndarray, g: np.ndarray):
    w_hh = params["rnn/w_hh"].value
    w_gh = params["rnn/w_gh"].value
    b_h = params["rnn/b_h"].value
    h_pre = w_hh @ h_prev + w_gh @ g + b_h
    h = relu(h_pre)
    return h, {"h_prev": h_prev, "g": g, "h_pre": h_pre}


def rnn_backward(params: ParamSet, cache: dict, d_h: np.ndarray):
    """Returns (d_h_prev, d_g)."""
    d_pre = relu_grad(cache["h_pre"], d_h)
    params["rnn/w_hh"].grad += np.outer(d_pre, cache["h_prev"])
    params["rnn/w_gh"].grad += np.outer(d_pre, cache["g"])
    params["rnn/b_h"].grad += d_pre
    return params["rnn/w_hh"].value.T @ d_pre, params["rnn/w_gh"].value.T @ d_pre


def action_forward(params: ParamSet, h: np.ndarray):
    a = params["action/w"].value @ h + params["action/b"].value
    return a, {"h": h}


def action_backward(params: ParamSet, cache: dict, d_a: np.ndarray) -> np.ndarray:
    params["action/w"].grad += np.outer(d_a, cache["h"])
    params["action/b"].grad += d_a
    return params["action/w"].value.T @ d_a


def supervised_loss(a: np.ndarray, e: np.ndarray):
    """Squared distance to the target embedding; returns (loss, d_a)."""
    diff = a - e
    return float(diff @ diff), 2.0 * diff


def locator_mean(params: ParamSet, k: int, h: np.ndarray):
    if not 1 <= k <= num_heads(params):
        raise IndexError(f"locator head {k} out of range")
    w = params[f"locator/head{k}/w"].value
    b = params[f"locator/head{k}/b"].value
    z = w @ h + b
    mu = np.tanh(z)
    return mu, {"h": h, "mu": mu}


def locator_mean_backward(params: ParamSet, k: int, cache: dict, d_mu: np.ndarray) -> None:
    d_z = d_mu * (1.0 - cache["mu"] ** 2)
    params[f"locator/head{k}/w"].grad += np.outer(d_z, cache["h"])
    params[f"locator/head{k}/b"].grad += d_z


# ---------------------------------------------------------------------------
# Gaussian location sampling (diagonal covariance, clamped to [-1, 1]).
# ---------------------------------------------------------------------------

@dataclass
class LocationSample:
    v: np.ndarray        # clamped location actually attended next
    v_raw: np.ndarray    # pre-clamp draw; log-density terms use this
    mu: np.ndarray
    sigma: np.ndarray
    score_mu: np.ndarray  # d log pi / d mu at v_raw


def sample_location(mu: np.ndarray, sigma, rng: np.random.Generator) -> LocationSample:
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma <= 0.0):
        raise ValueError("sigma components must be positive")
    v_raw = mu + sigma * rng.standard_normal(2)
    v = np.clip(v_raw, -1.0, 1.0)
    score_mu = (v_raw - mu) / (sigma ** 2)
    return LocationSample(v=v, v_raw=v_raw, mu=np.asarray(mu, dtype=np.float64),
                          sigma=sigma, score_mu=score_mu)


def gaussian_log_density(v_raw: np.ndarray, mu: np.ndarray, sigma: np.ndarray) -> float:
    z = (v_raw - mu) / sigma
    return float(-0.5 * np.sum(z * z) - np.sum(np.log(sigma)) - np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# One full agent step (shared by training rollouts, offline eval, service).
# ---------------------------------------------------------------------------

def step_forward(params: ParamSet, cfg: GlimpseConfig, raster: np.ndarray,
                 hidden: np.ndarray, loc: np.ndarray, normalize_action: bool = False):
    """Glimpse at `loc`, advance the recurrent state, predict the embedding.

    Returns (hidden_next, action_vec, cache) where cache carries everything
    the supervised backward pass needs. The prediction is affine by default;
    normalize_action rescales it to unit norm (off unless configured).
    """
    rho = extract_retina(raster, loc, cfg)
    g, g_cache = glimpse_forward(params, rho, np.asarray(loc, dtype=hidden.dtype))
    h_next, r_cache = rnn_step(params, hidden, g)
    a, a_cache = action_forward(params, h_next)
    cache = {"glimpse": g_cache, "rnn": r_cache, "action": a_cache, "norm": None}
    if normalize_action:
        norm = float(np.linalg.norm(a))
        if norm > 1e-12:
            a_unit = a / norm
            cache["norm"] = (norm, a_unit)
            a = a_unit
    return h_next, a, cache


def step_backward_action(params: ParamSet, cache: dict, d_a: np.ndarray) -> np.ndarray:
    """Backward of one step's action output (through the optional unit-norm
    rescale) down to the hidden state."""
    if cache["norm"] is not None:
        norm, a_unit = cache["norm"]
        d_a = (d_a - a_unit * float(a_unit @ d_a)) / norm
    return action_backward(params, cache["action"], d_a)
