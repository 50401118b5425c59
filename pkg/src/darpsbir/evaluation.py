"""Greedy (mean-location, head 1) evaluation of the trained agent.

Offline evaluation runs one glimpse step per partial-sketch stage; the rank
of the matching image is recorded at every stage. The same step function
drives the live retrieval service, so an online session that replays an
item's stages reproduces the offline result exactly.
"""
from __future__ import annotations

import numpy as np

from . import agent as ag
from .dataset import Dataset, render_stage_rasters
from .embedder import EmbeddingTable
from .metrics import RetrievalResult, summarize
from .numeric import ParamSet
from .reward import rank_of_query


def greedy_episode(stage_rasters: np.ndarray, item_id: str, params: ParamSet,
                   h0: np.ndarray, gallery: EmbeddingTable, gcfg: ag.GlimpseConfig,
                   steps: int | None = None, normalize_action: bool = False):
    """Deterministic rollout: the next location is head 1's mean.

    Returns (per-step ranks, per-step predicted embeddings, glimpse pixel
    trail). With steps == number of stages, step t sees stage t+1.
    """
    n_stages = stage_rasters.shape[0]
    t_steps = n_stages if steps is None else steps
    hidden = h0
    loc = np.zeros(2, dtype=np.float64)
    ranks, actions, trail = [], [], []
    height, width = stage_rasters.shape[1:]
    for t in range(t_steps):
        raster = stage_rasters[min(t, n_stages - 1)]
        trail.append(ag.agent_to_pixel(loc, width, height))
        hidden, a, _ = ag.step_forward(params, gcfg, raster, hidden, loc,
                                       normalize_action)
        ranks.append(rank_of_query(a, item_id, gallery))
        actions.append(a)
        mu, _ = ag.locator_mean(params, 1, hidden)
        loc = mu.astype(np.float64)
    return ranks, actions, trail


def evaluate_items(ds: Dataset, items, gallery: EmbeddingTable, params: ParamSet,
                   h0: np.ndarray, gcfg: ag.GlimpseConfig, dilate_radius: int = 1,
                   stage_cache: dict | None = None, normalize_action: bool = False):
    """Per-stage greedy retrieval over `items`; returns the summary dict with
    a 'results' list of RetrievalResult."""
    results = []
    for item in items:
        if stage_cache is not None and item.id in stage_cache:
            stages = stage_cache[item.id]
        else:
            stages = render_stage_rasters(ds, item, dilate_radius, params.dtype)
            if stage_cache is not None:
                stage_cache[item.id] = stages
        ranks, _, _ = greedy_episode(stages, item.id, params, h0, gallery, gcfg,
                                     normalize_action=normalize_action)
        results.append(RetrievalResult(item.id, ranks, len(gallery)))
    summary = summarize(results)
    summary["results"] = results
    return summary
