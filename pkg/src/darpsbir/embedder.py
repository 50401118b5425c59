"""Triplet-trained image embedding network.

Three shared-parameter branches (anchor sketch, positive image, negative
image) over a small affine+relu stack on the flattened raster, followed by
a soft-attention gate (softmax over the embedding dims) and L2
normalization. After training, the embedding table over all item images is
computed once and frozen; it is the retrieval gallery and the reward anchor
for the attention agent.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .numeric import OptimizerState, ParamSet, relu, sgd_step, uniform_init
from .dataset import Dataset, full_sketch_raster

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EmbedderDims:
    input: int = 4096
    hidden1: int = 256
    hidden2: int = 128
    embed: int = 64


def init_embedder_params(rng: np.random.Generator, dims: EmbedderDims = EmbedderDims(),
                         dtype=np.float32) -> ParamSet:
    p = ParamSet(dtype)
    p.add("embed/w1", uniform_init(rng, (dims.hidden1, dims.input), dims.input, dtype))
    p.add("embed/b1", np.zeros(dims.hidden1, dtype=dtype))
    p.add("embed/w2", uniform_init(rng, (dims.hidden2, dims.hidden1), dims.hidden1, dtype))
    p.add("embed/b2", np.zeros(dims.hidden2, dtype=dtype))
    p.add("embed/w3", uniform_init(rng, (dims.embed, dims.hidden2), dims.hidden2, dtype))
    p.add("embed/b3", np.zeros(dims.embed, dtype=dtype))
    p.add("embed/att_w", uniform_init(rng, (dims.embed, dims.embed), dims.embed, dtype))
    p.add("embed/att_b", np.zeros(dims.embed, dtype=dtype))
    return p


def embedder_dims(params: ParamSet) -> EmbedderDims:
    w1 = params["embed/w1"].value
    w2 = params["embed/w2"].value
    w3 = params["embed/w3"].value
    return EmbedderDims(w1.shape[1], w1.shape[0], w2.shape[0], w3.shape[0])


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def embed_batch(params: ParamSet, x: np.ndarray, want_cache: bool = False):
    """Embed a (B, input) batch to (B, embed) unit vectors.

    An all-zero pre-normalization vector falls back to the uniform unit
    vector (logged); its gradient contribution is zero.
    """
    w1, b1 = params["embed/w1"].value, params["embed/b1"].value
    w2, b2 = params["embed/w2"].value, params["embed/b2"].value
    w3, b3 = params["embed/w3"].value, params["embed/b3"].value
    wa, ba = params["embed/att_w"].value, params["embed/att_b"].value

    h1 = relu(x @ w1.T + b1)
    h2 = relu(h1 @ w2.T + b2)
    e_raw = relu(h2 @ w3.T + b3)
    gate = _softmax_rows(e_raw @ wa.T + ba)
    gated = e_raw * gate
    norms = np.linalg.norm(gated, axis=1)
    dead = norms < 1e-12
    if np.any(dead):
        log.warning("embedding fell back to uniform unit vector for %d inputs", int(dead.sum()))
        dim = gated.shape[1]
        gated = gated.copy()
        gated[dead] = 1.0 / np.sqrt(dim)
        norms = np.linalg.norm(gated, axis=1)
    e = gated / norms[:, None]
    if not want_cache:
        return e
    cache = {"x": x, "h1": h1, "h2": h2, "e_raw": e_raw, "gate": gate,
             "norms": norms, "e": e, "dead": dead}
    return e, cache


def embed_backward(params: ParamSet, cache: dict, d_e: np.ndarray) -> None:
    """Accumulate parameter gradients for a batch given dLoss/dEmbedding."""
    x, h1, h2 = cache["x"], cache["h1"], cache["h2"]
    e_raw, gate, norms, e = cache["e_raw"], cache["gate"], cache["norms"], cache["e"]
    d_e = d_e.copy()
    if np.any(cache["dead"]):
        d_e[cache["dead"]] = 0.0

    w2 = params["embed/w2"].value
    w3 = params["embed/w3"].value
    wa = params["embed/att_w"].value

    # back through L2 normalization
    dot = np.sum(d_e * e, axis=1, keepdims=True)
    d_gated = (d_e - e * dot) / norms[:, None]
    # back through the attention gate (e_raw enters the product twice)
    d_eraw = gate * d_gated
    u = e_raw * d_gated
    d_s = gate * (u - np.sum(u * gate, axis=1, keepdims=True))
    params["embed/att_w"].grad += d_s.T @ e_raw
    params["embed/att_b"].grad += d_s.sum(axis=0)
    d_eraw = d_eraw + d_s @ wa
    # affine+relu stack
    d3 = d_eraw * (e_raw > 0)
    params["embed/w3"].grad += d3.T @ h2
    params["embed/b3"].grad += d3.sum(axis=0)
    d_h2 = (d3 @ w3) * (h2 > 0)
    params["embed/w2"].grad += d_h2.T @ h1
    params["embed/b2"].grad += d_h2.sum(axis=0)
    d_h1 = (d_h2 @ w2) * (h1 > 0)
    params["embed/w1"].grad += d_h1.T @ x
    params["embed/b1"].grad += d_h1.sum(axis=0)


def triplet_loss(d_pos: float, d_neg: float, margin: float) -> float:
    """Hinge on squared distances: max(0, margin + d_pos - d_neg)."""
    return max(0.0, margin + d_pos - d_neg)


def triplet_batch_loss_and_grads(params: ParamSet, anchors, positives, negatives,
                                 margin: float) -> float:
    """Mean triplet loss over the batch; accumulates shared-branch grads."""
    e_a, cache_a = embed_batch(params, anchors, want_cache=True)
    e_p, cache_p = embed_batch(params, positives, want_cache=True)
    e_n, cache_n = embed_batch(params, negatives, want_cache=True)
    diff_p = e_a - e_p
    diff_n = e_a - e_n
    d_pos = np.sum(diff_p ** 2, axis=1)
    d_neg = np.sum(diff_n ** 2, axis=1)
    active = (margin + d_pos - d_neg) > 0
    n = anchors.shape[0]
    loss = float(np.sum(np.maximum(0.0, margin + d_pos - d_neg)) / n)
    scale = active[:, None] / n
    d_ea = 2.0 * (diff_p - diff_n) * scale
    d_ep = -2.0 * diff_p * scale
    d_en = 2.0 * diff_n * scale
    embed_backward(params, cache_a, d_ea)
    embed_backward(params, cache_p, d_ep)
    embed_backward(params, cache_n, d_en)
    return loss


# ---------------------------------------------------------------------------
# Embedding table.
# ---------------------------------------------------------------------------

class EmbeddingTable:
    """Frozen map item_id -> unit embedding, with a dense matrix view."""

    def __init__(self, ids: list[str], matrix: np.ndarray):
        if len(ids) != matrix.shape[0]:
            raise ValueError("ids/matrix length mismatch")
        self.ids = list(ids)
        self.matrix = matrix
        self.index = {item_id: row for row, item_id in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def get(self, item_id: str) -> np.ndarray:
        return self.matrix[self.index[item_id]]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.index

    def subset(self, ids) -> "EmbeddingTable":
        rows = [self.index[i] for i in ids]
        return EmbeddingTable(list(ids), self.matrix[rows].copy())

    def sq_distances(self, query: np.ndarray) -> np.ndarray:
        diff = self.matrix - query[None, :]
        return np.einsum("ij,ij->i", diff, diff)


def compute_embedding_table(params: ParamSet, ds: Dataset, dtype=np.float32) -> EmbeddingTable:
    ids = ds.ids()
    mats = np.stack([ds.load_image(ds.item(i), dtype=dtype).reshape(-1) for i in ids])
    e = embed_batch(params, mats.astype(dtype))
    return EmbeddingTable(ids, e.astype(dtype))


# ---------------------------------------------------------------------------
# Training.
# ---------------------------------------------------------------------------

def train_embedder(ds: Dataset, epochs: int, margin: float, seed: int,
                   lr: float = 0.05, momentum: float = 0.9, batch_size: int = 32,
                   dilate_radius: int = 1, dtype=np.float32):
    """Train the shared-branch embedder on the train split, then freeze the
    table over all items. Returns (params, table, per-epoch loss trace).
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if ds is None or len({it.class_id for it in ds.items}) < 2:
        raise ValueError("need at least 2 classes to form triplets")
    rng = np.random.default_rng(seed)
    dims = EmbedderDims(input=ds.width * ds.height)
    params = init_embedder_params(rng, dims, dtype)
    opt = OptimizerState(lr, momentum)

    train_items = ds.split_items("train")
    sketches = np.stack([full_sketch_raster(ds, it, dilate_radius, dtype).reshape(-1)
                         for it in train_items])
    images = np.stack([ds.load_image(it, dtype).reshape(-1) for it in train_items])

    n = len(train_items)
    trace = []
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            negs = rng.integers(0, n - 1, size=len(idx))
            negs = negs + (negs >= idx)  # uniform over non-matching items
            loss = triplet_batch_loss_and_grads(
                params, sketches[idx], images[idx], images[negs], margin)
            epoch_loss += loss * len(idx)
            sgd_step(params, opt)
        trace.append(epoch_loss / n)
    table = compute_embedding_table(params, ds, dtype)
    return params, table, trace
