"""Retrieval evaluation: acc@q, area under inverse rank, ranking percentile.

Ranks use the same inclusive counting rule as the reward score (ties and
the target itself count), so rank_of == round(1/score) always. AUIR is the
mean of 1/rank across completion stages, percent-scaled.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .embedder import EmbeddingTable
from .reward import rank_of_query


@dataclass
class RetrievalResult:
    item_id: str
    stage_ranks: list[int]
    gallery_size: int

    def __post_init__(self):
        for r in self.stage_ranks:
            if not 1 <= r <= self.gallery_size:
                raise ValueError(f"rank {r} out of [1, {self.gallery_size}]")


def rank_of(a: np.ndarray, target_id: str, gallery: EmbeddingTable) -> int:
    return rank_of_query(a, target_id, gallery)


def acc_at_q(results: list[RetrievalResult], q: int) -> float:
    """Fraction of items whose complete-sketch (final stage) rank is <= q."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if not results:
        return 0.0
    hits = sum(1 for r in results if r.stage_ranks[-1] <= q)
    return hits / len(results)


def auir(stage_ranks) -> float:
    """Mean of 1/rank over stages, x100 (percent scale)."""
    ranks = np.asarray(stage_ranks, dtype=np.float64)
    return float(100.0 * np.mean(1.0 / ranks))


def dataset_auir(results: list[RetrievalResult]) -> float:
    if not results:
        return 0.0
    return float(np.mean([auir(r.stage_ranks) for r in results]))


def ranking_percentile(a: np.ndarray, target_id: str, gallery: EmbeddingTable) -> float:
    """(N - inclusive rank count)/N; 0 when the match ranks last."""
    n = len(gallery)
    return (n - rank_of_query(a, target_id, gallery)) / n


def percentile_from_rank(rank: int, n: int) -> float:
    return (n - rank) / n


def summarize(results: list[RetrievalResult]) -> dict:
    mean_pct = 0.0
    if results:
        mean_pct = float(np.mean([
            np.mean([percentile_from_rank(r, res.gallery_size) for r in res.stage_ranks])
            for res in results]))
    return {
        "acc@1": acc_at_q(results, 1),
        "acc@5": acc_at_q(results, 5),
        "acc@10": acc_at_q(results, 10),
        "auir": dataset_auir(results),
        "mean_percentile": mean_pct,
    }


def emit_csv(results: list[RetrievalResult], path) -> None:
    """One row per (item, stage), stable item-then-stage order, floats at six
    decimals so re-emission is byte-identical."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("item_id,stage,completion_degree,rank,inv_rank,percentile\n")
            for res in results:
                s_total = len(res.stage_ranks)
                for s, rank in enumerate(res.stage_ranks, start=1):
                    completion = s / s_total
                    fh.write(f"{res.item_id},{s},{completion:.6f},{rank},"
                             f"{1.0 / rank:.6f},"
                             f"{percentile_from_rank(rank, res.gallery_size):.6f}\n")
    except OSError as exc:
        raise OSError(f"failed writing results CSV to {path}: {exc}") from exc


def emit_summary_json(results: list[RetrievalResult], path) -> dict:
    summary = summarize(results)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
