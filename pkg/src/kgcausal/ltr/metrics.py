"""Ranking quality metrics."""

from __future__ import annotations

import math
from typing import Sequence


def dcg_at_k(gains: Sequence[float], k: int) -> float:
    """Discounted cumulative gain of the first k entries (discount
    1/log2(rank+1), graded gains used as-is)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return sum(g / math.log2(rank + 1)
               for rank, g in enumerate(gains[:k], start=1))


def ndcg_at_k(ranked_gains: Sequence[float], k: int) -> float:
    """DCG of the given order, normalized by the ideal (descending) order.

    A list whose ideal DCG is zero (no positive gain anywhere) counts as
    perfectly ranked.
    """
    ideal = dcg_at_k(sorted(ranked_gains, reverse=True), k)
    if ideal <= 0.0:
        return 1.0
    return dcg_at_k(ranked_gains, k) / ideal


def recall_at_k(ranked_relevant: Sequence[bool], k: int, total_relevant: int) -> float:
    """Fraction of all relevant items that appear in the top k.

    By convention 1.0 when there is nothing relevant to find.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if total_relevant < 0:
        raise ValueError("total_relevant must be >= 0")
    if total_relevant == 0:
        return 1.0
    hits = sum(1 for flag in ranked_relevant[:k] if flag)
    return hits / total_relevant
