"""NDCG and recall metric tests."""

from __future__ import annotations

import itertools
import math

import pytest

from kgcausal.ltr.metrics import dcg_at_k, ndcg_at_k, recall_at_k


def brute_force_ndcg(gains, k):
    """Oracle: IDCG found by maximizing DCG over every permutation."""
    def dcg(order):
        return sum(g / math.log2(rank + 1)
                   for rank, g in enumerate(order[:k], start=1))
    best = max(dcg(list(p)) for p in itertools.permutations(gains))
    if best <= 0:
        return 1.0
    return dcg(list(gains)) / best


class TestNdcg:
    def test_ideal_ordering_is_one(self):
        assert ndcg_at_k([3.0, 2.0, 1.0], 3) == pytest.approx(1.0)
        assert ndcg_at_k([3.0, 2.0, 1.0], 1) == pytest.approx(1.0)

    def test_single_relevant_in_last_of_two(self):
        assert ndcg_at_k([0.0, 1.0], 2) == pytest.approx(1.0 / math.log2(3.0))

    def test_all_zero_gains_count_as_perfect(self):
        assert ndcg_at_k([0.0, 0.0], 2) == 1.0

    def test_matches_brute_force_on_small_lists(self):
        gains_sets = [
            [1.0, 0.0],
            [0.3, 1.8, 0.9],
            [2.0, 2.0, 0.1, 1.0],
        ]
        for gains in gains_sets:
            for perm in itertools.permutations(gains):
                for k in range(1, len(gains) + 1):
                    assert ndcg_at_k(list(perm), k) == pytest.approx(
                        brute_force_ndcg(list(perm), k))

    def test_range(self):
        import random
        rng = random.Random(4)
        for _ in range(100):
            gains = [rng.uniform(0, 2) for _ in range(rng.randint(1, 8))]
            k = rng.randint(1, 8)
            assert 0.0 <= ndcg_at_k(gains, k) <= 1.0 + 1e-12

    def test_k_validation(self):
        with pytest.raises(ValueError):
            ndcg_at_k([1.0], 0)

    def test_dcg_truncates(self):
        assert dcg_at_k([1.0, 1.0, 1.0], 2) == pytest.approx(1.0 + 1.0 / math.log2(3.0))


class TestRecall:
    def test_all_relevant_in_top_k(self):
        assert recall_at_k([True, True, False], 2, 2) == 1.0

    def test_partial(self):
        assert recall_at_k([True, False, True], 2, 2) == 0.5

    def test_zero_relevant_convention(self):
        assert recall_at_k([False, False], 2, 0) == 1.0

    def test_non_decreasing_in_k(self):
        flags = [False, True, False, True, True]
        values = [recall_at_k(flags, k, 3) for k in range(1, 6)]
        assert values == sorted(values)
        assert values[-1] == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            recall_at_k([True], 0, 1)
        with pytest.raises(ValueError):
            recall_at_k([True], 1, -1)
