import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dscan.errors import InputError
from dscan.metrics import (
    ContingencyTable,
    clustering_accuracy,
    hungarian_assign,
    metrics_report,
    nmi,
    nmi_from_counts,
)
from oracles import brute_force_ca, ca_from_table, entropy_nmi, nmi_from_table

RNG = np.random.default_rng(77)


class TestContingencyTable:
    def test_marginal_identities(self):
        pred = RNG.integers(0, 4, size=50)
        true = RNG.integers(0, 3, size=50)
        t = ContingencyTable.from_labels(pred, true)
        np.testing.assert_array_equal(t.cluster_sums, t.counts.sum(axis=1))
        np.testing.assert_array_equal(t.class_sums, t.counts.sum(axis=0))
        assert t.total == t.counts.sum() == 50

    def test_rejects_mismatched_lengths(self):
        with pytest.raises(InputError):
            ContingencyTable.from_labels([1, 2], [1, 2, 3])

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            ContingencyTable.from_labels([], [])


class TestNmi:
    def test_perfect_match_is_one(self):
        labels = RNG.integers(0, 5, size=80)
        if len(np.unique(labels)) < 2:
            labels[0] = 99
        assert nmi(labels, labels) == pytest.approx(1.0, abs=1e-12)

    def test_relabeled_perfect_match_is_one(self):
        true = np.array([1, 1, 2, 2, 3, 3])
        pred = np.array([9, 9, 7, 7, 8, 8])
        assert nmi(pred, true) == pytest.approx(1.0, abs=1e-12)

    def test_independent_labelings_give_zero(self):
        assert nmi([1, 2, 1, 2], [1, 1, 2, 2]) == pytest.approx(0.0, abs=1e-12)

    def test_matches_entropy_oracle(self):
        pred = [1, 1, 1, 2]
        true = [1, 1, 2, 2]
        assert nmi(pred, true) == pytest.approx(entropy_nmi(pred, true), abs=1e-9)

    def test_random_cases_match_entropy_oracle(self):
        for _ in range(50):
            n = RNG.integers(2, 30)
            pred = RNG.integers(0, 4, size=n)
            true = RNG.integers(0, 4, size=n)
            assert nmi(pred, true) == pytest.approx(entropy_nmi(pred, true), abs=1e-9)

    def test_single_cluster_convention(self):
        # degenerate: one predicted cluster carries no information
        assert nmi([1, 1, 1, 1], [1, 1, 2, 2]) == 0.0

    def test_bounded(self):
        for _ in range(20):
            pred = RNG.integers(0, 3, size=12)
            true = RNG.integers(0, 3, size=12)
            assert 0.0 <= nmi(pred, true) <= 1.0


class TestHungarian:
    def test_identity_favoring_cost(self):
        cost = 1.0 - np.eye(4)
        perm = hungarian_assign(cost)
        np.testing.assert_array_equal(perm, np.arange(4))
        assert cost[np.arange(4), perm].sum() == 0.0

    @pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
    def test_matches_exhaustive_search(self, k):
        for _ in range(5):
            cost = RNG.integers(0, 20, size=(k, k)).astype(float)
            perm = hungarian_assign(cost)
            best = min(sum(cost[i, p[i]] for i in range(k))
                       for p in itertools.permutations(range(k)))
            assert cost[np.arange(k), perm].sum() == pytest.approx(best)

    def test_constant_matrix_cost(self):
        cost = np.full((4, 4), 2.5)
        perm = hungarian_assign(cost)
        assert sorted(perm.tolist()) == [0, 1, 2, 3]
        assert cost[np.arange(4), perm].sum() == pytest.approx(10.0)

    def test_non_square_rejected(self):
        with pytest.raises(InputError):
            hungarian_assign(np.zeros((2, 3)))


class TestClusteringAccuracy:
    def test_permutation_invariance(self):
        assert clustering_accuracy([1, 1, 2, 2], [2, 2, 1, 1]) == pytest.approx(1.0)

    def test_all_ones_prediction(self):
        assert clustering_accuracy([1, 1, 1, 1], [1, 1, 2, 2]) == pytest.approx(0.5)

    def test_single_error(self):
        assert clustering_accuracy([1, 2, 2, 2], [1, 1, 2, 2]) == pytest.approx(0.75)

    def test_matches_brute_force_on_random_cases(self):
        for _ in range(50):
            n = RNG.integers(2, 12)
            pred = RNG.integers(0, 3, size=n)
            true = RNG.integers(0, 3, size=n)
            assert clustering_accuracy(pred, true) == pytest.approx(
                brute_force_ca(pred, true), abs=1e-12)

    def test_unequal_cluster_counts(self):
        pred = [0, 0, 1, 1, 2, 2]
        true = [0, 0, 1, 1, 1, 1]
        assert clustering_accuracy(pred, true) == pytest.approx(
            brute_force_ca(pred, true), abs=1e-12)

    def test_self_accuracy_is_one(self):
        labels = RNG.integers(0, 4, size=30)
        labels[0], labels[1] = 0, 1  # ensure >= 2 distinct
        assert clustering_accuracy(labels, labels) == pytest.approx(1.0)


def test_exhaustive_small_tables_match_oracles():
    """Every contingency table reachable from label vectors of length <= 8
    over <= 3 clusters/classes; metrics factor through the table."""
    checked = 0
    for n in range(1, 9):
        for table in _tables_summing_to(n, rows=3, cols=3):
            counts = np.array(table).reshape(3, 3)
            if counts.sum() == 0:
                continue
            assert nmi_from_counts(counts) == pytest.approx(
                nmi_from_table(counts), abs=1e-9)
            pred, true = _labels_from_table(counts)
            assert clustering_accuracy(pred, true) == pytest.approx(
                ca_from_table(counts), abs=1e-12)
            checked += 1
    assert checked > 20000


def _tables_summing_to(total, rows, cols):
    """All non-negative integer (rows*cols)-tuples with the given sum."""
    cells = rows * cols

    def rec(remaining, cells_left):
        if cells_left == 1:
            yield (remaining,)
            return
        for v in range(remaining + 1):
            for rest in rec(remaining - v, cells_left - 1):
                yield (v,) + rest

    yield from rec(total, cells)


def _labels_from_table(counts):
    pred, true = [], []
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            pred.extend([i] * counts[i, j])
            true.extend([j] * counts[i, j])
    return np.array(pred), np.array(true)


def test_metrics_report_fields():
    report = metrics_report([0, 0, 1, 1], [5, 5, 9, 9])
    assert report["nmi"] == pytest.approx(1.0)
    assert report["ca"] == pytest.approx(1.0)
    assert report["n_clips"] == 4
    assert report["mapping"] == {"0": "5", "1": "9"}
    assert report["contingency_table"] == [[2, 0], [0, 2]]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=2, max_size=20), st.integers(0, 10 ** 6))
def test_relabeling_invariance_property(true, seed):
    rng = np.random.default_rng(seed)
    true = np.array(true)
    pred = rng.integers(0, 3, size=len(true))
    # rename predicted clusters and true classes with random injections
    pred_map = {v: f"c{v + 10}" for v in np.unique(pred)}
    true_map = {v: f"g{v * 7}" for v in np.unique(true)}
    pred2 = np.array([pred_map[v] for v in pred])
    true2 = np.array([true_map[v] for v in true])
    assert nmi(pred, true) == pytest.approx(nmi(pred2, true2), abs=1e-12)
    assert clustering_accuracy(pred, true) == pytest.approx(
        clustering_accuracy(pred2, true2), abs=1e-12)
