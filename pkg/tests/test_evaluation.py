import math

import numpy as np
import pytest

from gravel.data import InteractionDataset
from gravel.evaluation import (
    evaluate,
    ndcg_at_k,
    parse_metric_tag,
    rank_topk,
    recall_at_k,
    write_per_user_detail,
)
from gravel.models import ScoreVector

from oracles import brute_evaluate, brute_ndcg, brute_recall, brute_topk


class TestRankTopK:
    def test_basic_ordering(self):
        result = rank_topk(np.array([3.0, 1.0, 2.0]), [], 2)
        assert result.topk_items.tolist() == [0, 2]
        assert result.topk_scores.tolist() == [3.0, 2.0]

    def test_train_item_is_masked(self):
        result = rank_topk(np.array([3.0, 1.0, 2.0]), [0], 2)
        assert result.topk_items.tolist() == [2, 1]

    def test_partial_result_when_candidates_scarce(self):
        result = rank_topk(np.array([3.0, 1.0, 2.0]), [0, 2], 5)
        assert result.topk_items.tolist() == [1]

    def test_ties_break_by_ascending_index(self):
        result = rank_topk(np.array([1.0, 1.0, 1.0, 2.0]), [], 3)
        assert result.topk_items.tolist() == [3, 0, 1]

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n = int(rng.integers(1, 30))
            scores = np.round(rng.normal(size=n), 1)  # rounding forces ties
            train = set(int(i) for i in rng.integers(0, n, size=n // 3))
            k = int(rng.integers(1, 8))
            got = rank_topk(scores, train, k).topk_items.tolist()
            assert got == brute_topk(scores.tolist(), train, k)

    def test_accepts_score_vector(self):
        sv = ScoreVector(user=7, scores=np.array([1.0, 5.0]),
                         branch_mask=np.zeros(2, dtype=bool))
        result = rank_topk(sv, [], 1)
        assert result.user == 7
        assert result.topk_items.tolist() == [1]

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            rank_topk(np.array([1.0]), [], 0)


class TestMetrics:
    def ranked(self, items):
        items = np.asarray(items, dtype=np.int64)
        return type("R", (), {"topk_items": items, "topk_scores": -np.arange(len(items), dtype=float), "user": 0})()

    def test_recall_hand_cases(self):
        assert recall_at_k(self.ranked([0, 1]), {0, 1}) == 1.0
        assert recall_at_k(self.ranked([2, 3]), {0, 1}) == 0.0
        assert recall_at_k(self.ranked([0, 9, 1]), {0, 1}) == 1.0
        assert recall_at_k(self.ranked([0, 9, 8]), {0, 1}) == 0.5

    def test_ndcg_perfect_ranking(self):
        assert ndcg_at_k(self.ranked([4, 5]), {4, 5}, K=2) == 1.0

    def test_ndcg_no_hits(self):
        assert ndcg_at_k(self.ranked([1, 2, 3]), {9}, K=3) == 0.0

    def test_ndcg_hand_value(self):
        # positives {A, B}; top-3 [A, X, B]
        got = ndcg_at_k(self.ranked([0, 9, 1]), {0, 1}, K=3)
        want = (1.0 + 1.0 / math.log2(4)) / (1.0 + 1.0 / math.log2(3))
        assert math.isclose(got, want, rel_tol=1e-12)
        assert abs(got - 0.91972) < 1e-5

    def test_empty_positives_rejected(self):
        with pytest.raises(ValueError):
            recall_at_k(self.ranked([0]), set())
        with pytest.raises(ValueError):
            ndcg_at_k(self.ranked([0]), set())

    def test_bounds_on_random_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(2, 20))
            k = int(rng.integers(1, 10))
            ranked = self.ranked(rng.permutation(n)[:k])
            positives = {int(i) for i in rng.integers(0, n, size=3)}
            r = recall_at_k(ranked, positives)
            nd = ndcg_at_k(ranked, positives, K=k)
            assert 0.0 <= r <= 1.0
            assert 0.0 <= nd <= 1.0

    def test_parse_metric_tag(self):
        assert parse_metric_tag("Recall@20") == ("recall", 20)
        assert parse_metric_tag("nDCG@10") == ("ndcg", 10)
        with pytest.raises(ValueError):
            parse_metric_tag("MAP@5")


def tabular_scorer(rows):
    rows = np.asarray(rows, dtype=np.float64)
    return lambda u: rows[u]


class TestEvaluate:
    def make_dataset(self, num_users, num_items, train, test):
        return InteractionDataset(num_users, num_items, set(train), set(test)).validate()

    def test_oracle_model_scores_one(self):
        ds = self.make_dataset(2, 5, [(0, 0)], [(0, 1), (1, 2), (1, 3)])
        rows = np.zeros((2, 5))
        rows[0, 1] = 1.0
        rows[1, 2] = rows[1, 3] = 1.0
        report = evaluate(tabular_scorer(rows), ds, K=2)
        assert report.recall == 1.0 and report.ndcg == 1.0
        assert report.users_evaluated == 2

    def test_masking_completeness(self):
        rng = np.random.default_rng(2)
        ds = self.make_dataset(4, 12,
                               [(u, i) for u in range(4) for i in range(0, 6)],
                               [(u, i) for u in range(4) for i in (7, 9)])
        rows = rng.normal(size=(4, 12)) + 10.0  # train items score high but must be masked
        train_rows = ds.items_by_user("train")
        for u in range(4):
            result = rank_topk(rows[u], train_rows[u], 5, user=u)
            assert not (set(result.topk_items.tolist()) & set(train_rows[u].tolist()))

    def test_rank_invariance_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(size=30)
        base = rank_topk(scores, [2, 4], 10)
        for transform in (lambda s: 3.0 * s + 7.0, np.tanh, lambda s: s ** 3):
            other = rank_topk(transform(scores), [2, 4], 10)
            assert base.topk_items.tolist() == other.topk_items.tolist()

    def test_matches_brute_force_small_instances(self):
        rng = np.random.default_rng(4)
        for _ in range(300):
            n_users = int(rng.integers(1, 7))
            n_items = int(rng.integers(2, 11))
            train, test = set(), set()
            for u in range(n_users):
                for i in range(n_items):
                    r = rng.random()
                    if r < 0.25:
                        train.add((u, i))
                    elif r < 0.45:
                        test.add((u, i))
            if not any(True for _ in test):
                continue
            ds = self.make_dataset(n_users, n_items, train, test)
            rows = rng.normal(size=(n_users, n_items))
            k = int(rng.integers(1, 7))
            report = evaluate(tabular_scorer(rows), ds, K=k)
            want_recall, want_ndcg = brute_evaluate(
                rows, {u: r.tolist() for u, r in enumerate(ds.items_by_user("train"))},
                ds.positives_by_user("test"), k)
            assert abs(report.recall - want_recall) < 1e-12
            assert abs(report.ndcg - want_ndcg) < 1e-12

    def test_uniform_random_scorer_matches_analytic_expectation(self):
        # with no train masking, E[recall@K] of a random scorer is K / |I|
        n_items, k, n_seeds = 300, 20, 2000
        ds = self.make_dataset(5, n_items, [],
                               [(u, i) for u in range(5) for i in (2 * u, 50 + u, 200 + u)])
        total, count = 0.0, 0
        for seed in range(n_seeds):
            rng = np.random.default_rng(seed)
            rows = rng.random((5, n_items))
            report = evaluate(tabular_scorer(rows), ds, K=k)
            total += report.recall
            count += 1
        expectation = k / n_items
        se = math.sqrt(expectation * (1 - expectation) / (count * 5 * 3))
        assert abs(total / count - expectation) < 5 * se

    def test_no_evaluable_users_is_an_error(self):
        ds = self.make_dataset(2, 3, [(0, 0)], [])
        with pytest.raises(ValueError, match="no users"):
            evaluate(tabular_scorer(np.zeros((2, 3))), ds, K=2)

    def test_positives_override_for_validation_split(self):
        ds = self.make_dataset(2, 4, [(0, 0)], [(0, 1)])
        rows = np.zeros((2, 4))
        rows[1, 3] = 1.0
        report = evaluate(tabular_scorer(rows), ds, K=1, positives={1: {3}})
        assert report.recall == 1.0
        assert report.users_evaluated == 1

    def test_per_user_detail_dump(self, tmp_path):
        ds = self.make_dataset(2, 5, [(0, 0)], [(0, 1), (1, 2)])
        rows = np.array([[0.0, 5.0, 0.0, 0.0, 0.0],
                         [9.0, 8.0, 0.0, 7.0, 6.0]])
        report = evaluate(tabular_scorer(rows), ds, K=2, per_user=True)
        path = tmp_path / "detail.tsv"
        write_per_user_detail(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "user\trecall\tndcg\thits\tnum_positives"
        assert lines[1].startswith("0\t1.0\t")
        assert lines[2].startswith("1\t0.0\t")

    def test_canonical_user_order_in_per_user_rows(self):
        ds = self.make_dataset(4, 4, [], [(3, 0), (1, 1), (2, 2)])
        report = evaluate(tabular_scorer(np.eye(4)), ds, K=2, per_user=True)
        assert [row[0] for row in report.per_user] == [1, 2, 3]
