"""Masked top-K ranking and Recall@K / nDCG@K.

Ranking masks the user's train items before selection and breaks score ties
by ascending item index, so results are bit-reproducible. Metric averages
accumulate in ascending user order (canonical reduction order).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RankingResult",
    "MetricReport",
    "rank_topk",
    "recall_at_k",
    "ndcg_at_k",
    "evaluate",
    "parse_metric_tag",
    "write_per_user_detail",
]


@dataclass
class RankingResult:
    """Top-K items for one user: scores descending, ties by ascending index."""

    user: int
    topk_items: np.ndarray
    topk_scores: np.ndarray


@dataclass
class MetricReport:
    cutoff: int
    recall: float
    ndcg: float
    users_evaluated: int
    per_user: list | None = None


def parse_metric_tag(tag):
    """Parse e.g. 'Recall@20' -> ('recall', 20); accepts Recall and nDCG."""
    m = re.fullmatch(r"(Recall|nDCG)@(\d+)", tag)
    if not m:
        raise ValueError(f"unknown metric tag {tag!r} (expected Recall@K or nDCG@K)")
    return m.group(1).lower(), int(m.group(2))


def _raw_scores(scores):
    # accept either a bare array or a ScoreVector-like object
    arr = getattr(scores, "scores", scores)
    user = getattr(scores, "user", None)
    return np.asarray(arr, dtype=np.float64), user


def rank_topk(scores, train_items, K, user=None):
    """Top-K unmasked items by (score descending, item index ascending).

    The user's train items are removed from contention entirely; if fewer
    than K unmasked items exist the result is partial.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    arr, sv_user = _raw_scores(scores)
    if user is None:
        user = sv_user if sv_user is not None else -1
    eligible = np.ones(arr.shape[0], dtype=bool)
    train_items = np.asarray(sorted(train_items), dtype=np.int64)
    if train_items.size:
        eligible[train_items] = False
    candidates = np.flatnonzero(eligible)
    order = np.argsort(-arr[candidates], kind="stable")  # stable keeps index ties ascending
    top = candidates[order[:K]]
    return RankingResult(user=int(user), topk_items=top.astype(np.int64),
                         topk_scores=arr[top])


def recall_at_k(result, positives):
    """|top-K intersect positives| / |positives|."""
    positives = set(positives)
    if not positives:
        raise ValueError("recall undefined for empty positives")
    hits = sum(1 for i in result.topk_items.tolist() if i in positives)
    return hits / len(positives)


def ndcg_at_k(result, positives, K=None):
    """Binary-relevance nDCG with 1/log2(rank+1) discount, ranks from 1.

    The ideal DCG places min(K, |positives|) hits at the top; K defaults to
    the length of the ranked list.
    """
    positives = set(positives)
    if not positives:
        raise ValueError("ndcg undefined for empty positives")
    if K is None:
        K = len(result.topk_items)
    dcg = 0.0
    for rank, item in enumerate(result.topk_items.tolist(), start=1):
        if item in positives:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = sum(1.0 / math.log2(r + 1) for r in range(1, min(K, len(positives)) + 1))
    return dcg / ideal if ideal > 0 else 0.0


def evaluate(score_fn, dataset, K=20, positives=None, per_user=False):
    """Masked top-K evaluation over all users with non-empty positives.

    `score_fn(user)` must return scores for every item (array or
    ScoreVector). Positives default to the dataset's test split; pass a
    {user: item set} mapping to evaluate another split. Users are processed
    in ascending index order and both metrics are averaged with equal
    per-user weight.
    """
    if positives is None:
        positives = dataset.positives_by_user("test")
    train_rows = dataset.items_by_user("train")
    users = sorted(u for u, pos in positives.items() if len(pos) > 0)
    if not users:
        raise ValueError("no users with positives to evaluate")

    recalls, ndcgs, detail = [], [], []
    for u in users:
        result = rank_topk(score_fn(u), train_rows[u], K, user=u)
        pos = positives[u]
        r = recall_at_k(result, pos)
        n = ndcg_at_k(result, pos, K=K)
        recalls.append(r)
        ndcgs.append(n)
        if per_user:
            hits = sum(1 for i in result.topk_items.tolist() if i in pos)
            detail.append((u, r, n, hits, len(pos)))
    return MetricReport(
        cutoff=int(K),
        recall=float(np.mean(recalls)),
        ndcg=float(np.mean(ndcgs)),
        users_evaluated=len(users),
        per_user=detail if per_user else None,
    )


def write_per_user_detail(report, path):
    """Optional per-user dump: user, recall, ndcg, hits, num_positives."""
    if report.per_user is None:
        raise ValueError("report was built without per_user detail")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user\trecall\tndcg\thits\tnum_positives\n")
        for u, r, n, hits, npos in report.per_user:
            fh.write(f"{u}\t{r!r}\t{n!r}\t{hits}\t{npos}\n")
