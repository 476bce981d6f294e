"""Independent brute-force oracles used across test modules.

Everything here is deliberately written from scratch with plain Python data
structures (dict adjacency, list sorts, math.log2) so it shares no code path
with the package under test.
"""

import math


def adjacency_from_edges(edges):
    """{('u', u): set of ('i', i), ...} bidirectional adjacency."""
    adj = {}
    for u, i in edges:
        adj.setdefault(("u", u), set()).add(("i", i))
        adj.setdefault(("i", i), set()).add(("u", u))
    return adj


def bfs_khop(edges, user, k):
    """Exact BFS from ('u', user): returns (user set, item set), seed excluded."""
    adj = adjacency_from_edges(edges)
    seed = ("u", user)
    visited = {seed}
    frontier = [seed]
    for _ in range(k):
        nxt = []
        for node in frontier:
            for nb in adj.get(node, ()):
                if nb not in visited:
                    visited.add(nb)
                    nxt.append(nb)
        frontier = nxt
    users = {n[1] for n in visited if n[0] == "u" and n != seed}
    items = {n[1] for n in visited if n[0] == "i"}
    return users, items


def brute_locality(edges, test_positives, k):
    """Mean |k-hop items of u intersect positives(u)| / |positives(u)|."""
    fractions = []
    for u in sorted(test_positives):
        pos = set(test_positives[u])
        if not pos:
            continue
        _, items = bfs_khop(edges, u, k)
        fractions.append(len(items & pos) / len(pos))
    if not fractions:
        raise ValueError("no positives")
    return sum(fractions) / len(fractions)


def brute_topk(scores, train_items, k):
    """Full sort by (-score, index) after dropping train items."""
    train = set(train_items)
    ranked = sorted(
        (i for i in range(len(scores)) if i not in train),
        key=lambda i: (-scores[i], i),
    )
    return ranked[:k]


def brute_recall(topk, positives):
    positives = set(positives)
    return len([i for i in topk if i in positives]) / len(positives)


def brute_ndcg(topk, positives, k):
    positives = set(positives)
    dcg = 0.0
    for rank, item in enumerate(topk, start=1):
        if item in positives:
            dcg += 1.0 / math.log2(rank + 1)
    ideal = sum(1.0 / math.log2(r + 1) for r in range(1, min(k, len(positives)) + 1))
    return dcg / ideal if ideal else 0.0


def brute_evaluate(score_rows, train_by_user, positives_by_user, k):
    """Mean recall/ndcg over users with positives, ascending user order."""
    recalls, ndcgs = [], []
    for u in sorted(positives_by_user):
        pos = positives_by_user[u]
        if not pos:
            continue
        topk = brute_topk(score_rows[u], train_by_user.get(u, ()), k)
        recalls.append(brute_recall(topk, pos))
        ndcgs.append(brute_ndcg(topk, pos, k))
    return sum(recalls) / len(recalls), sum(ndcgs) / len(ndcgs)


def random_bipartite_edges(rng, max_users, max_items, density=0.3):
    """A random edge set with at least one edge."""
    n_users = int(rng.integers(1, max_users + 1))
    n_items = int(rng.integers(1, max_items + 1))
    edges = set()
    for u in range(n_users):
        for i in range(n_items):
            if rng.random() < density:
                edges.add((u, i))
    if not edges:
        edges.add((int(rng.integers(n_users)), int(rng.integers(n_items))))
    return n_users, n_items, edges
