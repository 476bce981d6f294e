"""Immutable bipartite graph in CSR form, k-hop neighborhoods, fanout sampling.

The graph stores both adjacency directions (user->items and item->users) as
CSR offset/index arrays with neighbor lists sorted ascending, which is the
canonical form used everywhere for reproducibility. Instances are frozen and
their arrays are marked read-only, so they are safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GraphConstructionError",
    "BipartiteGraph",
    "build_graph",
    "Neighborhood",
    "khop_neighborhood",
    "SampledSubgraph",
    "sample_subgraph",
    "locality_score",
    "dataset_stats",
    "stats_from_counts",
]

_MASK64 = (1 << 64) - 1


class GraphConstructionError(ValueError):
    pass


@dataclass(frozen=True)
class BipartiteGraph:
    """CSR adjacency in both directions over a user/item bipartition."""

    num_users: int
    num_items: int
    user_ptr: np.ndarray   # int64 [num_users + 1]
    user_nbr: np.ndarray   # item indices, ascending within each user
    item_ptr: np.ndarray   # int64 [num_items + 1]
    item_nbr: np.ndarray   # user indices, ascending within each item

    @property
    def num_edges(self):
        return int(self.user_nbr.shape[0])

    def user_neighbors(self, user):
        return self.user_nbr[self.user_ptr[user]:self.user_ptr[user + 1]]

    def item_neighbors(self, item):
        return self.item_nbr[self.item_ptr[item]:self.item_ptr[item + 1]]

    def user_degree(self, user):
        return int(self.user_ptr[user + 1] - self.user_ptr[user])

    def item_degree(self, item):
        return int(self.item_ptr[item + 1] - self.item_ptr[item])

    def has_edge(self, user, item):
        nbrs = self.user_neighbors(user)
        pos = np.searchsorted(nbrs, item)
        return bool(pos < len(nbrs) and nbrs[pos] == item)

    def max_degree(self):
        """Largest degree on either side (0 for an edgeless graph)."""
        best = 0
        if self.num_users:
            best = max(best, int(np.max(np.diff(self.user_ptr))))
        if self.num_items:
            best = max(best, int(np.max(np.diff(self.item_ptr))))
        return best


def _csr_from_pairs(first, second, n_first):
    counts = np.bincount(first, minlength=n_first)
    ptr = np.zeros(n_first + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr, second.astype(np.int64, copy=True)


def build_graph(dataset, split="train"):
    """Build the canonical CSR graph over one edge split of a dataset.

    Duplicate pairs collapse to a single edge. Raises
    GraphConstructionError naming the offending pair when an index is out
    of range.
    """
    if split not in ("train", "test", "train+test"):
        raise ValueError(f"unknown split {split!r}")
    num_users, num_items = dataset.num_users, dataset.num_items
    edges = dataset._edges(split)

    for u, i in edges:
        if not (0 <= u < num_users and 0 <= i < num_items):
            raise GraphConstructionError(
                f"edge ({u}, {i}) out of range for {num_users} users x {num_items} items"
            )

    if edges:
        arr = np.array(sorted(edges), dtype=np.int64)
        # encode as u * num_items + i: unique() both dedups and sorts (u, i)
        keys = np.unique(arr[:, 0] * num_items + arr[:, 1])
        users = keys // num_items
        items = keys % num_items
    else:
        users = np.zeros(0, dtype=np.int64)
        items = np.zeros(0, dtype=np.int64)

    user_ptr, user_nbr = _csr_from_pairs(users, items, num_users)
    order = np.lexsort((users, items))  # sort by (item, user) for the transpose
    item_ptr, item_nbr = _csr_from_pairs(items[order], users[order], num_items)

    for a in (user_ptr, user_nbr, item_ptr, item_nbr):
        a.flags.writeable = False
    return BipartiteGraph(num_users, num_items, user_ptr, user_nbr, item_ptr, item_nbr)


# ----------------------------------------------------------------------
# exact k-hop neighborhoods
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Neighborhood:
    """Nodes within k hops of a seed user, grouped by side; seed excluded."""

    users: frozenset
    items: frozenset


def khop_neighborhood(graph, user, k):
    """Exact BFS neighborhood of `user` over hops 1..k.

    Odd hops land on items, even hops on users; the seed itself (hop 0) is
    excluded from the result.
    """
    if not 0 <= user < graph.num_users:
        raise ValueError(f"user {user} out of range")
    if k < 0:
        raise ValueError("k must be >= 0")
    seen_users = {int(user)}
    seen_items: set[int] = set()
    frontier = np.array([user], dtype=np.int64)
    on_user_side = True
    for _ in range(k):
        if frontier.size == 0:
            break
        if on_user_side:
            chunks = [graph.user_neighbors(u) for u in frontier]
            nxt = np.unique(np.concatenate(chunks)) if chunks else np.zeros(0, np.int64)
            fresh = [i for i in nxt.tolist() if i not in seen_items]
            seen_items.update(fresh)
        else:
            chunks = [graph.item_neighbors(i) for i in frontier]
            nxt = np.unique(np.concatenate(chunks)) if chunks else np.zeros(0, np.int64)
            fresh = [u for u in nxt.tolist() if u not in seen_users]
            seen_users.update(fresh)
        frontier = np.array(fresh, dtype=np.int64)
        on_user_side = not on_user_side
    seen_users.discard(int(user))
    return Neighborhood(users=frozenset(seen_users), items=frozenset(seen_items))


# ----------------------------------------------------------------------
# fanout-limited sampled subgraphs
# ----------------------------------------------------------------------

@dataclass
class SampledSubgraph:
    """Fanout-limited k-hop neighborhood around a seed user.

    Nodes are identified globally by an offset encoding (users occupy
    [0, num_users), item i maps to num_users + i) and locally by dense
    indices assigned in discovery order; the seed is always local index 0.
    `local_edges` holds (user_local, item_local) pairs, lexicographically
    sorted with duplicates removed.
    """

    seed_user: int
    hops: int
    graph_num_users: int
    nodes_per_hop: list
    local_edges: np.ndarray
    local_to_global: np.ndarray
    global_to_local: dict
    contained_items: np.ndarray        # global item indices, ascending
    contained_item_locals: np.ndarray  # local rows aligned with contained_items
    user_locals: np.ndarray
    user_globals: np.ndarray           # user indices (not offset-encoded)
    item_locals: np.ndarray
    item_globals: np.ndarray           # item indices (not offset-encoded)

    @property
    def n_local(self):
        return int(self.local_to_global.shape[0])

    @property
    def seed_local(self):
        return 0

    def item_local(self, item):
        return self.global_to_local[self.graph_num_users + item]


def sample_subgraph(graph, user, fanouts, rng_seed):
    """Sample a k-hop subgraph with per-hop neighbor caps.

    At hop h every frontier node keeps at most fanouts[h] of its neighbors,
    chosen uniformly without replacement; neighbors already present in the
    subgraph still contribute their edge but are not re-expanded. The result
    is a deterministic function of (graph, user, fanouts, rng_seed): the RNG
    is seeded from (rng_seed, user), so per-user calls are independent of
    scheduling order.
    """
    fanouts = tuple(int(f) for f in fanouts)
    if len(fanouts) == 0:
        raise ValueError("fanouts must be non-empty")
    if any(f < 1 for f in fanouts):
        raise ValueError("every fanout cap must be >= 1")
    if not 0 <= user < graph.num_users:
        raise ValueError(f"user {user} out of range")

    rng = np.random.default_rng([int(rng_seed) & _MASK64, int(user)])
    num_users = graph.num_users

    local_to_global = [int(user)]
    global_to_local = {int(user): 0}
    nodes_per_hop = [frozenset({int(user)})]
    edges: set[tuple[int, int]] = set()
    frontier = [int(user)]  # offset-encoded, sorted

    for h, cap in enumerate(fanouts):
        expanding_users = (h % 2 == 0)
        discovered = []
        for node in frontier:
            if expanding_users:
                nbrs = graph.user_neighbors(node)
            else:
                nbrs = graph.item_neighbors(node - num_users)
            if len(nbrs) > cap:
                picked = rng.choice(len(nbrs), size=cap, replace=False)
                chosen = np.sort(nbrs[picked])
            else:
                chosen = nbrs
            node_local = global_to_local[node]
            for nb in chosen.tolist():
                nb_global = nb + num_users if expanding_users else nb
                nb_local = global_to_local.get(nb_global)
                if nb_local is None:
                    nb_local = len(local_to_global)
                    local_to_global.append(nb_global)
                    global_to_local[nb_global] = nb_local
                    discovered.append(nb_global)
                if expanding_users:
                    edges.add((node_local, nb_local))
                else:
                    edges.add((nb_local, node_local))
        nodes_per_hop.append(frozenset(discovered))
        frontier = sorted(discovered)

    l2g = np.array(local_to_global, dtype=np.int64)
    is_item = l2g >= num_users
    item_locals = np.flatnonzero(is_item)
    item_globals = l2g[item_locals] - num_users
    user_locals = np.flatnonzero(~is_item)
    user_globals = l2g[user_locals]
    item_order = np.argsort(item_globals)
    contained_items = item_globals[item_order]
    contained_item_locals = item_locals[item_order]
    if edges:
        edge_arr = np.array(sorted(edges), dtype=np.int64)
    else:
        edge_arr = np.zeros((0, 2), dtype=np.int64)

    return SampledSubgraph(
        seed_user=int(user),
        hops=len(fanouts),
        graph_num_users=num_users,
        nodes_per_hop=nodes_per_hop,
        local_edges=edge_arr,
        local_to_global=l2g,
        global_to_local=global_to_local,
        contained_items=contained_items,
        contained_item_locals=contained_item_locals,
        user_locals=user_locals,
        user_globals=user_globals,
        item_locals=item_locals,
        item_globals=item_globals,
    )


# ----------------------------------------------------------------------
# diagnostics
# ----------------------------------------------------------------------

def locality_score(graph, test_positives, k):
    """Mean fraction of each user's hidden positives within k train hops.

    Uses exact (unsampled) neighborhoods. Users with no positives are
    excluded from the average; an entirely empty test set is an error rather
    than a silent zero.
    """
    users = sorted(u for u, pos in test_positives.items() if len(pos) > 0)
    if not users:
        raise ValueError("locality score undefined: no user has test positives")
    fractions = []
    for u in users:
        if not 0 <= u < graph.num_users:
            raise ValueError(f"user {u} out of range")
        hood = khop_neighborhood(graph, u, k)
        pos = set(test_positives[u])
        fractions.append(len(hood.items & pos) / len(pos))
    return float(np.mean(fractions))


def stats_from_counts(num_users, num_items, interactions):
    """Summary statistics from raw counts; sparsity rounded to 4 decimals."""
    if num_users <= 0 or num_items <= 0:
        raise ValueError("need at least one user and one item for statistics")
    sparsity = round(1.0 - interactions / (num_users * num_items), 4)
    return {
        "users": int(num_users),
        "items": int(num_items),
        "interactions": int(interactions),
        "sparsity": sparsity,
    }


def dataset_stats(dataset):
    """Summary statistics of a dataset, counting train+test interactions."""
    return stats_from_counts(dataset.num_users, dataset.num_items, dataset.interactions())
