"""Scoring models: the hybrid pair-wise / two-tower GNN scorer and baselines.

The hybrid scorer routes every candidate item through one of two branches:
items inside the user's sampled k-hop subgraph get a context-dependent
pair score (dot product of GNN representations plus a learned per-user
offset), all other items get a two-tower score against a static item matrix
Q. The three baselines (matrix-factorization BPR, linear embedding
propagation, a training-free item-item filter) are deliberately simplified
stand-ins that share the same scoring interface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    ParamTensor,
    add,
    affine,
    compose_rows,
    gather_elems,
    gather_rows,
    matvec,
    message_pass_layer,
    pick_row,
    put_1d,
    reshape,
    rowwise_dot,
    scale,
    weighted_scatter_rows,
)
from .graph import sample_subgraph

__all__ = [
    "ScoreVector",
    "ContextGNNParams",
    "init_contextgnn_params",
    "gnn_forward",
    "pair_score",
    "tower_score",
    "fused_scores",
    "ContextGNN",
    "MatrixFactorizationBPR",
    "mf_bpr_score",
    "LightGCNScorer",
    "lightgcn_propagate",
    "ItemCooccurrenceFilter",
    "item_filter_score",
    "mix_seed",
]

_MASK64 = (1 << 64) - 1


def mix_seed(*parts):
    """Deterministically mix integers into one 64-bit seed (platform stable)."""
    entropy = [int(p) & _MASK64 for p in parts]
    return int(np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint64)[0])


def _as_tensor(x):
    return x if isinstance(x, ParamTensor) else ParamTensor(np.asarray(x, dtype=np.float64))


@dataclass
class ScoreVector:
    """Scores for every item for one user, with per-item branch routing.

    branch_mask[i] is True exactly when item i was scored by the pair-wise
    branch (i.e. it appeared in the scoring subgraph); False means the
    two-tower branch.
    """

    user: int
    scores: np.ndarray
    branch_mask: np.ndarray


@dataclass
class ContextGNNParams:
    """All learnable tensors of the hybrid scorer.

    gnn_layers holds one weight matrix per hop; Q is the static item matrix
    of the two-tower branch; mlp_theta is an affine stack (d -> d -> 1, relu
    between) producing the per-user scalar offset added to pair scores.
    """

    user_emb: ParamTensor
    item_emb: ParamTensor
    gnn_layers: list
    Q: ParamTensor
    mlp_theta: list
    d: int

    def all_tensors(self):
        flat = [self.user_emb, self.item_emb, *self.gnn_layers, self.Q]
        for W, b in self.mlp_theta:
            flat.extend([W, b])
        return flat

    def named_tensors(self):
        named = {"user_emb": self.user_emb, "item_emb": self.item_emb}
        for j, W in enumerate(self.gnn_layers):
            named[f"gnn.{j}.W"] = W
        named["Q"] = self.Q
        for j, (W, b) in enumerate(self.mlp_theta):
            named[f"mlp.{j}.W"] = W
            named[f"mlp.{j}.b"] = b
        return named

    def validate(self):
        d = self.d
        if self.user_emb.shape[1] != d or self.item_emb.shape[1] != d:
            raise ValueError("embedding width differs from d")
        if self.Q.shape != (self.item_emb.shape[0], d):
            raise ValueError("Q must be [num_items, d]")
        for W in self.gnn_layers:
            if W.shape != (d, d):
                raise ValueError("every GNN layer weight must be [d, d]")
        return self


def init_contextgnn_params(num_users, num_items, d, n_layers, seed, q_init=None):
    """Initialize all tensors ~ uniform(-1/sqrt(d), +1/sqrt(d)) under `seed`.

    Draw order is fixed (user_emb, item_emb, layers, Q, mlp), so the stream
    is identical whether or not `q_init` later overwrites Q with a
    warm-start matrix.
    """
    rng = np.random.default_rng([int(seed) & _MASK64, 0x67])
    s = 1.0 / np.sqrt(d)

    def draw(*shape):
        return rng.uniform(-s, s, size=shape)

    params = ContextGNNParams(
        user_emb=ParamTensor(draw(num_users, d), name="user_emb"),
        item_emb=ParamTensor(draw(num_items, d), name="item_emb"),
        gnn_layers=[ParamTensor(draw(d, d), name=f"gnn.{j}.W") for j in range(n_layers)],
        Q=ParamTensor(draw(num_items, d), name="Q"),
        mlp_theta=[
            (ParamTensor(draw(d, d), name="mlp.0.W"), ParamTensor(draw(d), name="mlp.0.b")),
            (ParamTensor(draw(d, 1), name="mlp.1.W"), ParamTensor(draw(1), name="mlp.1.b")),
        ],
        d=d,
    )
    if q_init is not None:
        q_init = np.asarray(q_init, dtype=np.float64)
        if q_init.shape != (num_items, d):
            raise ValueError(f"q_init shape {q_init.shape} != ({num_items}, {d})")
        params.Q.values[...] = q_init
    return params.validate()


def _layer_direction(n_layers, j):
    # messages flow leaves -> seed; the last layer always lands on users
    return "items_to_users" if (n_layers - j) % 2 == 1 else "users_to_items"


def gnn_forward(subgraph, params, tape=None):
    """Run the message-passing stack over a sampled subgraph.

    Local node features start from the user/item embedding tables, then one
    message-passing layer per entry of params.gnn_layers is applied with
    alternating direction so that leaf information reaches the seed. Returns
    (h_u, h_items): the seed user's final vector and the final rows of every
    contained item, ordered like subgraph.contained_items. An isolated user
    yields h_u from its embedding alone and an empty h_items.
    """
    k = len(params.gnn_layers)
    if subgraph.hops > k:
        raise ValueError(f"subgraph depth {subgraph.hops} exceeds {k} GNN layers")
    feats = compose_rows(
        tape,
        [
            (params.user_emb, subgraph.user_globals, subgraph.user_locals),
            (params.item_emb, subgraph.item_globals, subgraph.item_locals),
        ],
        subgraph.n_local,
    )
    for j, W in enumerate(params.gnn_layers):
        feats = message_pass_layer(tape, feats, subgraph.local_edges,
                                   _layer_direction(k, j), W)
    h_u = pick_row(tape, feats, subgraph.seed_local)
    h_items = gather_rows(tape, feats, subgraph.contained_item_locals)
    return h_u, h_items


def pair_score(h_u, h_items, tape=None):
    """Dot product of the user vector with each contained item's vector."""
    return matvec(tape, _as_tensor(h_items), _as_tensor(h_u))


def tower_score(h_u, Q, tape=None):
    """Dot product of the user vector with every row of the static matrix Q."""
    return matvec(tape, _as_tensor(Q), _as_tensor(h_u))


def _mlp_head(tape, params, rows):
    """Apply the offset MLP to [n, d] rows; returns a 1-D [n] tensor."""
    h = rows
    last = len(params.mlp_theta) - 1
    for j, (W, b) in enumerate(params.mlp_theta):
        h = affine(tape, h, W, b, activation="relu" if j < last else "none")
    return reshape(tape, h, (h.values.shape[0],))


def fused_scores(user, graph, params, fanouts, rng_seed, exact_routing=False):
    """Hybrid scores for every item: pair branch inside the subgraph, tower outside.

    Items contained in the user's sampled subgraph receive
    pair_score + MLP(h_u) where the MLP offset is a single scalar shared by
    all of that user's pair-routed items; every other item receives the
    two-tower score. With exact_routing=True the fanout caps are raised to
    the graph's maximum degree, so the subgraph (and hence the routing mask)
    equals the exact k-hop neighborhood.
    """
    if exact_routing:
        cap = max(graph.max_degree(), 1)
        fanouts = (cap,) * len(tuple(fanouts))
    sub = sample_subgraph(graph, user, fanouts, rng_seed)
    h_u, h_items = gnn_forward(sub, params)
    scores = params.Q.values @ h_u.values
    mask = np.zeros(graph.num_items, dtype=bool)
    if sub.contained_items.size:
        offset = float(_mlp_head(None, params, ParamTensor(h_u.values[None, :])).values[0])
        scores[sub.contained_items] = h_items.values @ h_u.values + offset
        mask[sub.contained_items] = True
    if not np.all(np.isfinite(scores)):
        raise FloatingPointError(f"non-finite fused scores for user {user}")
    return ScoreVector(user=int(user), scores=scores, branch_mask=mask)


class ContextGNN:
    """Trainable hybrid scorer bound to a train graph and sampling policy."""

    trainable = True

    def __init__(self, graph, params, fanouts, rng_seed, exact_routing=False):
        self.graph = graph
        self.params = params.validate()
        self.fanouts = tuple(int(f) for f in fanouts)
        self.rng_seed = int(rng_seed)
        self.exact_routing = bool(exact_routing)
        if len(self.fanouts) != len(params.gnn_layers):
            raise ValueError("fanout tuple length must equal the GNN layer count")

    def param_tensors(self):
        return self.params.all_tensors()

    def named_tensors(self):
        return self.params.named_tensors()

    def scores_for_user(self, user):
        return fused_scores(user, self.graph, self.params, self.fanouts,
                            self.rng_seed, self.exact_routing)

    def batch_scores(self, tape, users, pos_items, neg_items, epoch=0, batch_idx=0):
        """Differentiable fused scores for (user, positive, negative) triples.

        All per-example subgraphs are merged into one disjoint union so the
        message passing runs once per batch. Subgraph sampling re-seeds per
        (epoch, batch); sample_subgraph mixes the user in, so the effective
        seed is per (seed, epoch, batch, user).
        """
        users = [int(u) for u in users]
        seed = mix_seed(self.rng_seed, epoch, batch_idx)
        subs = [sample_subgraph(self.graph, u, self.fanouts, seed) for u in users]

        sizes = [s.n_local for s in subs]
        base = np.zeros(len(subs), dtype=np.int64)
        if len(sizes) > 1:
            base[1:] = np.cumsum(sizes[:-1])
        n_total = int(np.sum(sizes))

        user_globals = np.concatenate([s.user_globals for s in subs])
        user_locals = np.concatenate([s.user_locals + b for s, b in zip(subs, base)])
        item_globals = np.concatenate([s.item_globals for s in subs])
        item_locals = np.concatenate([s.item_locals + b for s, b in zip(subs, base)])
        edge_blocks = [s.local_edges + b for s, b in zip(subs, base) if s.local_edges.size]
        edges = np.concatenate(edge_blocks) if edge_blocks else np.zeros((0, 2), np.int64)

        feats = compose_rows(
            tape,
            [
                (self.params.user_emb, user_globals, user_locals),
                (self.params.item_emb, item_globals, item_locals),
            ],
            n_total,
        )
        k = len(self.params.gnn_layers)
        for j, W in enumerate(self.params.gnn_layers):
            feats = message_pass_layer(tape, feats, edges, _layer_direction(k, j), W)

        seed_rows = gather_rows(tape, feats, base)  # seed is local 0 in each block
        offsets = _mlp_head(tape, self.params, seed_rows)
        pos = self._scores_for_items(tape, feats, seed_rows, offsets, subs, base, pos_items)
        neg = self._scores_for_items(tape, feats, seed_rows, offsets, subs, base, neg_items)
        return pos, neg

    def _scores_for_items(self, tape, feats, seed_rows, offsets, subs, base, items):
        n = len(subs)
        pair_rows, pair_locals, tower_rows, tower_items = [], [], [], []
        for b, (sub, item) in enumerate(zip(subs, items)):
            loc = sub.global_to_local.get(sub.graph_num_users + int(item))
            if loc is not None:
                pair_rows.append(b)
                pair_locals.append(int(base[b]) + loc)
            else:
                tower_rows.append(b)
                tower_items.append(int(item))
        parts = []
        if pair_rows:
            s = rowwise_dot(tape, gather_rows(tape, seed_rows, pair_rows),
                            gather_rows(tape, feats, pair_locals))
            s = add(tape, s, gather_elems(tape, offsets, pair_rows))
            parts.append(put_1d(tape, n, pair_rows, s))
        if tower_rows:
            s = rowwise_dot(tape, gather_rows(tape, seed_rows, tower_rows),
                            gather_rows(tape, self.params.Q, tower_items))
            parts.append(put_1d(tape, n, tower_rows, s))
        return parts[0] if len(parts) == 1 else add(tape, parts[0], parts[1])


# ----------------------------------------------------------------------
# baselines (simplified stand-ins sharing the scoring interface)
# ----------------------------------------------------------------------

def mf_bpr_score(user, P, Q):
    """Matrix-factorization scores for one user: Q @ p_u."""
    P = P.values if isinstance(P, ParamTensor) else np.asarray(P, dtype=np.float64)
    Q = Q.values if isinstance(Q, ParamTensor) else np.asarray(Q, dtype=np.float64)
    return Q @ P[int(user)]


class MatrixFactorizationBPR:
    """Plain embedding dot-product scorer trained with the shared BPR loop."""

    trainable = True

    def __init__(self, num_users, num_items, d, seed):
        rng = np.random.default_rng([int(seed) & _MASK64, 0x4D])
        s = 1.0 / np.sqrt(d)
        self.P = ParamTensor(rng.uniform(-s, s, size=(num_users, d)), name="P")
        self.Q = ParamTensor(rng.uniform(-s, s, size=(num_items, d)), name="Q")

    def param_tensors(self):
        return [self.P, self.Q]

    def named_tensors(self):
        return {"P": self.P, "Q": self.Q}

    def scores_for_user(self, user):
        return mf_bpr_score(user, self.P, self.Q)

    def batch_scores(self, tape, users, pos_items, neg_items, epoch=0, batch_idx=0):
        p_rows = gather_rows(tape, self.P, users)
        pos = rowwise_dot(tape, p_rows, gather_rows(tape, self.Q, pos_items))
        neg = rowwise_dot(tape, p_rows, gather_rows(tape, self.Q, neg_items))
        return pos, neg


def _norm_edge_arrays(graph):
    """Expanded edge arrays with symmetric 1/sqrt(du*di) weights."""
    u_idx = np.repeat(np.arange(graph.num_users, dtype=np.int64), np.diff(graph.user_ptr))
    i_idx = graph.user_nbr.astype(np.int64)
    du = (graph.user_ptr[1:] - graph.user_ptr[:-1]).astype(np.float64)
    di = (graph.item_ptr[1:] - graph.item_ptr[:-1]).astype(np.float64)
    w = 1.0 / np.sqrt(du[u_idx] * di[i_idx])
    return u_idx, i_idx, w


def _propagate(tape, graph, user_x, item_x, layers, edge_arrays=None):
    u_idx, i_idx, w = edge_arrays if edge_arrays is not None else _norm_edge_arrays(graph)
    acc_u, acc_i = user_x, item_x
    cur_u, cur_i = user_x, item_x
    for _ in range(layers):
        nxt_u = weighted_scatter_rows(tape, cur_i, i_idx, u_idx, w, graph.num_users)
        nxt_i = weighted_scatter_rows(tape, cur_u, u_idx, i_idx, w, graph.num_items)
        cur_u, cur_i = nxt_u, nxt_i
        acc_u = add(tape, acc_u, nxt_u)
        acc_i = add(tape, acc_i, nxt_i)
    factor = 1.0 / (layers + 1)
    return scale(tape, acc_u, factor), scale(tape, acc_i, factor)


def lightgcn_propagate(graph, base_user_emb, base_item_emb, layers):
    """Linear propagation e^(l+1) = D^-1/2 A D^-1/2 e^(l); mean of layers 0..L.

    Zero-degree nodes receive no propagation, so their final embedding is
    their base embedding scaled by 1/(L+1). With layers=0 this is the
    identity on both embedding matrices.
    """
    if layers < 0:
        raise ValueError("layers must be >= 0")
    fu, fi = _propagate(None, graph, ParamTensor(base_user_emb),
                        ParamTensor(base_item_emb), layers)
    return fu.values, fi.values


class LightGCNScorer:
    """Trainable embeddings scored after L rounds of linear propagation."""

    trainable = True

    def __init__(self, graph, d, layers, seed):
        rng = np.random.default_rng([int(seed) & _MASK64, 0x16])
        s = 1.0 / np.sqrt(d)
        self.graph = graph
        self.layers = int(layers)
        self.user_emb = ParamTensor(rng.uniform(-s, s, size=(graph.num_users, d)), name="user_emb")
        self.item_emb = ParamTensor(rng.uniform(-s, s, size=(graph.num_items, d)), name="item_emb")
        self._edge_arrays = _norm_edge_arrays(graph)

    def param_tensors(self):
        return [self.user_emb, self.item_emb]

    def named_tensors(self):
        return {"user_emb": self.user_emb, "item_emb": self.item_emb}

    def scores_for_user(self, user):
        fu, fi = _propagate(None, self.graph, self.user_emb, self.item_emb,
                            self.layers, self._edge_arrays)
        return fi.values @ fu.values[int(user)]

    def batch_scores(self, tape, users, pos_items, neg_items, epoch=0, batch_idx=0):
        fu, fi = _propagate(tape, self.graph, self.user_emb, self.item_emb,
                            self.layers, self._edge_arrays)
        u_rows = gather_rows(tape, fu, users)
        pos = rowwise_dot(tape, u_rows, gather_rows(tape, fi, pos_items))
        neg = rowwise_dot(tape, u_rows, gather_rows(tape, fi, neg_items))
        return pos, neg


def _normalized_cooccurrence(graph, smoothing):
    """Item-item co-occurrence with symmetric degree normalization.

    C = B^T B over the binary train matrix B, scaled by deg^-smoothing on
    both sides; zero-degree items contribute zero. Dense [num_items^2], so
    desk-scale catalogs only.
    """
    u_idx, i_idx, _ = _norm_edge_arrays(graph)
    B = np.zeros((graph.num_users, graph.num_items), dtype=np.float64)
    B[u_idx, i_idx] = 1.0
    C = B.T @ B
    deg = B.sum(axis=0)
    w = np.zeros_like(deg)
    nz = deg > 0
    w[nz] = deg[nz] ** (-float(smoothing))
    return (w[:, None] * C) * w[None, :]


def item_filter_score(graph, user, smoothing=0.5):
    """Training-free scores: the user's binary train row times the normalized
    item-item co-occurrence matrix. A user with no history scores all zeros."""
    if not 0 <= user < graph.num_users:
        raise ValueError(f"user {user} out of range")
    c_hat = _normalized_cooccurrence(graph, smoothing)
    r = np.zeros(graph.num_items, dtype=np.float64)
    r[graph.user_neighbors(user)] = 1.0
    return r @ c_hat


class ItemCooccurrenceFilter:
    """Caches the normalized co-occurrence matrix for repeated scoring."""

    trainable = False

    def __init__(self, graph, smoothing=0.5):
        self.graph = graph
        self.smoothing = float(smoothing)
        self._c_hat = _normalized_cooccurrence(graph, smoothing)

    def scores_for_user(self, user):
        r = np.zeros(self.graph.num_items, dtype=np.float64)
        r[self.graph.user_neighbors(user)] = 1.0
        return r @ self._c_hat
