"""BPR training loop: uniform negative sampling, Adam, step cap, validation.

One training run is a single logical thread of parameter mutation; every
source of randomness is derived from the config seed, so a fixed
(dataset, model, config) reproduces logs and parameters bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import ParamTensor, Tape, assert_finite
from .evaluation import evaluate, parse_metric_tag
from .graph import build_graph
from .models import (
    ContextGNN,
    ItemCooccurrenceFilter,
    LightGCNScorer,
    MatrixFactorizationBPR,
    init_contextgnn_params,
)

__all__ = [
    "TrainConfig",
    "TrainingLog",
    "TrainResult",
    "sample_negatives",
    "bpr_loss",
    "AdamState",
    "init_adam_state",
    "adam_step",
    "make_model",
    "train",
    "MODEL_TAGS",
]

_MASK64 = (1 << 64) - 1

MODEL_TAGS = ("external.ContextGNN", "MFBPR", "LightGCN", "ItemFilter")


@dataclass
class TrainConfig:
    """Hyperparameters of one training run (defaults mirror the reference
    experiment configuration)."""

    lr: float = 0.001
    epochs: int = 20
    batch_size: int = 128
    max_steps: int = 2000
    seed: int = 42
    validation_rate: int = 20
    validation_metric: str = "Recall@20"
    factors: int = 128           # embedding dim d (a.k.a. channels)
    n_layers: int = 4
    aggr: str = "sum"
    neigh: tuple = (16, 16, 16, 16)

    def validate(self):
        for name in ("epochs", "batch_size", "max_steps", "validation_rate",
                     "factors", "n_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.aggr != "sum":
            raise ValueError(f"unsupported aggregator {self.aggr!r}")
        if self.neigh is not None and len(self.neigh) != self.n_layers:
            raise ValueError(
                f"neigh has {len(self.neigh)} entries but n_layers is {self.n_layers}"
            )
        parse_metric_tag(self.validation_metric)
        return self


# ----------------------------------------------------------------------
# sampling and loss
# ----------------------------------------------------------------------

def sample_negatives(graph, user, count, rng):
    """Uniform items outside the user's train neighbors, no replacement.

    Single draws use rejection sampling with a bounded retry budget; larger
    requests (or pathologically dense users) fall back to an explicit
    complement. Raises when the user interacted with every item.
    """
    nbrs = graph.user_neighbors(user)
    pool = graph.num_items - len(nbrs)
    if pool <= 0:
        raise ValueError(f"user {user} has interacted with every item")
    if count > pool:
        raise ValueError(f"cannot draw {count} negatives from a pool of {pool}")
    if count == 1:
        for _ in range(64):
            cand = int(rng.integers(graph.num_items))
            pos = np.searchsorted(nbrs, cand)
            if pos >= len(nbrs) or nbrs[pos] != cand:
                return np.array([cand], dtype=np.int64)
    complement = np.setdiff1d(np.arange(graph.num_items, dtype=np.int64), nbrs,
                              assume_unique=True)
    picked = rng.choice(complement.size, size=count, replace=False)
    return np.sort(complement[picked])


def bpr_loss(tape, pos_scores, neg_scores):
    """Mean of -ln sigmoid(pos - neg), numerically stabilized.

    Computed as softplus(neg - pos) = log1p(exp(-|x|)) + max(x, 0) with
    x = neg - pos, which saturates cleanly for large margins of either sign.
    """
    pos = pos_scores if isinstance(pos_scores, ParamTensor) else ParamTensor(pos_scores)
    neg = neg_scores if isinstance(neg_scores, ParamTensor) else ParamTensor(neg_scores)
    if pos.values.shape != neg.values.shape:
        raise ValueError("pos and neg score vectors must have equal length")
    x = neg.values - pos.values
    per_pair = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
    out = ParamTensor(np.mean(per_pair))
    if tape is not None:
        n = x.size
        # d softplus(x)/dx = sigmoid(x), evaluated branch-wise for stability
        sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                       np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))

        def backward():
            g = float(out.grad)
            pos.grad += -sig * (g / n)
            neg.grad += sig * (g / n)
        tape.record(backward)
    return out


# ----------------------------------------------------------------------
# optimizer
# ----------------------------------------------------------------------

@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


def init_adam_state(params):
    return AdamState(m=[np.zeros_like(p.values) for p in params],
                     v=[np.zeros_like(p.values) for p in params])


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard bias-corrected Adam update, in place; aborts on bad grads."""
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not np.all(np.isfinite(g)):
            bad = int(np.count_nonzero(~np.isfinite(g)))
            raise FloatingPointError(
                f"non-finite gradient for {p.name or 'tensor'} "
                f"({bad}/{g.size} entries) at step {state.t}"
            )
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.values -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


# ----------------------------------------------------------------------
# training log
# ----------------------------------------------------------------------

@dataclass
class LogRow:
    step: int
    epoch: int
    loss: float
    val_metric: str = ""
    val_value: float | None = None


class TrainingLog:
    """Step/validation rows plus free-form header notes.

    Serialized as a tsv with header `step epoch loss val_metric val_value`;
    notes become leading `# ` comment lines. Floats are written with repr so
    identical runs serialize identically.
    """

    def __init__(self):
        self.notes: list[str] = []
        self.rows: list[LogRow] = []

    def add_step(self, step, epoch, loss):
        self.rows.append(LogRow(step, epoch, loss))

    def add_validation(self, step, epoch, loss, metric, value):
        self.rows.append(LogRow(step, epoch, loss, metric, value))

    def validation_rows(self):
        return [r for r in self.rows if r.val_metric]

    def to_tsv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for note in self.notes:
                fh.write(f"# {note}\n")
            fh.write("step\tepoch\tloss\tval_metric\tval_value\n")
            for r in self.rows:
                val = repr(r.val_value) if r.val_value is not None else ""
                fh.write(f"{r.step}\t{r.epoch}\t{r.loss!r}\t{r.val_metric}\t{val}\n")


@dataclass
class TrainResult:
    model: object
    log: TrainingLog
    best_metric: float | None
    steps: int


# ----------------------------------------------------------------------
# model registry and the loop
# ----------------------------------------------------------------------

def make_model(tag, dataset, graph, config, extras=None):
    """Instantiate a scorer by tag against a train graph and config."""
    extras = extras or {}
    if tag == "external.ContextGNN":
        params = init_contextgnn_params(
            dataset.num_users, dataset.num_items, config.factors,
            config.n_layers, config.seed, q_init=extras.get("q_init"),
        )
        return ContextGNN(graph, params, config.neigh, config.seed,
                          exact_routing=bool(extras.get("exact_routing", False)))
    if tag == "MFBPR":
        return MatrixFactorizationBPR(dataset.num_users, dataset.num_items,
                                      config.factors, config.seed)
    if tag == "LightGCN":
        return LightGCNScorer(graph, config.factors, config.n_layers, config.seed)
    if tag == "ItemFilter":
        return ItemCooccurrenceFilter(graph, smoothing=extras.get("smoothing", 0.5))
    raise ValueError(f"unknown model tag {tag!r}")


def _validation_value(model, dataset, positives, metric_name, metric_k):
    report = evaluate(model.scores_for_user, dataset, K=metric_k, positives=positives)
    return report.recall if metric_name == "recall" else report.ndcg


def train(model, dataset, config, extras=None):
    """Run the BPR loop; returns the model holding its best checkpoint.

    Epochs iterate shuffled train edges in batches with one uniform negative
    per positive; training stops when epochs are exhausted or the cumulative
    optimizer step count reaches max_steps (counted globally). Validation
    runs every validation_rate epochs and at the final epoch, on the val
    split when present and on the test split otherwise; the best checkpoint
    by the validation metric is restored before returning.
    """
    config.validate()
    if not dataset.train_edges:
        raise ValueError("cannot train on an empty train set")
    graph = build_graph(dataset, "train")
    if isinstance(model, str):
        model = make_model(model, dataset, graph, config, extras)
    if not model.trainable:
        raise ValueError("model is training-free; nothing to train")

    params = model.param_tensors()
    state = init_adam_state(params)
    metric_name, metric_k = parse_metric_tag(config.validation_metric)
    if dataset.val_edges:
        val_positives = dataset.positives_by_user("val")
        val_note = "validation split: val"
    else:
        val_positives = dataset.positives_by_user("test")
        val_note = "validation split: test (no validation split provided)"

    log = TrainingLog()
    log.notes.append(val_note)
    log.notes.append(f"model seed: {config.seed}")

    positives = np.array(sorted(dataset.train_edges), dtype=np.int64)
    n_pos = positives.shape[0]
    n_batches = math.ceil(n_pos / config.batch_size)
    seed = int(config.seed) & _MASK64

    step = 0
    last_loss = math.nan
    best_value = None
    best_snapshot = None
    last_validated_step = -1
    cap_hit = False

    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([seed, epoch, 0xD5]).permutation(n_pos)
        for b in range(n_batches):
            if step >= config.max_steps:
                cap_hit = True
                break
            sel = order[b * config.batch_size:(b + 1) * config.batch_size]
            users = positives[sel, 0]
            pos_items = positives[sel, 1]
            neg_rng = np.random.default_rng([seed, epoch, b, 0x7E])
            neg_items = np.array(
                [sample_negatives(graph, int(u), 1, neg_rng)[0] for u in users],
                dtype=np.int64,
            )
            for p in params:
                p.zero_grad()
            tape = Tape()
            pos_s, neg_s = model.batch_scores(tape, users, pos_items, neg_items,
                                              epoch=epoch, batch_idx=b)
            loss = bpr_loss(tape, pos_s, neg_s)
            tape.backward(loss)
            adam_step(params, [p.grad for p in params], state, config.lr)
            step += 1
            last_loss = float(loss.values)
            if not math.isfinite(last_loss):
                raise FloatingPointError(f"loss became non-finite at step {step}")
            assert_finite(*params)
            log.add_step(step, epoch, last_loss)

        is_final = cap_hit or epoch == config.epochs
        if (epoch % config.validation_rate == 0 or is_final) and step != last_validated_step:
            value = _validation_value(model, dataset, val_positives, metric_name, metric_k)
            log.add_validation(step, epoch, last_loss, config.validation_metric, value)
            last_validated_step = step
            if best_value is None or value > best_value:
                best_value = value
                best_snapshot = [p.values.copy() for p in params]
        if cap_hit:
            break

    if best_snapshot is not None:
        for p, snap in zip(params, best_snapshot):
            p.values[...] = snap
    return TrainResult(model=model, log=log, best_metric=best_value, steps=step)
