"""Minimal reverse-mode tape over float64 numpy arrays.

Only the primitives the recommendation models actually need: embedding-table
lookups, affine layers, sum-aggregation message passing, gathers/scatters and
dot products. Each primitive computes its forward value eagerly and, when a
Tape is supplied, records a backward closure; Tape.backward replays the
closures in reverse, accumulating into each tensor's `.grad`. Passing
`tape=None` gives a plain forward evaluation.

Weight matrices act on the right of row-major feature matrices throughout
(out = x @ W + b).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ParamTensor",
    "Tape",
    "embedding_lookup",
    "affine",
    "message_pass_layer",
    "compose_rows",
    "gather_rows",
    "gather_elems",
    "pick_row",
    "rowwise_dot",
    "matvec",
    "weighted_scatter_rows",
    "add",
    "scale",
    "reshape",
    "put_1d",
    "sum_all",
    "assert_finite",
    "grad_check",
    "GradCheckReport",
    "TensorCheck",
]


class ParamTensor:
    """A float64 array with a same-shape gradient accumulator."""

    __slots__ = ("values", "grad", "name")

    def __init__(self, values, name=""):
        self.values = np.array(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.name = name

    @property
    def shape(self):
        return self.values.shape

    def zero_grad(self):
        self.grad[...] = 0.0

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"ParamTensor{label}(shape={self.values.shape})"


class Tape:
    """Ordered record of backward closures for one forward computation.

    `relu_margins` collects min |pre-activation| per relu call so callers
    (grad_check in particular) can verify the probe point is clear of kinks.
    """

    def __init__(self):
        self._backward_ops = []
        self.relu_margins = []

    def record(self, backward_fn):
        self._backward_ops.append(backward_fn)

    def backward(self, loss):
        if loss.values.size != 1:
            raise ValueError(f"backward needs a scalar loss, got shape {loss.values.shape}")
        loss.grad[...] = 1.0
        for fn in reversed(self._backward_ops):
            fn()


def _result(values):
    return ParamTensor(values)


def _track_margin(tape, z):
    if tape is not None and z.size:
        tape.relu_margins.append(float(np.min(np.abs(z))))


def assert_finite(*tensors):
    """Raise FloatingPointError naming the first tensor with NaN/Inf entries."""
    for t in tensors:
        if not np.all(np.isfinite(t.values)):
            bad = int(np.count_nonzero(~np.isfinite(t.values)))
            name = t.name or "<unnamed>"
            raise FloatingPointError(f"tensor {name} has {bad} non-finite entries")


# ----------------------------------------------------------------------
# primitives
# ----------------------------------------------------------------------

def embedding_lookup(tape, table, indices):
    """Row gather from a [n, d] table; backward scatters grads additively."""
    idx = np.asarray(indices, dtype=np.int64)
    n = table.values.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"embedding index out of range for table of {n} rows")
    out = _result(table.values[idx])
    if tape is not None:
        def backward():
            np.add.at(table.grad, idx, out.grad)
        tape.record(backward)
    return out


def affine(tape, x, W, b, activation="none"):
    """x @ W + b with an optional elementwise relu."""
    if activation not in ("none", "relu"):
        raise ValueError(f"unknown activation {activation!r}")
    if x.values.ndim != 2 or W.values.ndim != 2 or x.values.shape[1] != W.values.shape[0]:
        raise ValueError(f"affine shape mismatch: x{x.values.shape} @ W{W.values.shape}")
    if b.values.shape != (W.values.shape[1],):
        raise ValueError(f"affine bias shape {b.values.shape} != ({W.values.shape[1]},)")
    z = x.values @ W.values + b.values
    if activation == "relu":
        _track_margin(tape, z)
        out = _result(np.maximum(z, 0.0))
    else:
        out = _result(z)
    if tape is not None:
        def backward():
            g = out.grad * (z > 0.0) if activation == "relu" else out.grad
            x.grad += g @ W.values.T
            W.grad += x.values.T @ g
            b.grad += g.sum(axis=0)
        tape.record(backward)
    return out


def message_pass_layer(tape, node_feats, edges, direction, W, aggr="sum"):
    """One sum-aggregation message-passing step over bipartite local edges.

    `edges` is an (m, 2) array of (user_local, item_local) pairs. Every node
    is transformed as relu((h + sum of incoming neighbor features) @ W);
    nodes with no incoming message under `direction` aggregate the zero
    vector, so with no edges at all this reduces to relu(h @ W).
    """
    if aggr != "sum":
        raise ValueError(f"unsupported aggregator {aggr!r}")
    if direction not in ("items_to_users", "users_to_items"):
        raise ValueError(f"unknown direction {direction!r}")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = node_feats.values.shape[0]
    if edges.size and edges.max() >= n:
        raise IndexError("edge references a local node outside the feature matrix")
    if direction == "items_to_users":
        src, dst = edges[:, 1], edges[:, 0]
    else:
        src, dst = edges[:, 0], edges[:, 1]

    s = node_feats.values.copy()
    np.add.at(s, dst, node_feats.values[src])
    z = s @ W.values
    _track_margin(tape, z)
    out = _result(np.maximum(z, 0.0))
    if tape is not None:
        def backward():
            gz = out.grad * (z > 0.0)
            W.grad += s.T @ gz
            gs = gz @ W.values.T
            node_feats.grad += gs
            np.add.at(node_feats.grad, src, gs[dst])
        tape.record(backward)
    return out


def compose_rows(tape, pieces, n_rows):
    """Assemble a feature matrix from row-gathers of several source tensors.

    `pieces` is a list of (source, source_indices, destination_rows) with
    disjoint destination rows covering [0, n_rows).
    """
    width = pieces[0][0].values.shape[1]
    out_vals = np.zeros((n_rows, width), dtype=np.float64)
    prepared = []
    for source, src_idx, dst_rows in pieces:
        src_idx = np.asarray(src_idx, dtype=np.int64)
        dst_rows = np.asarray(dst_rows, dtype=np.int64)
        out_vals[dst_rows] = source.values[src_idx]
        prepared.append((source, src_idx, dst_rows))
    out = _result(out_vals)
    if tape is not None:
        def backward():
            for source, src_idx, dst_rows in prepared:
                np.add.at(source.grad, src_idx, out.grad[dst_rows])
        tape.record(backward)
    return out


def gather_rows(tape, x, indices):
    idx = np.asarray(indices, dtype=np.int64)
    out = _result(x.values[idx])
    if tape is not None:
        def backward():
            np.add.at(x.grad, idx, out.grad)
        tape.record(backward)
    return out


def gather_elems(tape, v, indices):
    idx = np.asarray(indices, dtype=np.int64)
    out = _result(v.values[idx])
    if tape is not None:
        def backward():
            np.add.at(v.grad, idx, out.grad)
        tape.record(backward)
    return out


def pick_row(tape, x, row):
    row = int(row)
    out = _result(x.values[row])
    if tape is not None:
        def backward():
            x.grad[row] += out.grad
        tape.record(backward)
    return out


def rowwise_dot(tape, a, b):
    """Per-row dot product of two equal-shape matrices -> 1-D vector."""
    if a.values.shape != b.values.shape:
        raise ValueError(f"rowwise_dot shape mismatch {a.values.shape} vs {b.values.shape}")
    out = _result(np.sum(a.values * b.values, axis=1))
    if tape is not None:
        def backward():
            a.grad += out.grad[:, None] * b.values
            b.grad += out.grad[:, None] * a.values
        tape.record(backward)
    return out


def matvec(tape, M, v):
    if M.values.ndim != 2 or v.values.ndim != 1 or M.values.shape[1] != v.values.shape[0]:
        raise ValueError(f"matvec shape mismatch: {M.values.shape} @ {v.values.shape}")
    out = _result(M.values @ v.values)
    if tape is not None:
        def backward():
            M.grad += np.outer(out.grad, v.values)
            v.grad += M.values.T @ out.grad
        tape.record(backward)
    return out


def weighted_scatter_rows(tape, x, src_idx, dst_idx, weights, n_rows):
    """out[dst] += w * x[src] over parallel index/weight arrays."""
    src_idx = np.asarray(src_idx, dtype=np.int64)
    dst_idx = np.asarray(dst_idx, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    out_vals = np.zeros((n_rows, x.values.shape[1]), dtype=np.float64)
    np.add.at(out_vals, dst_idx, weights[:, None] * x.values[src_idx])
    out = _result(out_vals)
    if tape is not None:
        def backward():
            np.add.at(x.grad, src_idx, weights[:, None] * out.grad[dst_idx])
        tape.record(backward)
    return out


def add(tape, a, b):
    if a.values.shape != b.values.shape:
        raise ValueError(f"add shape mismatch {a.values.shape} vs {b.values.shape}")
    out = _result(a.values + b.values)
    if tape is not None:
        def backward():
            a.grad += out.grad
            b.grad += out.grad
        tape.record(backward)
    return out


def scale(tape, x, factor):
    factor = float(factor)
    out = _result(x.values * factor)
    if tape is not None:
        def backward():
            x.grad += factor * out.grad
        tape.record(backward)
    return out


def reshape(tape, x, shape):
    out = _result(x.values.reshape(shape))
    if tape is not None:
        def backward():
            x.grad += out.grad.reshape(x.values.shape)
        tape.record(backward)
    return out


def put_1d(tape, n, indices, values):
    """Length-n vector with out[indices] = values (indices must be unique)."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size != np.unique(idx).size:
        raise ValueError("put_1d indices must be unique")
    out_vals = np.zeros(n, dtype=np.float64)
    out_vals[idx] = values.values
    out = _result(out_vals)
    if tape is not None:
        def backward():
            values.grad += out.grad[idx]
        tape.record(backward)
    return out


def sum_all(tape, x):
    out = _result(np.sum(x.values))
    if tape is not None:
        def backward():
            x.grad += out.grad
        tape.record(backward)
    return out


# ----------------------------------------------------------------------
# finite-difference verification
# ----------------------------------------------------------------------

@dataclass
class TensorCheck:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    checks: list
    relu_margin: float
    eps: float
    tol: float

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def max_rel_err(self):
        return max((c.max_rel_err for c in self.checks), default=0.0)

    def summary(self):
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{status} {c.name}: max_rel_err={c.max_rel_err:.3e} (tol={self.tol:.0e})")
        return "\n".join(lines)


def grad_check(loss_fn, params, eps=1e-5, tol=1e-4):
    """Compare tape gradients against central finite differences.

    `loss_fn(tape)` must rebuild the scalar loss from the current values of
    `params` (deterministically, and smooth at the probe point: the report's
    `relu_margin` is the smallest |pre-activation| seen on the analytic pass,
    which should comfortably exceed eps). Entries whose gradients are below
    1e-6 in magnitude are compared against that floor, i.e. effectively with
    absolute tolerance tol * 1e-6.
    """
    for p in params:
        p.zero_grad()
    tape = Tape()
    loss = loss_fn(tape)
    if not np.all(np.isfinite(loss.values)):
        raise FloatingPointError("loss is not finite at the probe point")
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]
    margin = min(tape.relu_margins, default=math.inf)

    checks = []
    for p, a in zip(params, analytic):
        numeric = np.zeros_like(p.values)
        flat = p.values.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            f_plus = float(loss_fn(None).values)
            flat[j] = orig - eps
            f_minus = float(loss_fn(None).values)
            flat[j] = orig
            num_flat[j] = (f_plus - f_minus) / (2.0 * eps)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-6)
        rel = float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0
        checks.append(TensorCheck(name=p.name or f"param{len(checks)}",
                                  max_rel_err=rel, passed=rel < tol))
    return GradCheckReport(checks=checks, relu_margin=margin, eps=eps, tol=tol)
