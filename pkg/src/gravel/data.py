"""Interaction datasets: container type, benchmark file formats, synthetic generator.

Writers emit UTF-8, LF line endings and tab separators with no trailing
whitespace. Readers tolerate CRLF and (for the ragged files) arbitrary
whitespace between fields. Every reader error names the file and the
1-based line it occurred on. The exact byte layout of each format is
documented in docs/file_formats.md.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DataError",
    "InteractionDataset",
    "read_id_map",
    "write_id_map",
    "read_ragged",
    "write_ragged",
    "read_dataset",
    "write_dataset",
    "convert_for_benchmark",
    "read_elliot_pairs",
    "read_entity_table",
    "read_interaction_table",
    "read_target_table",
    "write_elliot_pairs",
    "write_entity_table",
    "write_interaction_table",
    "write_target_table",
    "read_elliot_split",
    "generate_synthetic",
]

DUMMY_TIMESTAMP = 0


class DataError(ValueError):
    """Malformed data file; the message always carries path and 1-based line."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = int(line)
        super().__init__(f"{self.path}:{self.line}: {message}")


def _default_id_map(n, prefix=""):
    return {f"{prefix}{k}": k for k in range(n)}


@dataclass
class InteractionDataset:
    """User/item ID maps plus train/test (optionally validation) edge sets.

    Edges are (user_index, item_index) pairs over dense indices. The ID maps
    are bijections from original (opaque string) IDs to dense indices that
    are contiguous from 0.
    """

    num_users: int
    num_items: int
    train_edges: set[tuple[int, int]]
    test_edges: set[tuple[int, int]]
    val_edges: set[tuple[int, int]] | None = None
    user_id_map: dict[str, int] | None = None
    item_id_map: dict[str, int] | None = None

    def __post_init__(self):
        if self.user_id_map is None:
            self.user_id_map = _default_id_map(self.num_users)
        if self.item_id_map is None:
            self.item_id_map = _default_id_map(self.num_items)

    def validate(self):
        """Check all type invariants; returns self so calls can be chained."""
        if self.num_users < 0 or self.num_items < 0:
            raise ValueError("negative user/item count")
        _check_id_map(self.user_id_map, self.num_users, "user_id_map")
        _check_id_map(self.item_id_map, self.num_items, "item_id_map")
        named = [("train", self.train_edges), ("test", self.test_edges)]
        if self.val_edges is not None:
            named.append(("val", self.val_edges))
        for name, edges in named:
            for u, i in edges:
                if not (0 <= u < self.num_users and 0 <= i < self.num_items):
                    raise ValueError(
                        f"{name} edge ({u}, {i}) out of range for "
                        f"{self.num_users} users x {self.num_items} items"
                    )
        overlap = self.train_edges & self.test_edges
        if overlap:
            sample = sorted(overlap)[:3]
            raise ValueError(f"train and test edges overlap, e.g. {sample}")
        return self

    def interactions(self):
        """Total interaction count over the train and test splits."""
        return len(self.train_edges) + len(self.test_edges)

    def _edges(self, split):
        if split == "train":
            return self.train_edges
        if split == "test":
            return self.test_edges
        if split == "val":
            return self.val_edges if self.val_edges is not None else set()
        if split == "train+test":
            return self.train_edges | self.test_edges
        raise ValueError(f"unknown split {split!r}")

    def items_by_user(self, split="train"):
        """Per-user sorted item-index arrays for the given split."""
        rows = [[] for _ in range(self.num_users)]
        for u, i in self._edges(split):
            rows[u].append(i)
        return [np.array(sorted(r), dtype=np.int64) for r in rows]

    def positives_by_user(self, split="test"):
        """Users with at least one edge in the split, as {user: item set}."""
        pos: dict[int, set[int]] = {}
        for u, i in self._edges(split):
            pos.setdefault(u, set()).add(i)
        return pos


def _check_id_map(id_map, n, name):
    if len(id_map) != n:
        raise ValueError(f"{name} has {len(id_map)} entries, expected {n}")
    values = sorted(id_map.values())
    if values != list(range(n)):
        raise ValueError(f"{name} indices are not contiguous from 0")


# ----------------------------------------------------------------------
# low-level line handling
# ----------------------------------------------------------------------

def _read_lines(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [line.rstrip("\r\n") for line in fh]


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="\n")


def _split_tabbed(line):
    # canonical form is tab-separated; tolerate single-space separation
    parts = line.split("\t")
    if len(parts) == 1:
        parts = line.split()
    return parts


def _parse_index(token, path, lineno, what):
    try:
        return int(token)
    except ValueError:
        raise DataError(path, lineno, f"{what} {token!r} is not an integer") from None


# ----------------------------------------------------------------------
# ID map files (user_list.txt / item_list.txt)
# ----------------------------------------------------------------------

ID_MAP_HEADER = ("org_id", "remap_id")


def read_id_map(path):
    """Read an org_id -> remap_id table; indices must ascend contiguously."""
    lines = _read_lines(path)
    if not lines:
        raise DataError(path, 1, "empty ID map file (missing header)")
    header = tuple(_split_tabbed(lines[0]))
    if header != ID_MAP_HEADER:
        raise DataError(path, 1, f"expected header org_id<TAB>remap_id, got {lines[0]!r}")
    id_map: dict[str, int] = {}
    expected = 0
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = _split_tabbed(line)
        if len(parts) != 2:
            raise DataError(path, lineno, f"expected 2 fields, got {len(parts)}")
        org, remap_tok = parts
        if org in id_map:
            raise DataError(path, lineno, f"duplicate org_id {org!r}")
        remap = _parse_index(remap_tok, path, lineno, "remap_id")
        if remap != expected:
            raise DataError(path, lineno, f"non-contiguous remap_id: expected {expected}, got {remap}")
        id_map[org] = remap
        expected += 1
    return id_map


def write_id_map(path, id_map):
    by_index = sorted(id_map.items(), key=lambda kv: kv[1])
    with _open_out(path) as fh:
        fh.write("org_id\tremap_id\n")
        for org, remap in by_index:
            fh.write(f"{org}\t{remap}\n")


# ----------------------------------------------------------------------
# ragged interaction files (train.txt / test.txt / val.txt)
# ----------------------------------------------------------------------

def _read_ragged_rows(path, num_users, num_items):
    rows: list[set[int]] = [set() for _ in range(num_users)]
    row_lines: dict[int, int] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        user = _parse_index(tokens[0], path, lineno, "user index")
        if not 0 <= user < num_users:
            raise DataError(path, lineno, f"user index {user} out of range (num_users={num_users})")
        if user in row_lines:
            raise DataError(path, lineno, f"duplicate row for user {user}")
        row_lines[user] = lineno
        for tok in tokens[1:]:
            item = _parse_index(tok, path, lineno, "item index")
            if not 0 <= item < num_items:
                raise DataError(path, lineno, f"item index {item} out of range (num_items={num_items})")
            rows[user].add(item)
    return rows, row_lines


def read_ragged(path, num_users, num_items):
    """Read one-row-per-user interaction lists into per-user item sets.

    Rows are `user item item ...` over remapped indices; a row may carry the
    bare user index (empty list). Users missing from the file get empty sets.
    """
    rows, _ = _read_ragged_rows(path, num_users, num_items)
    return rows


def write_ragged(path, items_by_user):
    """Write one row per user (bare user index when the list is empty)."""
    with _open_out(path) as fh:
        for user, items in enumerate(items_by_user):
            row = "\t".join([str(user)] + [str(i) for i in sorted(items)])
            fh.write(row + "\n")


# ----------------------------------------------------------------------
# dataset directory (the minimum four-file input setting)
# ----------------------------------------------------------------------

DATASET_FILES = ("user_list.txt", "item_list.txt", "train.txt", "test.txt")


def read_dataset(directory):
    """Load a dataset directory: ID maps, train/test and optional val files."""
    directory = Path(directory)
    for name in DATASET_FILES:
        if not (directory / name).exists():
            raise DataError(directory / name, 1, "required dataset file is missing")
    user_map = read_id_map(directory / "user_list.txt")
    item_map = read_id_map(directory / "item_list.txt")
    num_users, num_items = len(user_map), len(item_map)

    train_rows = read_ragged(directory / "train.txt", num_users, num_items)
    train_edges = {(u, i) for u, items in enumerate(train_rows) for i in items}

    test_path = directory / "test.txt"
    test_rows, test_lines = _read_ragged_rows(test_path, num_users, num_items)
    test_edges = set()
    for u, items in enumerate(test_rows):
        for i in items:
            if (u, i) in train_edges:
                raise DataError(test_path, test_lines[u],
                                f"edge ({u}, {i}) appears in both train and test")
            test_edges.add((u, i))

    val_edges = None
    if (directory / "val.txt").exists():
        val_rows = read_ragged(directory / "val.txt", num_users, num_items)
        val_edges = {(u, i) for u, items in enumerate(val_rows) for i in items}

    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train_edges=train_edges,
        test_edges=test_edges,
        val_edges=val_edges,
        user_id_map=user_map,
        item_id_map=item_map,
    ).validate()


def write_dataset(directory, dataset):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_id_map(directory / "user_list.txt", dataset.user_id_map)
    write_id_map(directory / "item_list.txt", dataset.item_id_map)
    write_ragged(directory / "train.txt", dataset.items_by_user("train"))
    write_ragged(directory / "test.txt", dataset.items_by_user("test"))
    if dataset.val_edges is not None:
        write_ragged(directory / "val.txt", dataset.items_by_user("val"))


# ----------------------------------------------------------------------
# converter outputs (seven files consumed by the downstream benchmark stack)
# ----------------------------------------------------------------------

def write_elliot_pairs(path, edges):
    """Two columns, user and item, one row per interaction."""
    with _open_out(path) as fh:
        for u, i in edges:
            fh.write(f"{u}\t{i}\n")


def read_elliot_pairs(path):
    edges = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = _split_tabbed(line)
        if len(parts) != 2:
            raise DataError(path, lineno, f"expected 2 fields, got {len(parts)}")
        u = _parse_index(parts[0], path, lineno, "user index")
        i = _parse_index(parts[1], path, lineno, "item index")
        edges.append((u, i))
    return edges


def write_entity_table(path, ids):
    """One column of entity IDs and one dummy-timestamp column."""
    with _open_out(path) as fh:
        for e in ids:
            fh.write(f"{e}\t{DUMMY_TIMESTAMP}\n")


def read_entity_table(path):
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = _split_tabbed(line)
        if len(parts) != 2:
            raise DataError(path, lineno, f"expected 2 fields, got {len(parts)}")
        rows.append((_parse_index(parts[0], path, lineno, "entity index"),
                     _parse_index(parts[1], path, lineno, "timestamp")))
    return rows


def write_interaction_table(path, items_by_user):
    """Three columns: user, space-separated interacted items, dummy timestamp.

    Users with no interactions are omitted, so the row count equals the
    number of users with a non-empty list.
    """
    with _open_out(path) as fh:
        for user, items in enumerate(items_by_user):
            if len(items) == 0:
                continue
            item_field = " ".join(str(i) for i in sorted(items))
            fh.write(f"{user}\t{item_field}\t{DUMMY_TIMESTAMP}\n")


def read_interaction_table(path):
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
        user = _parse_index(parts[0], path, lineno, "user index")
        items = tuple(_parse_index(t, path, lineno, "item index") for t in parts[1].split())
        ts = _parse_index(parts[2], path, lineno, "timestamp")
        rows.append((user, items, ts))
    return rows


def write_target_table(path, edges):
    """Like the pair file, with an additional dummy-timestamp column."""
    with _open_out(path) as fh:
        for u, i in edges:
            fh.write(f"{u}\t{i}\t{DUMMY_TIMESTAMP}\n")


def read_target_table(path):
    rows = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip():
            continue
        parts = _split_tabbed(line)
        if len(parts) != 3:
            raise DataError(path, lineno, f"expected 3 fields, got {len(parts)}")
        rows.append(tuple(_parse_index(p, path, lineno, "field") for p in parts))
    return rows


CONVERTED_FILES = (
    "train_elliot.tsv",
    "test_elliot.tsv",
    "src_df.tsv",
    "dst_df.tsv",
    "train_df.tsv",
    "test_df.tsv",
    "target_table.tsv",
)


def convert_for_benchmark(dataset, out_dir):
    """Write the seven benchmark files for a dataset; returns {name: path}.

    All IDs are remapped dense indices and every timestamp is the literal 0.
    Edge rows are emitted in sorted (user, item) order so conversion is
    deterministic.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_sorted = sorted(dataset.train_edges)
    test_sorted = sorted(dataset.test_edges)
    paths = {name: out_dir / name for name in CONVERTED_FILES}

    write_elliot_pairs(paths["train_elliot.tsv"], train_sorted)
    write_elliot_pairs(paths["test_elliot.tsv"], test_sorted)
    write_entity_table(paths["src_df.tsv"], range(dataset.num_users))
    write_entity_table(paths["dst_df.tsv"], range(dataset.num_items))
    write_interaction_table(paths["train_df.tsv"], dataset.items_by_user("train"))
    write_interaction_table(paths["test_df.tsv"], dataset.items_by_user("test"))
    write_target_table(paths["target_table.tsv"], train_sorted)
    return paths


def read_elliot_split(train_path, test_path, val_path=None):
    """Build a dataset from pair-format split files (indices already dense).

    Counts are inferred as max index + 1 over all splits; the ID maps are
    identity maps over those ranges.
    """
    train = read_elliot_pairs(train_path)
    test = read_elliot_pairs(test_path)
    val = read_elliot_pairs(val_path) if val_path is not None else None
    all_edges = train + test + (val or [])
    if not all_edges:
        raise DataError(train_path, 1, "no interactions in any split")
    num_users = max(u for u, _ in all_edges) + 1
    num_items = max(i for _, i in all_edges) + 1
    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train_edges=set(train),
        test_edges=set(test),
        val_edges=set(val) if val is not None else None,
    ).validate()


# ----------------------------------------------------------------------
# synthetic data with planted block structure
# ----------------------------------------------------------------------

def generate_synthetic(num_users, num_items, blocks, in_block_density,
                       cross_density, test_fraction, seed):
    """Planted-block dataset: dense interaction within user/item groups.

    Users and items are partitioned into `blocks` contiguous groups; each
    (user, item) edge is drawn independently with probability
    `in_block_density` when the two belong to the same group and
    `cross_density` otherwise. Per user, ceil(test_fraction * degree) edges
    move to the test split, capped so at least one train edge remains.
    Deterministic for a fixed seed.
    """
    if not (0.0 <= in_block_density <= 1.0 and 0.0 <= cross_density <= 1.0):
        raise ValueError("densities must lie in [0, 1]")
    if not (0.0 <= test_fraction <= 1.0):
        raise ValueError("test_fraction must lie in [0, 1]")
    if num_users < 1 or num_items < 1:
        raise ValueError("need at least one user and one item")
    if not (1 <= blocks <= min(num_users, num_items)):
        raise ValueError("blocks must satisfy 1 <= blocks <= min(num_users, num_items)")

    rng = np.random.default_rng(seed)
    user_block = np.arange(num_users) * blocks // num_users
    item_block = np.arange(num_items) * blocks // num_items
    same = user_block[:, None] == item_block[None, :]
    prob = np.where(same, in_block_density, cross_density)
    adj = rng.random((num_users, num_items)) < prob

    train_edges: set[tuple[int, int]] = set()
    test_edges: set[tuple[int, int]] = set()
    for u in range(num_users):
        items = np.flatnonzero(adj[u])
        degree = len(items)
        if degree == 0:
            continue
        n_test = math.ceil(test_fraction * degree)
        n_test = min(n_test, degree - 1)  # keep at least one train edge
        if n_test > 0:
            held = set(rng.choice(items, size=n_test, replace=False).tolist())
        else:
            held = set()
        for i in items.tolist():
            (test_edges if i in held else train_edges).add((u, int(i)))

    return InteractionDataset(
        num_users=num_users,
        num_items=num_items,
        train_edges=train_edges,
        test_edges=test_edges,
        user_id_map={f"u{k}": k for k in range(num_users)},
        item_id_map={f"i{k}": k for k in range(num_items)},
    ).validate()
