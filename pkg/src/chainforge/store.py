"""Node/edge persistence with adjacency indexes.

Tables live in two interchangeable forms: canonical CSVs (the published
schemas) and a binary store directory holding the same records as sorted
fixed-width rows. The binary form keeps a forward (a-sorted) and a
reverse (b-sorted) copy of the edge table plus per-alias offset arrays,
so incident edges of any node are two slice lookups. CSV export of an
imported CSV reproduces the input byte for byte: rows are canonically
ordered and numbers formatted by one shared rule.

Aliases must be dense (0..n-1); the node table is addressed by alias.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterator

import numpy as np
import pandas as pd

from .edges import EdgeRecord
from .errors import DuplicateEdgeKey, IoFailure, SchemaMismatch, UnknownAlias
from .nodes import NODE_COLUMNS

STORE_VERSION = "gs1"

EDGE_COLUMNS = ("a", "b", "reveal", "last_seen", "total",
                "min_sent", "max_sent", "total_sent")

# Node CSV columns, minus alias/label, grouped by cell encoding.
_NODE_INT_COLS = ("degree", "degree_in", "degree_out",
                  "total_transaction_in", "total_transaction_out",
                  "cluster_size", "cluster_num_edges", "cluster_num_cc",
                  "cluster_num_nodes_in_cc")
_NODE_BLOCK_COLS = ("first_transaction_in", "last_transaction_in",
                    "first_transaction_out", "last_transaction_out")
_NODE_VALUE_COLS = ("min_sent", "max_sent", "total_sent",
                    "min_received", "max_received", "total_received")

NODE_DTYPE = np.dtype(
    [("alias", "<i8"), ("label", "<i2")]
    + [(c, "<i8") for c in _NODE_INT_COLS]
    + [(c, "<i8") for c in _NODE_BLOCK_COLS]
    + [(c, "<f8") for c in _NODE_VALUE_COLS]
)
EDGE_DTYPE = np.dtype([("a", "<i8"), ("b", "<i8"), ("reveal", "<i8"),
                       ("last_seen", "<i8"), ("total", "<i8"),
                       ("min_sent", "<f8"), ("max_sent", "<f8"),
                       ("total_sent", "<f8")])

_LAYOUT_DOC = """graph store layout, version {version}
meta.json        counts, label vocabulary, dtype descriptions
nodes.bin        node rows sorted by alias, fixed width {node_width} bytes
edges_fwd.bin    edge rows sorted by (a, b), fixed width {edge_width} bytes
edges_rev.bin    identical records sorted by (b, a)
offsets_fwd.bin  int64 x (n+1): edges_fwd row range per alias a
offsets_rev.bin  int64 x (n+1): edges_rev row range per alias b
All integers little-endian; values are IEEE float64; label column is an
index into the vocabulary in meta.json, -1 meaning unlabeled; absent
block fields are -1; absent value fields are NaN.
"""


def format_number(x: float) -> str:
    """Canonical CSV cell for a real value; NaN is an empty cell."""
    x = float(x)
    if math.isnan(x):
        return ""
    if x == int(x) and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def format_block(x: int) -> str:
    return "" if x < 0 else str(int(x))


def write_edges_csv(path, edges: dict[str, np.ndarray]) -> None:
    """Edge table CSV; caller provides arrays already sorted by (a, b)."""
    a, b = edges["a"], edges["b"]
    reveal, last_seen = edges["reveal"], edges["last_seen"]
    total = edges["total"]
    mn, mx, sm = edges["min_sent"], edges["max_sent"], edges["total_sent"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(EDGE_COLUMNS) + "\n")
        for i in range(len(a)):
            fh.write(f"{a[i]},{b[i]},{reveal[i]},{last_seen[i]},{total[i]},"
                     f"{format_number(mn[i])},{format_number(mx[i])},"
                     f"{format_number(sm[i])}\n")


def write_nodes_csv(path, table: dict[str, np.ndarray],
                    labels: list[str] | None = None) -> None:
    """Node table CSV in alias order; ``labels`` maps alias to category."""
    n = len(table["alias"])
    cols = {name: table[name] for name in NODE_COLUMNS
            if name not in ("alias", "label")}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(NODE_COLUMNS) + "\n")
        for i in range(n):
            label = labels[i] if labels is not None else ""
            cells = [str(i), label]
            for name in NODE_COLUMNS[2:]:
                v = cols[name][i]
                if name in _NODE_BLOCK_COLS:
                    cells.append(format_block(v))
                elif name in _NODE_VALUE_COLS:
                    cells.append(format_number(v))
                else:
                    cells.append(str(int(v)))
            fh.write(",".join(cells) + "\n")


def _check_header(path, expected: tuple[str, ...]) -> None:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
    if header.split(",") != list(expected):
        raise SchemaMismatch(f"{path}: header {header!r} does not match "
                             f"{','.join(expected)!r}")


def read_nodes_csv(path) -> tuple[dict[str, np.ndarray], list[str]]:
    """Node CSV into column arrays (-1/NaN sentinels) plus label strings."""
    _check_header(path, NODE_COLUMNS)
    df = pd.read_csv(path, dtype={"label": "string"},
                     float_precision="round_trip")
    if list(df.columns) != list(NODE_COLUMNS):
        raise SchemaMismatch(f"{path}: unexpected columns {list(df.columns)}")
    aliases = df["alias"].to_numpy(dtype=np.int64)
    n = len(aliases)
    if not np.array_equal(aliases, np.arange(n)):
        raise SchemaMismatch(f"{path}: aliases must be dense and sorted")
    table: dict[str, np.ndarray] = {"alias": aliases}
    for name in _NODE_INT_COLS:
        table[name] = df[name].to_numpy(dtype=np.int64)
    for name in _NODE_BLOCK_COLS:
        col = df[name].to_numpy(dtype=np.float64)
        out = np.full(n, -1, dtype=np.int64)
        present = ~np.isnan(col)
        out[present] = col[present].astype(np.int64)
        table[name] = out
    for name in _NODE_VALUE_COLS:
        table[name] = df[name].to_numpy(dtype=np.float64)
    labels = ["" if pd.isna(x) else str(x) for x in df["label"]]
    return table, labels


def read_edges_csv(path) -> dict[str, np.ndarray]:
    _check_header(path, EDGE_COLUMNS)
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns) != list(EDGE_COLUMNS):
        raise SchemaMismatch(f"{path}: unexpected columns {list(df.columns)}")
    out = {name: df[name].to_numpy(dtype=np.int64)
           for name in ("a", "b", "reveal", "last_seen", "total")}
    for name in ("min_sent", "max_sent", "total_sent"):
        out[name] = df[name].to_numpy(dtype=np.float64)
    return out


def _sort_edges(edges: dict[str, np.ndarray], by_b: bool) -> np.ndarray:
    """Edge columns into a structured array sorted by (a,b) or (b,a)."""
    m = len(edges["a"])
    arr = np.empty(m, dtype=EDGE_DTYPE)
    for name in EDGE_COLUMNS:
        arr[name] = edges[name]
    keys = (arr["a"], arr["b"]) if by_b else (arr["b"], arr["a"])
    order = np.lexsort(keys)   # last key is primary
    return arr[order]


def _offsets(sorted_keys: np.ndarray, n: int) -> np.ndarray:
    return np.searchsorted(sorted_keys, np.arange(n + 1)).astype(np.int64)


class GraphStore:
    """Immutable node/edge store over one directory."""

    def __init__(self, root: Path, nodes: np.ndarray, labels: list[str],
                 fwd: np.ndarray, rev: np.ndarray,
                 off_fwd: np.ndarray, off_rev: np.ndarray) -> None:
        self.root = Path(root)
        self._nodes = nodes
        self._vocab = labels
        self._fwd = fwd
        self._rev = rev
        self._off_fwd = off_fwd
        self._off_rev = off_rev

    # -- construction -----------------------------------------------------

    @classmethod
    def build(cls, root, node_table: dict[str, np.ndarray],
              node_labels: list[str], edges: dict[str, np.ndarray],
              ) -> "GraphStore":
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        n = len(node_table["alias"])

        vocab = sorted({lb for lb in node_labels if lb})
        vocab_index = {lb: i for i, lb in enumerate(vocab)}
        nodes = np.empty(n, dtype=NODE_DTYPE)
        nodes["alias"] = node_table["alias"]
        nodes["label"] = np.array(
            [vocab_index.get(lb, -1) for lb in node_labels], dtype=np.int16)
        for name in _NODE_INT_COLS + _NODE_BLOCK_COLS + _NODE_VALUE_COLS:
            nodes[name] = node_table[name]

        fwd = _sort_edges(edges, by_b=False)
        if len(fwd) > 1:
            same = (fwd["a"][1:] == fwd["a"][:-1]) & \
                   (fwd["b"][1:] == fwd["b"][:-1])
            if bool(np.any(same)):
                i = int(np.flatnonzero(same)[0]) + 1
                raise DuplicateEdgeKey(
                    f"duplicate edge key ({fwd['a'][i]}, {fwd['b'][i]})")
        if len(fwd) and (fwd["a"].min() < 0 or fwd["a"].max() >= n
                         or fwd["b"].min() < 0 or fwd["b"].max() >= n):
            raise SchemaMismatch("edge endpoint outside alias range")
        rev = _sort_edges(edges, by_b=True)
        off_fwd = _offsets(fwd["a"], n)
        off_rev = _offsets(rev["b"], n)

        nodes.tofile(root / "nodes.bin")
        fwd.tofile(root / "edges_fwd.bin")
        rev.tofile(root / "edges_rev.bin")
        off_fwd.tofile(root / "offsets_fwd.bin")
        off_rev.tofile(root / "offsets_rev.bin")
        meta = {
            "version": STORE_VERSION,
            "nodes": int(n),
            "edges": int(len(fwd)),
            "labels": vocab,
            "node_dtype": NODE_DTYPE.descr,
            "edge_dtype": EDGE_DTYPE.descr,
        }
        (root / "meta.json").write_text(json.dumps(meta, indent=1),
                                        encoding="utf-8")
        (root / "LAYOUT").write_text(
            _LAYOUT_DOC.format(version=STORE_VERSION,
                               node_width=NODE_DTYPE.itemsize,
                               edge_width=EDGE_DTYPE.itemsize),
            encoding="utf-8")
        return cls(root, nodes, vocab, fwd, rev, off_fwd, off_rev)

    @classmethod
    def open(cls, root) -> "GraphStore":
        root = Path(root)
        try:
            meta = json.loads((root / "meta.json").read_text(encoding="utf-8"))
        except OSError as exc:
            raise IoFailure(f"cannot open store at {root}: {exc}") from exc
        if meta.get("version") != STORE_VERSION:
            raise SchemaMismatch(f"store version {meta.get('version')!r}, "
                                 f"expected {STORE_VERSION!r}")
        n, m = meta["nodes"], meta["edges"]

        def load(name, dtype, count):
            arr = np.fromfile(root / name, dtype=dtype)
            if len(arr) != count:
                raise SchemaMismatch(f"{name}: {len(arr)} rows, meta says {count}")
            return arr

        nodes = load("nodes.bin", NODE_DTYPE, n)
        fwd = load("edges_fwd.bin", EDGE_DTYPE, m)
        rev = load("edges_rev.bin", EDGE_DTYPE, m)
        off_fwd = load("offsets_fwd.bin", np.int64, n + 1)
        off_rev = load("offsets_rev.bin", np.int64, n + 1)
        return cls(root, nodes, meta["labels"], fwd, rev, off_fwd, off_rev)

    # -- queries ----------------------------------------------------------

    @property
    def num_nodes(self) -> int:
        return len(self._nodes)

    @property
    def num_edges(self) -> int:
        return len(self._fwd)

    def _check_alias(self, alias: int) -> None:
        if not 0 <= alias < len(self._nodes):
            raise UnknownAlias(f"alias {alias} not in store")

    def label(self, alias: int) -> str:
        self._check_alias(alias)
        idx = int(self._nodes["label"][alias])
        return self._vocab[idx] if idx >= 0 else ""

    def out_block(self, alias: int) -> np.ndarray:
        self._check_alias(alias)
        return self._fwd[self._off_fwd[alias]:self._off_fwd[alias + 1]]

    def in_block(self, alias: int) -> np.ndarray:
        self._check_alias(alias)
        return self._rev[self._off_rev[alias]:self._off_rev[alias + 1]]

    def degree(self, alias: int) -> int:
        return len(self.out_block(alias)) + len(self.in_block(alias))

    def neighbor_aliases(self, alias: int) -> np.ndarray:
        """Counterparties in both directions (may repeat across directions)."""
        return np.concatenate([self.out_block(alias)["b"],
                               self.in_block(alias)["a"]])

    def adjacency(self, alias: int, direction: str = "both",
                  ) -> Iterator[EdgeRecord]:
        if direction not in ("out", "in", "both"):
            raise ValueError(f"direction {direction!r}")
        blocks = []
        if direction in ("out", "both"):
            blocks.append(self.out_block(alias))
        if direction in ("in", "both"):
            blocks.append(self.in_block(alias))
        for block in blocks:
            for row in block:
                yield EdgeRecord(int(row["a"]), int(row["b"]),
                                 int(row["reveal"]), int(row["last_seen"]),
                                 int(row["total"]), float(row["min_sent"]),
                                 float(row["max_sent"]), float(row["total_sent"]))

    def random_edge_sample(self, alias: int, k: int, rng) -> list[EdgeRecord]:
        """k incident records uniform without replacement (all if degree ≤ k)."""
        out = self.out_block(alias)
        inc = self.in_block(alias)
        deg = len(out) + len(inc)

        def record(i: int):
            row = out[i] if i < len(out) else inc[i - len(out)]
            return EdgeRecord(int(row["a"]), int(row["b"]), int(row["reveal"]),
                              int(row["last_seen"]), int(row["total"]),
                              float(row["min_sent"]), float(row["max_sent"]),
                              float(row["total_sent"]))

        if deg <= k:
            return [record(i) for i in range(deg)]
        return [record(i) for i in rng.sample(range(deg), k)]

    # -- export -----------------------------------------------------------

    def node_table(self) -> tuple[dict[str, np.ndarray], list[str]]:
        table = {name: self._nodes[name].copy()
                 for name in ("alias",) + _NODE_INT_COLS + _NODE_BLOCK_COLS
                 + _NODE_VALUE_COLS}
        idx = self._nodes["label"]
        labels = ["" if i < 0 else self._vocab[i] for i in idx]
        return table, labels

    def edge_table(self) -> dict[str, np.ndarray]:
        return {name: self._fwd[name].copy() for name in EDGE_COLUMNS}

    def export_csv(self, nodes_path, edges_path) -> None:
        table, labels = self.node_table()
        write_nodes_csv(nodes_path, table, labels)
        write_edges_csv(edges_path, self.edge_table())

    def export_sql(self, path, batch: int = 500) -> None:
        """Portable DDL + bulk INSERTs for both tables."""
        def node_values(i: int) -> str:
            row = self._nodes[i]
            idx = int(row["label"])
            cells = [str(int(row["alias"])),
                     "'" + self._vocab[idx] + "'" if idx >= 0 else "NULL"]
            for name in NODE_COLUMNS[2:]:
                v = row[name]
                if name in _NODE_BLOCK_COLS:
                    cells.append("NULL" if v < 0 else str(int(v)))
                elif name in _NODE_VALUE_COLS:
                    cells.append("NULL" if math.isnan(v) else repr(float(v)))
                else:
                    cells.append(str(int(v)))
            return "(" + ", ".join(cells) + ")"

        def edge_values(i: int) -> str:
            row = self._fwd[i]
            return "(" + ", ".join(
                [str(int(row[c])) for c in ("a", "b", "reveal",
                                            "last_seen", "total")]
                + [repr(float(row[c])) for c in ("min_sent", "max_sent",
                                                 "total_sent")]) + ")"

        def column_ddl(name: str) -> str:
            if name == "label":
                return "label TEXT"
            if name in _NODE_VALUE_COLS:
                return f"{name} DOUBLE PRECISION"
            return f"{name} BIGINT"

        try:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("CREATE TABLE nodes (\n  "
                         + ",\n  ".join(column_ddl(c) for c in NODE_COLUMNS)
                         + "\n);\n")
                fh.write("CREATE TABLE edges (\n  "
                         + ",\n  ".join(
                             f"{c} DOUBLE PRECISION" if c.endswith("sent")
                             else f"{c} BIGINT" for c in EDGE_COLUMNS)
                         + "\n);\n")
                for start in range(0, len(self._nodes), batch):
                    stop = min(start + batch, len(self._nodes))
                    fh.write("INSERT INTO nodes VALUES\n"
                             + ",\n".join(node_values(i)
                                          for i in range(start, stop))
                             + ";\n")
                for start in range(0, len(self._fwd), batch):
                    stop = min(start + batch, len(self._fwd))
                    fh.write("INSERT INTO edges VALUES\n"
                             + ",\n".join(edge_values(i)
                                          for i in range(start, stop))
                             + ";\n")
        except OSError as exc:
            raise IoFailure(f"sql export failed: {exc}") from exc


def import_csv(nodes_path, edges_path, store_dir) -> GraphStore:
    """Build a binary store from the canonical CSV pair."""
    table, labels = read_nodes_csv(nodes_path)
    edges = read_edges_csv(edges_path)
    return GraphStore.build(store_dir, table, labels, edges)
