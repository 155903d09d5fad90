"""Per-alias activity attributes.

Aggregates the transfer-event stream and the edge table into one record
per alias: event counts, first/last activity blocks, sent/received value
summaries, counterparty degrees, and the owning cluster's script-level
connectivity figures. Two implementations are provided: a dict-based one
for small graphs and tests, and a vectorized one over numpy arrays used
by the pipeline. Both accumulate floating-point totals in event-stream
order so their CSV output is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .clustering import ClusterStats
from .edges import EdgeRecord, TransferEvent
from .errors import InconsistentInputs

NODE_COLUMNS = (
    "alias", "label", "degree", "degree_in", "degree_out",
    "total_transaction_in", "total_transaction_out",
    "first_transaction_in", "last_transaction_in",
    "first_transaction_out", "last_transaction_out",
    "min_sent", "max_sent", "total_sent",
    "min_received", "max_received", "total_received",
    "cluster_size", "cluster_num_edges", "cluster_num_cc",
    "cluster_num_nodes_in_cc",
)


@dataclass
class NodeRecord:
    alias: int
    label: str = ""
    degree: int = 0
    degree_in: int = 0
    degree_out: int = 0
    total_transaction_in: int = 0
    total_transaction_out: int = 0
    first_transaction_in: int | None = None
    last_transaction_in: int | None = None
    first_transaction_out: int | None = None
    last_transaction_out: int | None = None
    min_sent: float | None = None
    max_sent: float | None = None
    total_sent: float = 0.0
    min_received: float | None = None
    max_received: float | None = None
    total_received: float = 0.0
    cluster_size: int = 1
    cluster_num_edges: int = 0
    cluster_num_cc: int = 0
    cluster_num_nodes_in_cc: int = 0


def compute_node_attributes(events: Iterable[TransferEvent],
                            edges: Iterable[EdgeRecord],
                            cluster_stats: Mapping[int, ClusterStats] | None = None,
                            num_aliases: int | None = None,
                            verify: bool = True) -> dict[int, NodeRecord]:
    """One NodeRecord per alias.

    ``events`` must be in canonical stream order; totals are accumulated
    in that order. With ``verify`` the edge table is checked against the
    events (every edge needs a matching event and the counts must add
    up), raising InconsistentInputs otherwise.
    """
    records: dict[int, NodeRecord] = {}
    if num_aliases is not None:
        records = {a: NodeRecord(alias=a) for a in range(num_aliases)}

    def rec(alias: int) -> NodeRecord:
        r = records.get(alias)
        if r is None:
            if num_aliases is not None:
                raise InconsistentInputs(f"alias {alias} out of range")
            r = records[alias] = NodeRecord(alias=alias)
        return r

    pair_events = 0
    pairs: set[tuple[int, int]] = set()
    for ev in events:
        s, r = rec(ev.sender), rec(ev.recipient)
        s.total_transaction_out += 1
        r.total_transaction_in += 1
        if s.first_transaction_out is None or ev.block < s.first_transaction_out:
            s.first_transaction_out = ev.block
        if s.last_transaction_out is None or ev.block > s.last_transaction_out:
            s.last_transaction_out = ev.block
        if r.first_transaction_in is None or ev.block < r.first_transaction_in:
            r.first_transaction_in = ev.block
        if r.last_transaction_in is None or ev.block > r.last_transaction_in:
            r.last_transaction_in = ev.block
        if s.min_sent is None or ev.value < s.min_sent:
            s.min_sent = ev.value
        if s.max_sent is None or ev.value > s.max_sent:
            s.max_sent = ev.value
        s.total_sent += ev.value
        if r.min_received is None or ev.value < r.min_received:
            r.min_received = ev.value
        if r.max_received is None or ev.value > r.max_received:
            r.max_received = ev.value
        r.total_received += ev.value
        pair_events += 1
        if verify:
            pairs.add((ev.sender, ev.recipient))

    edge_total = 0
    for edge in edges:
        if verify and (edge.a, edge.b) not in pairs:
            raise InconsistentInputs(
                f"edge ({edge.a}, {edge.b}) has no supporting transfer event")
        edge_total += edge.total
        rec(edge.a).degree_out += 1
        rec(edge.b).degree_in += 1
    if verify and edge_total != pair_events:
        raise InconsistentInputs(
            f"edge table counts {edge_total} events, stream has {pair_events}")

    if cluster_stats:
        for alias, stats in cluster_stats.items():
            r = rec(alias)
            (r.cluster_size, r.cluster_num_edges,
             r.cluster_num_cc, r.cluster_num_nodes_in_cc) = stats
    for r in records.values():
        r.degree = r.degree_in + r.degree_out
    return records


def build_node_table(num_aliases: int,
                     events: Mapping[str, np.ndarray],
                     edges: Mapping[str, np.ndarray],
                     cluster: Mapping[str, np.ndarray] | None = None,
                     ) -> dict[str, np.ndarray]:
    """Vectorized equivalent of compute_node_attributes.

    ``events`` holds parallel arrays sender/recipient/value/block in
    stream order; ``edges`` holds a/b. Missing temporal cells use -1,
    missing min/max use NaN. np.bincount adds weights in scan order, so
    float totals match the sequential implementation exactly.
    """
    n = num_aliases
    s = np.asarray(events["sender"], dtype=np.int64)
    r = np.asarray(events["recipient"], dtype=np.int64)
    v = np.asarray(events["value"], dtype=np.float64)
    blk = np.asarray(events["block"], dtype=np.int64)

    out: dict[str, np.ndarray] = {}
    out["alias"] = np.arange(n, dtype=np.int64)
    out["total_transaction_out"] = np.bincount(s, minlength=n).astype(np.int64)
    out["total_transaction_in"] = np.bincount(r, minlength=n).astype(np.int64)
    out["total_sent"] = np.bincount(s, weights=v, minlength=n)
    out["total_received"] = np.bincount(r, weights=v, minlength=n)

    def extreme(idx, values, ufunc, init):
        arr = np.full(n, init, dtype=values.dtype)
        ufunc.at(arr, idx, values)
        return arr

    first_out = extreme(s, blk, np.minimum, np.iinfo(np.int64).max)
    last_out = extreme(s, blk, np.maximum, -1)
    first_in = extreme(r, blk, np.minimum, np.iinfo(np.int64).max)
    last_in = extreme(r, blk, np.maximum, -1)
    first_out[out["total_transaction_out"] == 0] = -1
    first_in[out["total_transaction_in"] == 0] = -1
    out["first_transaction_out"] = first_out
    out["last_transaction_out"] = last_out
    out["first_transaction_in"] = first_in
    out["last_transaction_in"] = last_in

    out["min_sent"] = extreme(s, v, np.minimum, np.inf)
    out["max_sent"] = extreme(s, v, np.maximum, -np.inf)
    out["min_received"] = extreme(r, v, np.minimum, np.inf)
    out["max_received"] = extreme(r, v, np.maximum, -np.inf)
    for col, counts in (("min_sent", "total_transaction_out"),
                        ("max_sent", "total_transaction_out"),
                        ("min_received", "total_transaction_in"),
                        ("max_received", "total_transaction_in")):
        out[col][out[counts] == 0] = np.nan

    ea = np.asarray(edges["a"], dtype=np.int64)
    eb = np.asarray(edges["b"], dtype=np.int64)
    out["degree_out"] = np.bincount(ea, minlength=n).astype(np.int64)
    out["degree_in"] = np.bincount(eb, minlength=n).astype(np.int64)
    out["degree"] = out["degree_in"] + out["degree_out"]

    if cluster is None:
        out["cluster_size"] = np.ones(n, dtype=np.int64)
        for col in ("cluster_num_edges", "cluster_num_cc",
                    "cluster_num_nodes_in_cc"):
            out[col] = np.zeros(n, dtype=np.int64)
    else:
        for col in ("cluster_size", "cluster_num_edges", "cluster_num_cc",
                    "cluster_num_nodes_in_cc"):
            out[col] = np.asarray(cluster[col], dtype=np.int64)
    return out
