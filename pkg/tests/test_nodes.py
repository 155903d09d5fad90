"""Node attribute table: sequential vs vectorized agreement."""

import math
import random

import numpy as np
import pytest

from chainforge.clustering import ClusterStats
from chainforge.edges import (
    EdgeAggregator,
    TransferEvent,
)
from chainforge.errors import InconsistentInputs
from chainforge.nodes import (
    NODE_COLUMNS,
    build_node_table,
    compute_node_attributes,
)


def _random_events(rng, n_events, n_aliases):
    events = []
    for _ in range(n_events):
        s = rng.randrange(n_aliases)
        r = rng.randrange(n_aliases)
        if s == r:
            continue
        # Values with awkward fractional parts exercise float identity.
        v = rng.randint(1, 10**9) / rng.choice((1.0, 3.0, 7.0))
        events.append(TransferEvent(s, r, v, rng.randrange(500)))
    return events


def _edges_of(events):
    agg = EdgeAggregator()
    for e in events:
        agg.add(e.sender, e.recipient, e.value, e.block)
    return agg.records()


def test_sequential_and_vectorized_bit_identical():
    rng = random.Random(31337)
    n = 40
    events = _random_events(rng, 3_000, n)
    edges = _edges_of(events)
    seq = compute_node_attributes(events, edges.values(), num_aliases=n)

    arrays = {
        "sender": np.array([e.sender for e in events]),
        "recipient": np.array([e.recipient for e in events]),
        "value": np.array([e.value for e in events]),
        "block": np.array([e.block for e in events]),
    }
    edge_arrays = {
        "a": np.array([a for a, _ in edges]),
        "b": np.array([b for _, b in edges]),
    }
    vec = build_node_table(n, arrays, edge_arrays)

    for a in range(n):
        r = seq[a]
        assert vec["degree"][a] == r.degree
        assert vec["degree_in"][a] == r.degree_in
        assert vec["degree_out"][a] == r.degree_out
        assert vec["total_transaction_in"][a] == r.total_transaction_in
        assert vec["total_transaction_out"][a] == r.total_transaction_out
        for col, val in (("first_transaction_in", r.first_transaction_in),
                         ("last_transaction_in", r.last_transaction_in),
                         ("first_transaction_out", r.first_transaction_out),
                         ("last_transaction_out", r.last_transaction_out)):
            assert vec[col][a] == (-1 if val is None else val)
        for col, val in (("min_sent", r.min_sent), ("max_sent", r.max_sent),
                         ("min_received", r.min_received),
                         ("max_received", r.max_received)):
            got = vec[col][a]
            if val is None:
                assert math.isnan(got)
            else:
                assert got == val     # exact, not approximate
        # bincount adds weights in scan order: bit-identical totals.
        assert vec["total_sent"][a] == r.total_sent
        assert vec["total_received"][a] == r.total_received


def test_cluster_stats_passthrough():
    events = [TransferEvent(0, 1, 10.0, 3)]
    edges = _edges_of(events)
    stats = {0: ClusterStats(4, 2, 1, 3)}
    seq = compute_node_attributes(events, edges.values(), cluster_stats=stats,
                                  num_aliases=2)
    assert (seq[0].cluster_size, seq[0].cluster_num_edges,
            seq[0].cluster_num_cc, seq[0].cluster_num_nodes_in_cc) == (4, 2, 1, 3)
    assert seq[1].cluster_size == 1

    vec = build_node_table(
        2,
        {"sender": [0], "recipient": [1], "value": [10.0], "block": [3]},
        {"a": [0], "b": [1]},
        cluster={"cluster_size": [4, 1], "cluster_num_edges": [2, 0],
                 "cluster_num_cc": [1, 0], "cluster_num_nodes_in_cc": [3, 0]},
    )
    assert vec["cluster_size"].tolist() == [4, 1]


def test_isolated_alias_defaults():
    seq = compute_node_attributes([], [], num_aliases=1)
    r = seq[0]
    assert r.degree == 0
    assert r.first_transaction_in is None
    assert r.min_sent is None
    assert r.total_sent == 0.0

    vec = build_node_table(1, {"sender": [], "recipient": [], "value": [],
                               "block": []}, {"a": [], "b": []})
    assert vec["first_transaction_in"][0] == -1
    assert math.isnan(vec["min_sent"][0])
    assert vec["total_sent"][0] == 0.0
    assert set(NODE_COLUMNS) - {"label"} <= set(vec) | {"alias"}


def test_verify_rejects_edge_without_event():
    events = [TransferEvent(0, 1, 10.0, 3)]
    agg = EdgeAggregator()
    agg.add(0, 1, 10.0, 3)
    agg.add(2, 3, 5.0, 4)   # no matching event
    with pytest.raises(InconsistentInputs):
        compute_node_attributes(events, agg.records().values(), num_aliases=4)


def test_verify_rejects_count_mismatch():
    events = [TransferEvent(0, 1, 10.0, 3), TransferEvent(0, 1, 4.0, 5)]
    agg = EdgeAggregator()
    agg.add(0, 1, 10.0, 3)   # edge claims one event, stream has two
    with pytest.raises(InconsistentInputs):
        compute_node_attributes(events, agg.records().values(), num_aliases=2)


def test_out_of_range_alias_rejected():
    events = [TransferEvent(0, 9, 10.0, 3)]
    with pytest.raises(InconsistentInputs):
        compute_node_attributes(events, [], num_aliases=2, verify=False)
