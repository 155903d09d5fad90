"""Value-transfer derivation and edge aggregation.

Each unfiltered, non-coinbase transaction is decomposed into transfer
events between aliases: an alias's net received value is its output sum
minus its input sum; aliases with negative net are senders, positive net
recipients, and each sender-recipient event carries the sender's share of
the sender-side gross input times the recipient's net gain. Satoshi sums
stay below 2^53, so the integer arithmetic is exact in float64; only the
proportional split rounds.

Event emission order is canonical (senders by first appearance in the
inputs, recipients by first appearance in the outputs, sender-major), so
downstream floating-point aggregates are reproducible byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable

from .errors import AliasAbsent


@dataclass(frozen=True)
class ResolvedTxo:
    value: float          # satoshis
    alias: int
    script: Hashable = None   # funding/locking script identity


@dataclass
class ResolvedTransaction:
    inputs: list[ResolvedTxo]
    outputs: list[ResolvedTxo]
    block_height: int
    is_coinbase: bool = False


@dataclass(frozen=True)
class TransferEvent:
    sender: int
    recipient: int
    value: float
    block: int


@dataclass
class EdgeRecord:
    a: int
    b: int
    reveal: int
    last_seen: int
    total: int
    min_sent: float
    max_sent: float
    total_sent: float


def net_value(tx: ResolvedTransaction, alias: int) -> float:
    """Output sum minus input sum for ``alias`` within ``tx``."""
    present = False
    total = 0.0
    for txo in tx.outputs:
        if txo.alias == alias:
            present = True
            total += txo.value
    for txo in tx.inputs:
        if txo.alias == alias:
            present = True
            total -= txo.value
    if not present:
        raise AliasAbsent(f"alias {alias} not part of transaction")
    return total


def split_transfers(inputs: Iterable[tuple[Hashable, float]],
                    outputs: Iterable[tuple[Hashable, float]],
                    ) -> list[tuple[Hashable, Hashable, float]]:
    """Proportional sender->recipient attribution over (identity, value) pairs.

    Identities with net < 0 send, net > 0 receive; each sender's share is
    its gross input over the senders' combined gross input. Senders keep
    input order, recipients output order, events come sender-major.
    """
    net: dict[Hashable, float] = {}
    gross_in: dict[Hashable, float] = {}
    in_order: list[Hashable] = []
    out_order: list[Hashable] = []
    for k, value in inputs:
        if k not in gross_in:
            gross_in[k] = 0.0
            in_order.append(k)
        gross_in[k] += value
        net[k] = net.get(k, 0.0) - value
    out_seen: set[Hashable] = set()
    for k, value in outputs:
        if k not in out_seen:
            out_seen.add(k)
            out_order.append(k)
        net[k] = net.get(k, 0.0) + value

    senders = [k for k in in_order if net[k] < 0]
    recipients = [k for k in out_order if net[k] > 0]

    if not senders or not recipients:
        return []
    total_sent = sum(gross_in[s] for s in senders)
    events = []
    for s in senders:
        share = gross_in[s] / total_sent
        for r in recipients:
            events.append((s, r, share * net[r]))
    return events


def attribute_transfers(tx: ResolvedTransaction) -> list[TransferEvent]:
    """Alias-level transfer events of one transaction (empty for coinbase)."""
    if tx.is_coinbase:
        return []
    return [
        TransferEvent(s, r, v, tx.block_height)
        for s, r, v in split_transfers(((t.alias, t.value) for t in tx.inputs),
                                       ((t.alias, t.value) for t in tx.outputs))
    ]


def script_transfers(tx: ResolvedTransaction) -> list[tuple[Hashable, Hashable]]:
    """Script-granularity sender->recipient pairs (for intra-cluster stats)."""
    if tx.is_coinbase:
        return []
    return [
        (s, r)
        for s, r, _ in split_transfers(((t.script, t.value) for t in tx.inputs),
                                       ((t.script, t.value) for t in tx.outputs))
    ]


class EdgeAggregator:
    """Streaming (a, b) aggregation: first/last block, count, min/max/sum."""

    __slots__ = ("_table",)

    def __init__(self) -> None:
        self._table: dict[tuple[int, int], list] = {}

    def add(self, sender: int, recipient: int, value: float, block: int) -> None:
        cell = self._table.get((sender, recipient))
        if cell is None:
            self._table[(sender, recipient)] = [block, block, 1, value, value, value]
        else:
            if block < cell[0]:
                cell[0] = block
            if block > cell[1]:
                cell[1] = block
            cell[2] += 1
            if value < cell[3]:
                cell[3] = value
            if value > cell[4]:
                cell[4] = value
            cell[5] += value

    def records(self) -> dict[tuple[int, int], EdgeRecord]:
        return {
            (a, b): EdgeRecord(a, b, *cell)
            for (a, b), cell in self._table.items()
        }

    def __len__(self) -> int:
        return len(self._table)


def aggregate_edges(events: Iterable[TransferEvent]) -> dict[tuple[int, int], EdgeRecord]:
    """One EdgeRecord per ordered (sender, recipient) pair with any event."""
    agg = EdgeAggregator()
    for ev in events:
        agg.add(ev.sender, ev.recipient, ev.value, ev.block)
    return agg.records()
