"""Address labels and their propagation onto clusters.

Labeled addresses come from CSV files (``address,label,source[,entity]``).
Each address is expanded to the locking scripts it can unlock, those
scripts vote their category onto the cluster that owns them, and a
cluster that hears two distinct categories keeps no label at all. An
extra source of labels is coinbase input scripts, where mining pools
leave recognizable text.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, NamedTuple

from .errors import InvalidAddress, MalformedRow, UnknownCategory
from .script import address_to_script_ids, script_to_address
from .wire import Block, RawTransaction

# Closed category set; order is the canonical class order everywhere.
CATEGORIES = (
    "individual", "mining", "exchange", "marketplace", "gambling",
    "bet", "faucet", "mixer", "ponzi", "ransomware", "bridge",
)
_CATEGORY_SET = frozenset(CATEGORIES)


@dataclass(frozen=True)
class LabelRecord:
    address: str
    category: str
    source: str
    entity_name: str | None = None


class ClusterLabel(NamedTuple):
    alias: int
    category: str
    contributing: int


class PropagationReport(NamedTuple):
    labels: list[ClusterLabel]
    unmatched: list[str]
    conflicted: list[int]


def load_labels(path, rejects: list | None = None) -> list[LabelRecord]:
    """Parse a label CSV.

    Rows with a category outside the closed set are collected and raised
    as one UnknownCategory (or appended to ``rejects`` and skipped when a
    list is supplied). Structural problems raise MalformedRow.
    """
    records: list[LabelRecord] = []
    bad: list[str] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if header[:3] != ["address", "label", "source"] or \
                header[3:] not in ([], ["entity"]):
            raise MalformedRow(f"unexpected label header: {header!r}")
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise MalformedRow(f"line {lineno}: expected {width} fields, "
                                   f"got {len(row)}")
            address, category, source = row[0], row[1], row[2]
            if not address or not category:
                raise MalformedRow(f"line {lineno}: empty address or label")
            if category not in _CATEGORY_SET:
                bad.append(f"line {lineno}: {category!r}")
                continue
            entity = row[3] if width == 4 and row[3] else None
            records.append(LabelRecord(address, category, source, entity))
    if bad:
        if rejects is not None:
            rejects.extend(bad)
        else:
            raise UnknownCategory("; ".join(bad))
    return records


def propagate(labels: Iterable[LabelRecord],
              cluster_map: Mapping[bytes, int],
              script_index: Callable[[str], list[bytes]] = address_to_script_ids,
              ) -> PropagationReport:
    """Assign one category per cluster from address labels.

    Every script an address can unlock votes the address's category onto
    the script's cluster. Clusters with two or more distinct categories
    are conflicted and get no label. Addresses whose scripts never
    appear on chain (or that do not parse) are reported as unmatched.
    """
    votes: dict[int, dict[str, int]] = {}
    unmatched: list[str] = []
    for rec in labels:
        try:
            script_ids = script_index(rec.address)
        except InvalidAddress:
            unmatched.append(rec.address)
            continue
        aliases = {cluster_map[sid] for sid in script_ids if sid in cluster_map}
        if not aliases:
            unmatched.append(rec.address)
            continue
        for alias in aliases:
            per = votes.setdefault(alias, {})
            per[rec.category] = per.get(rec.category, 0) + 1

    out: list[ClusterLabel] = []
    conflicted: list[int] = []
    for alias in sorted(votes):
        per = votes[alias]
        if len(per) > 1:
            conflicted.append(alias)
            continue
        category, count = next(iter(per.items()))
        out.append(ClusterLabel(alias, category, count))
    return PropagationReport(out, unmatched, conflicted)


def coinbase_tags_from_txs(coinbases: Iterable[RawTransaction],
                           patterns: list[tuple[str | bytes, str]],
                           ) -> list[LabelRecord]:
    """Mining labels mined out of coinbase input scripts.

    ``patterns`` holds (substring, entity) pairs; the first matching
    substring wins. Every output of a matching coinbase whose script has
    an address form is labeled ``mining``.
    """
    needles = [(p.encode("utf-8") if isinstance(p, str) else p, entity)
               for p, entity in patterns]
    if not needles:
        raise ValueError("patterns must be non-empty")
    out: list[LabelRecord] = []
    for coinbase in coinbases:
        if not coinbase.is_coinbase or not coinbase.inputs:
            continue
        message = coinbase.inputs[0].unlock_script
        entity = next((e for needle, e in needles if needle in message), None)
        if entity is None:
            continue
        for txo in coinbase.outputs:
            address = script_to_address(txo.lock_script)
            if address is not None:
                out.append(LabelRecord(address, "mining", "coinbase", entity))
    return out


def extract_coinbase_tags(blocks: Iterable[Block],
                          patterns: list[tuple[str | bytes, str]],
                          ) -> list[LabelRecord]:
    """Block-stream form of coinbase_tags_from_txs."""
    return coinbase_tags_from_txs(
        (b.transactions[0] for b in blocks if b.transactions), patterns)


def load_patterns(path) -> list[tuple[str, str]]:
    """Pattern file: one ``substring,entity`` pair per line."""
    pairs: list[tuple[str, str]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise MalformedRow(f"pattern rows need 2 fields: {row!r}")
            pairs.append((row[0], row[1]))
    return pairs
