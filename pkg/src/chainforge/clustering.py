"""Common-input-ownership clustering over locking scripts.

Scripts spent together as inputs of one ordinary transaction are assumed
to share an owner and are merged in a union-find structure. Coinbase
transactions and transactions excluded by the mixing/colored filters
contribute no merges. Cluster aliases are dense integers handed out in
order of each cluster's earliest registered script, so alias 0 is the
cluster containing the first script ever seen.
"""

from __future__ import annotations

from typing import Hashable, Iterable, NamedTuple

from .edges import ResolvedTransaction
from .filters import FilterVerdict


class ClusterIndex:
    """Union-find keyed by arbitrary hashable script identities."""

    __slots__ = ("parent", "rank", "script_to_slot", "slot_keys")

    def __init__(self) -> None:
        self.parent: list[int] = []
        self.rank: list[int] = []
        self.script_to_slot: dict[Hashable, int] = {}
        self.slot_keys: list[Hashable] = []

    def __len__(self) -> int:
        return len(self.parent)

    def ensure_size(self, n: int) -> None:
        """Grow to at least ``n`` anonymous slots (pre-assigned ids)."""
        start = len(self.parent)
        if n > start:
            self.parent.extend(range(start, n))
            self.rank.extend([0] * (n - start))
            self.slot_keys.extend([None] * (n - start))

    def slot(self, key: Hashable) -> int:
        """Slot of ``key``, registering it on first sight."""
        s = self.script_to_slot.get(key)
        if s is None:
            s = len(self.parent)
            self.script_to_slot[key] = s
            self.slot_keys.append(key)
            self.parent.append(s)
            self.rank.append(0)
        return s

    def find(self, slot: int) -> int:
        parent = self.parent
        root = slot
        while parent[root] != root:
            root = parent[root]
        # Path compression: point the whole chain at the root.
        while parent[slot] != root:
            parent[slot], slot = root, parent[slot]
        return root

    def union(self, a: int, b: int) -> bool:
        """Merge the sets of two slots; True if they were distinct."""
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True

    def same_cluster(self, a: Hashable, b: Hashable) -> bool:
        return self.find(self.slot(a)) == self.find(self.slot(b))


def apply_common_input_heuristic(tx: ResolvedTransaction,
                                 verdict: FilterVerdict,
                                 idx: ClusterIndex) -> int:
    """Merge the funding scripts of one transaction's inputs.

    Returns the number of union operations that actually joined two
    previously distinct sets. Coinbase and filtered transactions merge
    nothing (their scripts are not even registered here).
    """
    if tx.is_coinbase or verdict.excluded:
        return 0
    merged = 0
    first_slot = None
    for txo in tx.inputs:
        s = idx.slot(txo.script)
        if first_slot is None:
            first_slot = s
        elif idx.union(first_slot, s):
            merged += 1
    return merged


def finalize_aliases(idx: ClusterIndex) -> dict[Hashable, int]:
    """Dense alias per script, ordered by each cluster's earliest slot."""
    root_to_alias: dict[int, int] = {}
    out: dict[Hashable, int] = {}
    for slot, key in enumerate(idx.slot_keys):
        root = idx.find(slot)
        alias = root_to_alias.get(root)
        if alias is None:
            alias = len(root_to_alias)
            root_to_alias[root] = alias
        out[key] = alias
    return out


def alias_table(idx: ClusterIndex) -> list[int]:
    """Alias per slot (same assignment rule as finalize_aliases)."""
    root_to_alias: dict[int, int] = {}
    out: list[int] = []
    for slot in range(len(idx)):
        root = idx.find(slot)
        alias = root_to_alias.get(root)
        if alias is None:
            alias = len(root_to_alias)
            root_to_alias[root] = alias
        out.append(alias)
    return out


class ClusterStats(NamedTuple):
    cluster_size: int
    cluster_num_edges: int
    cluster_num_cc: int
    cluster_num_nodes_in_cc: int


def cluster_internal_stats(members: Iterable[Hashable],
                           intra_transfers: Iterable[tuple[Hashable, Hashable]],
                           ) -> ClusterStats:
    """Script-level connectivity of one cluster.

    ``cluster_size`` counts member scripts; the remaining figures look
    only at scripts that took part in at least one intra-cluster
    transfer: distinct directed pairs, connected components (ignoring
    direction), and participating scripts.
    """
    size = len(set(members))
    pairs = set(intra_transfers)
    parent: dict[Hashable, Hashable] = {}

    def find(x: Hashable) -> Hashable:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for s, r in pairs:
        rs, rr = find(s), find(r)
        if rs != rr:
            parent[rr] = rs
    endpoints = {e for pair in pairs for e in pair}
    roots = {find(e) for e in endpoints}
    return ClusterStats(size, len(pairs), len(roots), len(endpoints))


class IntraClusterAccumulator:
    """Streaming per-alias collection of intra-cluster script transfers."""

    def __init__(self) -> None:
        self._pairs: dict[int, set] = {}
        self._parent: dict[Hashable, Hashable] = {}

    def add(self, alias: int, sender_script: Hashable,
            recipient_script: Hashable) -> None:
        self._pairs.setdefault(alias, set()).add((sender_script, recipient_script))
        self._union(sender_script, recipient_script)

    def _find(self, x: Hashable) -> Hashable:
        parent = self._parent
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def _union(self, a: Hashable, b: Hashable) -> None:
        ra, rb = self._find(a), self._find(b)
        if ra != rb:
            self._parent[rb] = ra

    def aliases(self) -> Iterable[int]:
        return self._pairs.keys()

    def stats_for(self, alias: int, cluster_size: int) -> ClusterStats:
        pairs = self._pairs.get(alias)
        if not pairs:
            return ClusterStats(cluster_size, 0, 0, 0)
        endpoints = {e for pair in pairs for e in pair}
        roots = {self._find(e) for e in endpoints}
        return ClusterStats(cluster_size, len(pairs), len(roots), len(endpoints))
