"""Readers for pre-sampled neighborhood buffers.

A buffer directory holds one split: a ``manifest.json`` plus one ``.nbr``
text file per (seed, copy) pair.  The format is the hand-off surface of the
upstream sampler, so this module parses it from scratch and trusts nothing
beyond the documented layout:

    # neighborhood nb1
    seed,<int>
    copy,<int>
    config,<16 hex chars>
    nodes,<n>
    <alias>,<label>,<f1>,...,<fd>     n rows
    edges,<m>
    <u>,<v>                           m rows

Aliases are global ids; edges reference aliases, not row positions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = "# neighborhood nb1"


class BufferError(Exception):
    """Buffer directory or neighborhood file violates the documented layout."""


class BufferMissing(BufferError):
    """A manifest entry points at a file that does not exist."""


@dataclass(frozen=True)
class Neighborhood:
    """One sampled subgraph around one seed entity."""

    seed: int
    copy: int
    config: str
    aliases: list[int]
    labels: list[str]
    features: np.ndarray        # (n, d) float32, row i belongs to aliases[i]
    edges: list[tuple[int, int]]

    @property
    def seed_row(self) -> int:
        return self.aliases.index(self.seed)


def _split_line(line: str, what: str, path: Path) -> list[str]:
    line = line.rstrip("\n")
    if not line:
        raise BufferError(f"{path}: unexpected blank line in {what}")
    return line.split(",")


def _labeled_int(line: str, key: str, path: Path) -> int:
    parts = _split_line(line, key, path)
    if len(parts) != 2 or parts[0] != key:
        raise BufferError(f"{path}: expected '{key},<int>', got {line!r}")
    return int(parts[1])


def read_neighborhood(path: Path) -> Neighborhood:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().rstrip("\n")
        if header != MAGIC:
            raise BufferError(f"{path}: bad magic {header!r}")
        seed = _labeled_int(fh.readline(), "seed", path)
        copy = _labeled_int(fh.readline(), "copy", path)
        cfg_parts = _split_line(fh.readline(), "config", path)
        if len(cfg_parts) != 2 or cfg_parts[0] != "config":
            raise BufferError(f"{path}: missing config line")
        config = cfg_parts[1]
        n = _labeled_int(fh.readline(), "nodes", path)
        if n < 1:
            raise BufferError(f"{path}: node count {n} < 1")

        aliases: list[int] = []
        labels: list[str] = []
        rows: list[list[float]] = []
        width = -1
        for _ in range(n):
            parts = _split_line(fh.readline(), "node row", path)
            if len(parts) < 3:
                raise BufferError(f"{path}: node row too short: {parts!r}")
            aliases.append(int(parts[0]))
            labels.append(parts[1])
            vec = [float(v) for v in parts[2:]]
            if width < 0:
                width = len(vec)
            elif len(vec) != width:
                raise BufferError(f"{path}: ragged feature rows")
            rows.append(vec)

        m = _labeled_int(fh.readline(), "edges", path)
        known = set(aliases)
        edges: list[tuple[int, int]] = []
        for _ in range(m):
            parts = _split_line(fh.readline(), "edge row", path)
            if len(parts) != 2:
                raise BufferError(f"{path}: edge row {parts!r}")
            u, v = int(parts[0]), int(parts[1])
            if u not in known or v not in known:
                raise BufferError(f"{path}: edge ({u},{v}) references unknown alias")
            edges.append((u, v))
        if fh.readline() != "":
            raise BufferError(f"{path}: trailing data after edge rows")

    if seed not in known:
        raise BufferError(f"{path}: seed {seed} not among node rows")
    if len(known) != n:
        raise BufferError(f"{path}: duplicate aliases")
    feats = np.array(rows, dtype=np.float32)
    return Neighborhood(seed=seed, copy=copy, config=config, aliases=aliases,
                        labels=labels, features=feats, edges=edges)


@dataclass(frozen=True)
class Entry:
    seed: int
    copy: int
    file: str
    label: str


class BufferDir:
    """One split's buffer: manifest plus lazily loaded neighborhood files.

    Parsed copies are kept in memory by default: training revisits copies
    on every rotation and evaluation walks all of them, and a copy is a
    few MB per thousand seeds.  Pass ``cache=False`` to reread from disk.
    """

    def __init__(self, path: str | Path, cache: bool = True):
        self.path = Path(path)
        self._cache: dict[int, dict[int, Neighborhood]] | None = \
            {} if cache else None
        mpath = self.path / "manifest.json"
        if not mpath.exists():
            raise BufferMissing(f"no manifest.json under {self.path}")
        with open(mpath, encoding="ascii") as fh:
            self.manifest = json.load(fh)
        for key in ("split", "copies", "num_features", "entries"):
            if key not in self.manifest:
                raise BufferError(f"{mpath}: manifest missing {key!r}")
        self.split: str = self.manifest["split"]
        self.copies: int = int(self.manifest["copies"])
        self.num_features: int = int(self.manifest["num_features"])
        self.entries = [Entry(int(e["seed"]), int(e["copy"]), e["file"], e["label"])
                        for e in self.manifest["entries"]]
        by_copy: dict[int, list[Entry]] = {}
        for entry in self.entries:
            by_copy.setdefault(entry.copy, []).append(entry)
        self._by_copy = by_copy
        counts = {len(v) for v in by_copy.values()}
        if sorted(by_copy) != list(range(self.copies)) or len(counts) > 1:
            raise BufferError(f"{mpath}: entries do not cover {self.copies} "
                              "uniform copies")

    @property
    def seeds(self) -> list[int]:
        return [e.seed for e in self._by_copy[0]]

    def labels_by_seed(self) -> dict[int, str]:
        return {e.seed: e.label for e in self._by_copy[0]}

    def load(self, entry: Entry) -> Neighborhood:
        path = self.path / entry.file
        if not path.exists():
            raise BufferMissing(f"{path} listed in manifest but absent")
        nbh = read_neighborhood(path)
        if nbh.seed != entry.seed or nbh.copy != entry.copy:
            raise BufferError(f"{path}: file header disagrees with manifest entry")
        if entry.label and nbh.labels[nbh.seed_row] != entry.label:
            raise BufferError(f"{path}: seed row label "
                              f"{nbh.labels[nbh.seed_row]!r} disagrees with "
                              f"manifest label {entry.label!r}")
        if nbh.features.shape[1] != self.num_features:
            raise BufferError(f"{path}: {nbh.features.shape[1]} features, "
                              f"manifest says {self.num_features}")
        return nbh

    def load_copy(self, copy: int) -> dict[int, Neighborhood]:
        """All neighborhoods of one copy, keyed by seed."""
        if copy not in self._by_copy:
            raise BufferMissing(f"copy {copy} not in manifest for {self.path}")
        if self._cache is not None and copy in self._cache:
            return dict(self._cache[copy])
        loaded = {e.seed: self.load(e) for e in self._by_copy[copy]}
        if self._cache is not None:
            self._cache[copy] = loaded
        return dict(loaded)
