"""Bounded-fanout neighborhood extraction around labeled seeds.

Starting from a seed node the sampler walks the undirected graph depth by
depth. At depth k each frontier node offers its neighbors, minus every
node already explored, in the frontier, or selected at this depth; at
most n_k of them are kept (sampled without replacement when there are
more). Selected children are connected to their exploration parent.
Nodes with an extreme degree are never enumerated exhaustively; their
neighbors come from a uniform sample of incident edges.

Each (seed, copy) pair derives its own RNG from the global seed, so
buffers of repeated samples are reproducible byte for byte and can be
generated in any order.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MalformedRow, SchemaMismatch
from .store import GraphStore

NEIGHBORHOOD_VERSION = "nb1"


@dataclass(frozen=True)
class SamplerConfig:
    k_max: int = 2
    fanouts: tuple[int, ...] = (10, 5)
    high_degree_threshold: int = 100_000
    edge_sample_cap: int = 100_000
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        object.__setattr__(self, "fanouts", tuple(self.fanouts))
        if len(self.fanouts) != self.k_max:
            raise ValueError("need one fanout per depth")
        if any(f < 1 for f in self.fanouts):
            raise ValueError("fanouts must be >= 1")
        if self.edge_sample_cap < 1 or self.high_degree_threshold < 1:
            raise ValueError("degree fallback bounds must be >= 1")


def config_hash(cfg: SamplerConfig) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True).encode("ascii")
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SampledNeighborhood:
    seed: int
    nodes: set[int]
    edges: set[tuple[int, int]]   # canonical (low, high) pairs


def child_rng(rng_seed: int, seed_alias: int, copy: int) -> random.Random:
    """Independent RNG stream per (seed, copy)."""
    digest = hashlib.sha256(
        f"{rng_seed}:{seed_alias}:{copy}".encode("ascii")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def neighbors(alias: int, cfg: SamplerConfig, store: GraphStore,
              rng: random.Random | None = None) -> set[int]:
    """Undirected counterparty set, degree-capped via edge sampling."""
    degree = store.degree(alias)
    if degree > cfg.high_degree_threshold:
        rng = rng if rng is not None else random.Random(cfg.rng_seed)
        records = store.random_edge_sample(alias, cfg.edge_sample_cap, rng)
        return {rec.b if rec.a == alias else rec.a for rec in records}
    return set(int(x) for x in store.neighbor_aliases(alias))


def sample_neighborhood(seed: int, cfg: SamplerConfig, store: GraphStore,
                        rng: random.Random | None = None,
                        ) -> SampledNeighborhood:
    if rng is None:
        rng = child_rng(cfg.rng_seed, seed, 0)
    explored: set[int] = set()
    frontier: list[int] = [seed]
    edges: set[tuple[int, int]] = set()

    for depth in range(cfg.k_max):
        fanout = cfg.fanouts[depth]
        frontier_set = set(frontier)
        selected: set[int] = set()
        next_frontier: list[int] = []
        for node in frontier:
            cand = neighbors(node, cfg, store, rng)
            cand -= explored
            cand -= frontier_set
            cand -= selected
            ordered = sorted(cand)
            if len(ordered) > fanout:
                ordered = rng.sample(ordered, fanout)
            for child in ordered:
                edges.add((node, child) if node < child else (child, node))
                selected.add(child)
                next_frontier.append(child)
        explored |= frontier_set
        frontier = next_frontier

    nodes = explored | set(frontier)
    return SampledNeighborhood(seed, nodes, edges)


# -- persistence ------------------------------------------------------------


def write_neighborhood_file(path, nb: SampledNeighborhood, copy: int,
                            cfg_digest: str, matrix: np.ndarray,
                            labels: Sequence[str]) -> None:
    """One sampled neighborhood with feature rows and labels inline."""
    order = sorted(nb.nodes)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# neighborhood {NEIGHBORHOOD_VERSION}\n")
        fh.write(f"seed,{nb.seed}\n")
        fh.write(f"copy,{copy}\n")
        fh.write(f"config,{cfg_digest}\n")
        fh.write(f"nodes,{len(order)}\n")
        for alias in order:
            row = ",".join(repr(float(x)) for x in matrix[alias])
            fh.write(f"{alias},{labels[alias]},{row}\n")
        pairs = sorted(nb.edges)
        fh.write(f"edges,{len(pairs)}\n")
        for u, v in pairs:
            fh.write(f"{u},{v}\n")


def read_neighborhood_file(path) -> dict:
    """Parse one neighborhood file into plain Python structures."""
    with open(path, encoding="utf-8") as fh:
        magic = fh.readline().strip()
        if magic != f"# neighborhood {NEIGHBORHOOD_VERSION}":
            raise SchemaMismatch(f"{path}: bad magic line {magic!r}")

        def labeled(expect: str) -> str:
            line = fh.readline().strip()
            tag, _, value = line.partition(",")
            if tag != expect:
                raise MalformedRow(f"{path}: expected {expect}, got {line!r}")
            return value

        seed = int(labeled("seed"))
        copy = int(labeled("copy"))
        digest = labeled("config")
        n = int(labeled("nodes"))
        aliases: list[int] = []
        labels: list[str] = []
        rows: list[list[float]] = []
        for _ in range(n):
            parts = fh.readline().rstrip("\n").split(",")
            aliases.append(int(parts[0]))
            labels.append(parts[1])
            rows.append([float(x) for x in parts[2:]])
        m = int(labeled("edges"))
        edges = []
        for _ in range(m):
            u, v = fh.readline().split(",")
            edges.append((int(u), int(v)))
    return {
        "seed": seed, "copy": copy, "config": digest,
        "aliases": aliases, "labels": labels,
        "features": np.array(rows, dtype=np.float64) if rows else
        np.empty((0, 0)),
        "edges": edges,
    }


def build_buffer(seeds: Iterable[int], cfg: SamplerConfig, store: GraphStore,
                 matrix: np.ndarray, labels: Sequence[str], out_dir,
                 split: str, copies: int = 12) -> dict:
    """Sample ``copies`` neighborhoods per seed and write them plus a manifest.

    ``matrix`` holds one normalized feature row per alias; ``labels`` one
    category string ('' = unlabeled) per alias.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digest = config_hash(cfg)
    entries = []
    for seed in seeds:
        for copy in range(copies):
            rng = child_rng(cfg.rng_seed, seed, copy)
            nb = sample_neighborhood(seed, cfg, store, rng)
            name = f"s{seed}_c{copy}.nbr"
            write_neighborhood_file(out_dir / name, nb, copy, digest,
                                    matrix, labels)
            entries.append({"seed": int(seed), "copy": copy, "file": name,
                            "label": labels[seed]})
    manifest = {
        "version": NEIGHBORHOOD_VERSION,
        "split": split,
        "copies": copies,
        "config": asdict(cfg),
        "config_hash": digest,
        "num_features": int(matrix.shape[1]),
        "entries": entries,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def make_splits(labels_by_alias: Mapping[int, str],
                fractions: tuple[float, float, float] = (0.4, 0.3, 0.3),
                seed: int = 0) -> dict[str, list[int]]:
    """Stratified train/validation/test split of labeled aliases.

    Within each class, counts follow the fractions by largest remainder;
    a single-seed class goes to train. Assignment is shuffled per class
    with the given seed and is independent of dict iteration order.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    by_class: dict[str, list[int]] = {}
    for alias in sorted(labels_by_alias):
        label = labels_by_alias[alias]
        if label:
            by_class.setdefault(label, []).append(alias)

    out: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    rng = random.Random(seed)
    for label in sorted(by_class):
        members = by_class[label]
        rng.shuffle(members)
        c = len(members)
        raw = [f * c for f in fractions]
        counts = [int(x) for x in raw]
        short = c - sum(counts)
        # Distribute leftovers by largest fractional part, ties to the
        # earlier split so train fills first.
        order = sorted(range(3), key=lambda i: (-(raw[i] - counts[i]), i))
        for i in range(short):
            counts[order[i]] += 1
        if counts[0] == 0:
            # Every class must be trainable.
            donor = 1 if counts[1] > 0 else 2
            counts[donor] -= 1
            counts[0] += 1
        a, b = counts[0], counts[0] + counts[1]
        out["train"].extend(members[:a])
        out["val"].extend(members[a:b])
        out["test"].extend(members[b:])
    for part in out.values():
        part.sort()
    return out
